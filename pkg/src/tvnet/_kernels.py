"""Compiled inner loops for coordinate-ascent sweeps and Gibbs sampling."""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def edge_scores(q, unary, B, adj_ptr, adj_a, adj_b, e, out):
    n = q.shape[1]
    for y in range(n):
        out[y] = unary[e, y]
    for p in range(adj_ptr[e], adj_ptr[e + 1]):
        a = adj_a[p]
        b = adj_b[p]
        for y in range(n):
            acc = 0.0
            for y1 in range(n):
                qa = q[a, y1]
                for y2 in range(n):
                    acc += qa * q[b, y2] * B[y, y1, y2]
            out[y] += acc


@numba.njit(cache=True, nogil=True)
def sweep(q, unary, B, adj_ptr, adj_a, adj_b, e0, e1):
    """One in-place pass over edges e0..e1-1.

    Returns (max L-inf change, first failing edge or -1).
    """
    n = q.shape[1]
    s = np.empty(n)
    worst = 0.0
    for e in range(e0, e1):
        edge_scores(q, unary, B, adj_ptr, adj_a, adj_b, e, s)
        m = -np.inf
        for y in range(n):
            if np.isnan(s[y]) or s[y] == np.inf:
                return worst, e
            if s[y] > m:
                m = s[y]
        if m == -np.inf:
            return worst, e
        z = 0.0
        for y in range(n):
            s[y] = np.exp(s[y] - m)
            z += s[y]
        for y in range(n):
            v = s[y] / z
            d = abs(v - q[e, y])
            if d > worst:
                worst = d
            q[e, y] = v
    return worst, -1


@numba.njit(cache=True, nogil=True)
def converge(q, unary, B, adj_ptr, adj_a, adj_b, e0, e1, tol, max_sweeps):
    """Sweep until the largest change drops below tol.

    Returns (sweeps done, first failing edge or -1).
    """
    for k in range(max_sweeps):
        delta, bad = sweep(q, unary, B, adj_ptr, adj_a, adj_b, e0, e1)
        if bad >= 0:
            return k + 1, bad
        if delta < tol:
            return k + 1, -1
    return max_sweeps, -1


@numba.njit(cache=True, nogil=True)
def gibbs(labels, unary, B, adj_ptr, adj_a, adj_b, uniforms, burn_in, record):
    """Single-site Gibbs sweeps over a hard labeling.

    ``uniforms`` has one row per sweep and one column per edge.  Label
    counts from sweeps after ``burn_in`` accumulate into ``record``.
    """
    n_edges = labels.shape[0]
    n = unary.shape[1]
    s = np.empty(n)
    for t in range(uniforms.shape[0]):
        for e in range(n_edges):
            for y in range(n):
                s[y] = unary[e, y]
            for p in range(adj_ptr[e], adj_ptr[e + 1]):
                s_a = labels[adj_a[p]]
                s_b = labels[adj_b[p]]
                for y in range(n):
                    s[y] += B[y, s_a, s_b]
            m = s.max()
            z = 0.0
            for y in range(n):
                s[y] = np.exp(s[y] - m)
                z += s[y]
            u = uniforms[t, e] * z
            acc = 0.0
            pick = n - 1
            for y in range(n):
                acc += s[y]
                if u < acc:
                    pick = y
                    break
            labels[e] = pick
        if t >= burn_in:
            for e in range(n_edges):
                record[e, labels[e]] += 1
    return labels
