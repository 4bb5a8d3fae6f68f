"""Flat array view over a list of networks.

The E-step, the M-steps and the exact oracle all work on the same stacked
layout: edges of every network concatenated in network order, with triads
and per-edge triad adjacency expressed in global edge indices.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidNetworkError
from .graph import edge_template_values, enumerate_triads


@dataclass(frozen=True, eq=False)
class Corpus:
    networks: tuple
    triads: tuple
    templates: tuple
    edge_ptr: np.ndarray  # network t owns edges edge_ptr[t]:edge_ptr[t+1]
    triad_ptr: np.ndarray
    x_fwd: np.ndarray
    x_bwd: np.ndarray
    features: np.ndarray  # (n_edges, n_templates)
    triad_edges: np.ndarray  # (n_triads, 3) global edge ids (ij, jk, ik)
    adj_ptr: np.ndarray
    adj_a: np.ndarray
    adj_b: np.ndarray

    @property
    def n_networks(self):
        return len(self.networks)

    @property
    def n_edges(self):
        return int(self.edge_ptr[-1])

    @property
    def n_triads(self):
        return int(self.triad_ptr[-1])

    @property
    def vocab_size(self):
        return self.x_fwd.shape[1]

    def edge_network(self):
        return np.repeat(np.arange(self.n_networks), np.diff(self.edge_ptr))

    def triad_network(self):
        return np.repeat(np.arange(self.n_networks), np.diff(self.triad_ptr))

    def split_rows(self, arr):
        """Cut an edge-aligned array into per-network pieces."""
        return [arr[self.edge_ptr[t] : self.edge_ptr[t + 1]] for t in range(self.n_networks)]


def build_corpus(networks, templates=("adamic_adar",), triads=None, vocab_size=None):
    networks = tuple(networks)
    if triads is None:
        triads = tuple(enumerate_triads(net) for net in networks)
    else:
        triads = tuple(triads)
    if vocab_size is None:
        sizes = {net.vocab_size for net in networks if len(net.edges)}
        if len(sizes) > 1:
            raise InvalidNetworkError(f"networks disagree on vocabulary size: {sorted(sizes)}")
        vocab_size = sizes.pop() if sizes else (networks[0].vocab_size if networks else 0)

    n_edges = [len(net.edges) for net in networks]
    edge_ptr = np.concatenate([[0], np.cumsum(n_edges)]).astype(np.int64)
    triad_ptr = np.concatenate([[0], np.cumsum([len(tr) for tr in triads])]).astype(np.int64)

    def stack(rows):
        rows = [r for r in rows if r.shape[0]]
        if not rows:
            return np.zeros((0, vocab_size), dtype=np.int64)
        return np.vstack(rows).astype(np.int64)

    x_fwd = stack([net.x_fwd for net in networks])
    x_bwd = stack([net.x_bwd for net in networks])
    feats = [edge_template_values(net, templates) for net in networks]
    features = np.vstack(feats) if feats else np.zeros((0, len(templates)))
    triad_edges = np.vstack(
        [tr.edge_ids + edge_ptr[t] for t, tr in enumerate(triads)] or [np.zeros((0, 3), np.int64)]
    ).astype(np.int64)

    # For every edge, the two other edges of each triad it belongs to.
    pairs = [[] for _ in range(int(edge_ptr[-1]))]
    for a, b, c in triad_edges:
        pairs[a].append((b, c))
        pairs[b].append((a, c))
        pairs[c].append((a, b))
    adj_ptr = np.zeros(len(pairs) + 1, dtype=np.int64)
    adj_ptr[1:] = np.cumsum([len(p) for p in pairs])
    flat = [pq for p in pairs for pq in p]
    adj_a = np.array([p[0] for p in flat], dtype=np.int64)
    adj_b = np.array([p[1] for p in flat], dtype=np.int64)

    return Corpus(
        networks, triads, tuple(templates), edge_ptr, triad_ptr, x_fwd, x_bwd,
        features, triad_edges, adj_ptr, adj_a, adj_b,
    )
