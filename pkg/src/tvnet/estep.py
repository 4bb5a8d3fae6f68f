"""Mean-field E-step and the tractable part of the variational bound."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .corpus import build_corpus
from .errors import NumericalError
from .labels import BINARY

ESTEP_TOL = 1e-8
ESTEP_MAX_SWEEPS = 200


@dataclass(frozen=True, eq=False)
class EdgeBeliefs:
    """q_ij(y) for every edge of one network, rows aligned with ``edges``."""

    network_id: str
    edges: tuple
    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        if q.shape[0] != len(self.edges):
            raise ValueError("belief rows do not match edges")
        if q.size and (np.any(q < 0) or np.max(np.abs(q.sum(axis=1) - 1.0)) > 1e-12):
            raise ValueError("beliefs must be probability vectors")

    @classmethod
    def uniform(cls, net, n_labels=2):
        return cls(net.network_id, net.edges, np.full((len(net.edges), n_labels), 1.0 / n_labels))

    def __getitem__(self, edge):
        return self.q[self.edges.index(tuple(edge))]

    def argmax(self):
        return np.argmax(self.q, axis=1)


@dataclass(frozen=True)
class BoundReport:
    expected_loglik_content: float
    expected_logprior_unnormalized: float
    entropy: float

    @property
    def bound_excluding_logZ(self):
        return self.expected_loglik_content + self.expected_logprior_unnormalized + self.entropy

    def __add__(self, other):
        return BoundReport(
            self.expected_loglik_content + other.expected_loglik_content,
            self.expected_logprior_unnormalized + other.expected_logprior_unnormalized,
            self.entropy + other.entropy,
        )


def _log_theta(theta):
    with np.errstate(divide="ignore"):
        return np.log(theta)


def content_loglik(x_fwd, x_bwd, content):
    """(n_edges, L) matrix of x_fwd . log theta_fwd[y] + x_bwd . log theta_bwd[y].

    A positive count on a zero-probability term gives -inf, never nan.
    """
    out = np.zeros((x_fwd.shape[0], content.n_labels))
    for x, theta in ((x_fwd, content.theta_fwd), (x_bwd, content.theta_bwd)):
        logt = _log_theta(theta)
        zero = theta <= 0
        out += x @ np.where(zero, 0.0, logt).T
        impossible = (x @ zero.T.astype(np.int64)) > 0
        out[impossible] = -np.inf
    return out


def unary_scores(corpus, content, struct):
    """Content log-likelihood plus dyad-feature score for every edge and label."""
    return content_loglik(corpus.x_fwd, corpus.x_bwd, content) + corpus.features @ struct.eta


def _fail(corpus, q, unary, edge, content, struct):
    t = int(np.searchsorted(corpus.edge_ptr, edge, side="right") - 1)
    local = edge - int(corpus.edge_ptr[t])
    net = corpus.networks[t]
    diag = {
        "network": net.network_id,
        "edge": net.edges[local],
        "unary": unary[edge].tolist(),
        "eta": struct.eta.tolist(),
        "beta": struct.beta.tolist(),
        "c": struct.c,
        "theta_min": float(min(content.theta_fwd.min(), content.theta_bwd.min())),
    }
    raise NumericalError(f"non-finite E-step score on edge {net.edges[local]} of {net.network_id}: {diag}", diag)


def run_estep(corpus, q, content, struct, labelset=BINARY, tol=ESTEP_TOL,
              max_sweeps=ESTEP_MAX_SWEEPS, threads=1):
    """Update ``q`` in place until every network converges.

    Networks are independent given the parameters, so each converges on its
    own; results do not depend on ``threads``.  Returns sweeps per network.
    """
    unary = unary_scores(corpus, content, struct)
    B = struct.beta_tensor(labelset)
    ptr = corpus.edge_ptr

    def one(t):
        return _kernels.converge(q, unary, B, corpus.adj_ptr, corpus.adj_a, corpus.adj_b,
                                 ptr[t], ptr[t + 1], tol, max_sweeps)

    if threads > 1 and corpus.n_networks > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(corpus.n_networks)))
    else:
        results = [one(t) for t in range(corpus.n_networks)]
    for sweeps, bad in results:
        if bad >= 0:
            _fail(corpus, q, unary, bad, content, struct)
    return np.array([r[0] for r in results])


def sweep_once(corpus, q, content, struct, labelset=BINARY):
    """A single in-place pass over all edges; returns the max change."""
    unary = unary_scores(corpus, content, struct)
    B = struct.beta_tensor(labelset)
    delta, bad = _kernels.sweep(q, unary, B, corpus.adj_ptr, corpus.adj_a, corpus.adj_b, 0, corpus.n_edges)
    if bad >= 0:
        _fail(corpus, q, unary, bad, content, struct)
    return delta


def expected_triad_counts(q, triad_edges, type_tensor):
    """(n_triads, K) expected count of each triad type under q."""
    if len(triad_edges) == 0:
        return np.zeros((0, type_tensor.shape[-1]))
    qa, qb, qc = (q[triad_edges[:, k]] for k in range(3))
    return np.einsum("ta,tb,tc,abck->tk", qa, qb, qc, type_tensor)


def _xlogy(q, v):
    return np.where(q > 0, q * np.where(q > 0, v, 0.0), 0.0)


def bound_terms(corpus, q, content, struct, labelset=BINARY):
    """Per-network (content, prior, entropy) arrays."""
    from .graph import triad_type_tensor

    ll = content_loglik(corpus.x_fwd, corpus.x_bwd, content)
    edge_net = corpus.edge_network()
    n = corpus.n_networks
    content_e = _xlogy(q, ll).sum(axis=1)
    prior_e = (q * (corpus.features @ struct.eta)).sum(axis=1)
    with np.errstate(divide="ignore"):
        ent_e = -_xlogy(q, np.log(q)).sum(axis=1)
    tri = expected_triad_counts(q, corpus.triad_edges, triad_type_tensor(labelset)) @ struct.beta
    terms = []
    for values, owner in ((content_e, edge_net), (prior_e, edge_net), (ent_e, edge_net)):
        terms.append(np.bincount(owner, weights=values, minlength=n))
    terms[1] = terms[1] + np.bincount(corpus.triad_network(), weights=tri, minlength=n)
    return terms


def corpus_bound(corpus, q, content, struct, labelset=BINARY):
    content_t, prior_t, ent_t = bound_terms(corpus, q, content, struct, labelset)
    return BoundReport(float(np.sum(content_t)), float(np.sum(prior_t)), float(np.sum(ent_t)))


# Single-network API -------------------------------------------------------


def compute_bound(net, triads, beliefs, content, struct, labelset=BINARY):
    corpus = build_corpus([net], struct.templates, [triads], content.vocab_size)
    return corpus_bound(corpus, beliefs.q, content, struct, labelset)


def estep_update_edge(net, triads, beliefs, content, struct, edge, labelset=BINARY):
    """Closed-form coordinate update for one edge; returns the new q_ij.

    Written directly from the update formula (no compiled kernel) so it can
    serve as a reference for the sweep implementation.
    """
    from .graph import edge_template_values

    e = net.find_edge(*edge)
    ll = content_loglik(net.x_fwd[e : e + 1], net.x_bwd[e : e + 1], content)[0]
    feats = edge_template_values(net, struct.templates)[e]
    score = ll + feats @ struct.eta
    B = struct.beta_tensor(labelset)
    for t in triads.by_edge[e]:
        others = [k for k in triads.edge_ids[t] if k != e]
        qa, qb = beliefs.q[others[0]], beliefs.q[others[1]]
        score = score + np.einsum("yab,a,b->y", B, qa, qb)
    if np.any(np.isnan(score)) or np.any(score == np.inf) or np.all(score == -np.inf):
        raise NumericalError(f"non-finite E-step score {score.tolist()} on edge {edge}",
                             {"edge": edge, "score": score.tolist()})
    score = score - score.max()
    p = np.exp(score)
    return p / p.sum()


def estep_sweep(net, triads, beliefs, content, struct, labelset=BINARY):
    corpus = build_corpus([net], struct.templates, [triads], content.vocab_size)
    q = beliefs.q.copy()
    sweep_once(corpus, q, content, struct, labelset)
    new = EdgeBeliefs(net.network_id, net.edges, q)
    return new, corpus_bound(corpus, q, content, struct, labelset)
