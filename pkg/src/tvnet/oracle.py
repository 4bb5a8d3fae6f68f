"""Brute-force inference on small graphs and a generative sampler.

Everything here is exact (or a plain MCMC sampler) and exists to check the
approximate machinery in :mod:`tvnet.estep` and :mod:`tvnet.mstep`.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .corpus import build_corpus
from .errors import EnumerationLimitError
from .estep import content_loglik
from .graph import Network, enumerate_triads
from .labels import BINARY
from .params import ContentParams, StructParams

MAX_EXACT_EDGES = 20
EXACT_SAMPLING_EDGES = 16
GIBBS_BURN_IN = 1000
_CHUNK = 1 << 15


@dataclass(frozen=True, eq=False)
class ExactResult:
    logZ: float
    marginals: np.ndarray
    map_labeling: tuple


def _unary(net, triads, struct, content):
    corpus = build_corpus([net], struct.templates, [triads], net.vocab_size)
    unary = corpus.features @ struct.eta
    if content is not None:
        unary = unary + content_loglik(net.x_fwd, net.x_bwd, content)
    return unary


def _labelings(n_edges, n_labels, start, stop):
    codes = np.arange(start, stop, dtype=np.int64)
    powers = n_labels ** np.arange(n_edges - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] // powers[None, :]) % n_labels).astype(np.int64)


def exact_partition(net, triads, struct, labelset=BINARY, content=None, max_edges=MAX_EXACT_EDGES):
    """Enumerate every labeling of ``net``.

    Without ``content`` this is the prior: logZ is its log normalizer and
    the marginals are prior marginals.  With ``content`` the weights are the
    joint P0(y) P(x | y), so logZ is the log evidence (up to multinomial
    coefficients) and the marginals are exact posteriors.  The MAP labeling
    breaks ties toward the lexicographically smallest labeling.
    """
    n_edges = len(net.edges)
    if n_edges > max_edges:
        raise EnumerationLimitError(f"exact enumeration is capped at {max_edges} edges; got {n_edges}")
    n_labels = len(labelset)
    unary = _unary(net, triads, struct, content)
    B = struct.beta_tensor(labelset)
    tri = triads.edge_ids
    total = n_labels ** n_edges

    chunk_lse = []
    marg_acc = []
    best = (-np.inf, 0)
    cols = np.arange(n_edges)
    for start in range(0, total, _CHUNK):
        stop = min(total, start + _CHUNK)
        lab = _labelings(n_edges, n_labels, start, stop)
        score = unary[cols, lab].sum(axis=1) if n_edges else np.zeros(stop - start)
        if len(tri):
            score = score + B[lab[:, tri[:, 0]], lab[:, tri[:, 1]], lab[:, tri[:, 2]]].sum(axis=1)
        k = int(np.argmax(score))
        if score[k] > best[0]:
            best = (score[k], start + k)
        lse = logsumexp(score)
        chunk_lse.append(lse)
        w = np.exp(score - lse)
        m = np.zeros((n_edges, n_labels))
        for y in range(n_labels):
            m[:, y] = w @ (lab == y)
        marg_acc.append(m)

    chunk_lse = np.array(chunk_lse)
    logZ = float(logsumexp(chunk_lse))
    scale = np.exp(chunk_lse - logZ)
    marginals = sum(s * m for s, m in zip(scale, marg_acc))
    if n_edges:
        marginals = marginals / marginals.sum(axis=1, keepdims=True)
    map_lab = tuple(int(v) for v in _labelings(n_edges, n_labels, best[1], best[1] + 1)[0]) if n_edges else ()
    return ExactResult(logZ, marginals, map_lab)


def direct_partition(net, triads, struct, labelset=BINARY, content=None):
    """Z as a plain sum of exp(score) over labelings, one labeling at a time."""
    unary = _unary(net, triads, struct, content)
    B = struct.beta_tensor(labelset)
    terms = []
    for lab in itertools.product(range(len(labelset)), repeat=len(net.edges)):
        s = math.fsum(unary[e, y] for e, y in enumerate(lab))
        s += math.fsum(B[lab[a], lab[b], lab[c]] for a, b, c in triads.edge_ids)
        terms.append(math.exp(s))
    return math.fsum(terms)


def _gibbs_inputs(net, triads, struct, labelset, content):
    corpus = build_corpus([net], struct.templates, [triads], net.vocab_size)
    unary = corpus.features @ struct.eta
    if content is not None:
        unary = unary + content_loglik(net.x_fwd, net.x_bwd, content)
    return corpus, np.ascontiguousarray(unary), struct.beta_tensor(labelset)


def gibbs_run(net, triads, struct, seed, sweeps, burn_in=GIBBS_BURN_IN, labelset=BINARY, content=None):
    """Run ``sweeps`` Gibbs sweeps from a uniform random start.

    Returns (final labeling, per-edge label counts over post-burn-in sweeps).
    """
    rng = np.random.default_rng(seed)
    corpus, unary, B = _gibbs_inputs(net, triads, struct, labelset, content)
    n_edges = len(net.edges)
    labels = rng.integers(0, len(labelset), size=n_edges).astype(np.int64)
    uniforms = rng.random((sweeps, n_edges))
    record = np.zeros((n_edges, len(labelset)), dtype=np.int64)
    _kernels.gibbs(labels, unary, B, corpus.adj_ptr, corpus.adj_a, corpus.adj_b, uniforms, burn_in, record)
    return labels, record


def sample_labeling(net, triads, struct, seed, labelset=BINARY, content=None,
                    exact_max_edges=EXACT_SAMPLING_EDGES, burn_in=GIBBS_BURN_IN):
    """Draw one labeling from the prior (or the posterior given ``content``).

    Small graphs use an exact categorical draw over all labelings; larger
    ones return the state after ``burn_in`` Gibbs sweeps.
    """
    n_edges = len(net.edges)
    if n_edges <= exact_max_edges:
        rng = np.random.default_rng(seed)
        n_labels = len(labelset)
        unary = _unary(net, triads, struct, content)
        B = struct.beta_tensor(labelset)
        lab = _labelings(n_edges, n_labels, 0, n_labels ** n_edges)
        score = unary[np.arange(n_edges), lab].sum(axis=1) if n_edges else np.zeros(1)
        tri = triads.edge_ids
        if len(tri):
            score = score + B[lab[:, tri[:, 0]], lab[:, tri[:, 1]], lab[:, tri[:, 2]]].sum(axis=1)
        p = np.exp(score - logsumexp(score))
        k = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        return tuple(int(v) for v in lab[min(k, len(p) - 1)])
    labels, _ = gibbs_run(net, triads, struct, seed, burn_in, burn_in, labelset, content)
    return tuple(int(v) for v in labels)


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic corpus drawn from the generative model.

    Give either ``n_edges`` or ``edge_density``.  ``vocab`` names the
    content symbols; its length must match theta.
    """

    n_networks: int
    n_nodes: int
    struct: StructParams
    content: ContentParams
    n_edges: int = None
    edge_density: float = None
    tokens_mean: float = 20.0
    seed: int = 0
    labelset: object = BINARY
    vocab: tuple = None
    node_prefix: str = "c"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        max_edges = self.n_nodes * (self.n_nodes - 1) // 2
        if self.n_edges is None:
            if self.edge_density is None:
                raise ValueError("give n_edges or edge_density")
            self.n_edges = int(round(self.edge_density * max_edges))
        if not 0 <= self.n_edges <= max_edges:
            raise ValueError(f"{self.n_edges} edges impossible on {self.n_nodes} nodes")
        if self.vocab is None:
            self.vocab = tuple(f"w{k}" for k in range(self.content.vocab_size))
        if len(self.vocab) != self.content.vocab_size:
            raise ValueError("vocab length does not match theta")


@dataclass(frozen=True, eq=False)
class SyntheticNetwork:
    network: Network
    labels: tuple


def random_graph_edges(n_nodes, n_edges, rng, prefix="c"):
    width = len(str(n_nodes - 1))
    nodes = [f"{prefix}{k:0{width}d}" for k in range(n_nodes)]
    pairs = [(a, b) for a in range(n_nodes) for b in range(a + 1, n_nodes)]
    pick = np.sort(rng.choice(len(pairs), size=n_edges, replace=False))
    return nodes, [(nodes[pairs[k][0]], nodes[pairs[k][1]]) for k in pick]


def generate_corpus(spec):
    """Sample networks, labelings from the prior, then content given labels.

    Each directed side of a dyad gets a Poisson(tokens_mean) number of
    tokens drawn from that label's multinomial; the token order within a
    dyad is shuffled so that token-order splits are unbiased.
    """
    root = np.random.SeedSequence(spec.seed)
    out = []
    vocab_size = spec.content.vocab_size
    for t, child in enumerate(root.spawn(spec.n_networks)):
        g_seed, l_seed, x_seed = child.spawn(3)
        rng = np.random.default_rng(g_seed)
        nodes, edges = random_graph_edges(spec.n_nodes, spec.n_edges, rng, spec.node_prefix)
        zero = np.zeros((len(edges), vocab_size), dtype=np.int64)
        skeleton = Network(f"film{t:04d}", nodes, edges, zero, zero)
        triads = enumerate_triads(skeleton)
        labels = sample_labeling(skeleton, triads, spec.struct, np.random.default_rng(l_seed), spec.labelset)

        rng = np.random.default_rng(x_seed)
        x_fwd = np.zeros_like(zero)
        x_bwd = np.zeros_like(zero)
        tokens = []
        for e, y in enumerate(labels):
            seq = []
            for d, (x, theta) in enumerate(((x_fwd, spec.content.theta_fwd), (x_bwd, spec.content.theta_bwd))):
                n = rng.poisson(spec.tokens_mean) if spec.tokens_mean > 0 else 0
                words = rng.choice(vocab_size, size=n, p=theta[y]) if n else np.zeros(0, dtype=np.int64)
                np.add.at(x[e], words, 1)
                seq.extend((d, int(w)) for w in words)
            order = rng.permutation(len(seq))
            tokens.append([seq[k] for k in order])
        net = Network(skeleton.network_id, nodes, edges, x_fwd, x_bwd, tokens)
        out.append(SyntheticNetwork(net, tuple(labels)))
    return out
