"""M-steps and the outer EM loop.

Content parameters have a closed form.  Structural weights (eta, beta) and
the log-partition offset c are fit by noise-contrastive estimation: the
expected log unnormalized prior under Q stands in for the unobserved true
labeling, and one noise labeling per network is drawn edge-by-edge from the
corpus-wide label distribution under Q.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .corpus import build_corpus
from .errors import NumericalError, ParameterError
from .estep import (
    ESTEP_MAX_SWEEPS,
    ESTEP_TOL,
    EdgeBeliefs,
    corpus_bound,
    expected_triad_counts,
    run_estep,
)
from .graph import triad_type_tensor
from .labels import BINARY
from .params import ContentParams, StructParams, TyingScheme, init_params, tie_groups

log = logging.getLogger(__name__)

STREAM_INIT = 0
STREAM_NOISE = 1
STREAM_SPLIT = 2
STREAM_SIM = 3


def substream(seed, *path):
    """Deterministic child seed for a named purpose (init, noise, ...)."""
    return np.random.SeedSequence([int(seed), *[int(p) for p in path]])


# Content ------------------------------------------------------------------


def expected_counts(corpus, q):
    """(2, L, V) expected counts per direction and label."""
    return np.stack([q.T @ corpus.x_fwd, q.T @ corpus.x_bwd]).astype(float)


def content_from_counts(counts, tying, labelset=BINARY, alpha=0.1):
    theta = np.zeros_like(counts)
    for group in tie_groups(tying, labelset):
        pooled = sum(counts[d, y] for d, y in group) + alpha
        total = pooled.sum()
        if not total > 0:
            raise ParameterError(
                f"label {labelset.labels[group[0][1]]!r} has no expected counts and alpha=0; "
                "multinomial undefined"
            )
        row = pooled / total
        for d, y in group:
            theta[d, y] = row
    return ContentParams(theta[0], theta[1], alpha)


def mstep_content(networks, beliefs, labelset=BINARY, tying=TyingScheme.SYMMETRIC, alpha=0.1):
    """theta_y proportional to alpha + sum_ij q_ij(y) x_ij, pooled over tied slots."""
    corpus = build_corpus(networks)
    q = np.vstack([b.q for b in beliefs]) if beliefs else np.zeros((0, len(labelset)))
    return content_from_counts(expected_counts(corpus, q), tying, labelset, alpha)


# Expected log prior -------------------------------------------------------


def expected_log_unnormalized_prior(net, triads, beliefs, struct, labelset=BINARY):
    corpus = build_corpus([net], struct.templates, [triads], net.vocab_size)
    q = beliefs.q
    edge_part = float(np.sum(q * (corpus.features @ struct.eta)))
    tri = expected_triad_counts(q, corpus.triad_edges, triad_type_tensor(labelset))
    return edge_part + float(np.sum(tri @ struct.beta))


# Noise --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NoiseSample:
    """Noise labelings, ``labelings[t]`` of shape (noise_per_true, n_edges_t).

    ``expected_log_noise`` is E_Q[log P_n(y)] summed over the corpus, i.e.
    the number of edges times the negative entropy of ``empirical_dist``.
    """

    labelings: tuple
    empirical_dist: np.ndarray
    expected_log_noise: float


def empirical_distribution(q):
    if len(q) == 0:
        return np.full(q.shape[1], 1.0 / q.shape[1])
    p = q.sum(axis=0)
    return p / p.sum()


def _sample_noise_flat(corpus, q, seed, noise_per_true=1):
    p = empirical_distribution(q)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(p)
    cum[-1] = 1.0
    labelings = []
    for t in range(corpus.n_networks):
        n_edges = int(corpus.edge_ptr[t + 1] - corpus.edge_ptr[t])
        u = rng.random((noise_per_true, n_edges))
        labelings.append(np.searchsorted(cum, u, side="right").astype(np.int64))
    with np.errstate(divide="ignore"):
        logp = np.where(p > 0, np.log(p), 0.0)
    return NoiseSample(tuple(labelings), p, float(len(q) * np.dot(p, logp)))


def sample_noise(networks, beliefs, seed, noise_per_true=1):
    corpus = build_corpus(networks)
    q = np.vstack([b.q for b in beliefs]) if beliefs else np.zeros((0, 2))
    return _sample_noise_flat(corpus, q, seed, noise_per_true)


# NCE ----------------------------------------------------------------------


@dataclass(frozen=True)
class NceConfig:
    noise_per_true: int = 1
    memory: int = 10
    max_iter: int = 100
    gtol: float = 1e-6
    l2: float = 1.0

    def __post_init__(self):
        if self.noise_per_true < 1:
            raise ValueError("noise_per_true must be at least 1")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")


@dataclass(frozen=True, eq=False)
class NceProblem:
    """NCE as logistic regression on fixed per-labeling feature rows.

    score = phi . w + offset, with w the full structural vector (eta, beta, c).
    Data rows use expectations under Q; noise rows score concrete labelings.
    """

    phi_data: np.ndarray
    off_data: np.ndarray
    phi_noise: np.ndarray
    off_noise: np.ndarray

    def objective_and_gradient(self, w):
        s_d = self.phi_data @ w + self.off_data
        s_n = self.phi_noise @ w + self.off_noise
        obj = math.fsum(log_expit(s_d)) + math.fsum(log_expit(-s_n))
        grad = expit(-s_d) @ self.phi_data - expit(s_n) @ self.phi_noise
        return obj, grad


def _labeling_features(corpus, t, lab, n_labels, type_tensor):
    """Feature row of one concrete labeling of network t (without the c entry)."""
    e0, e1 = corpus.edge_ptr[t], corpus.edge_ptr[t + 1]
    onehot = np.zeros((e1 - e0, n_labels))
    onehot[np.arange(e1 - e0), lab] = 1.0
    eta_part = corpus.features[e0:e1].T @ onehot
    t0, t1 = corpus.triad_ptr[t], corpus.triad_ptr[t + 1]
    tri = corpus.triad_edges[t0:t1] - e0
    counts = np.zeros(type_tensor.shape[-1])
    if len(tri):
        counts = type_tensor[lab[tri[:, 0]], lab[tri[:, 1]], lab[tri[:, 2]]].sum(axis=0)
    return np.concatenate([eta_part.ravel(), counts])


def build_nce_problem(corpus, q, noise, labelset=BINARY):
    n_labels = len(labelset)
    tt = triad_type_tensor(labelset)
    n = corpus.n_networks
    edge_net = corpus.edge_network()

    eta_d = np.stack(
        [corpus.features[corpus.edge_ptr[t] : corpus.edge_ptr[t + 1]].T @ q[corpus.edge_ptr[t] : corpus.edge_ptr[t + 1]]
         for t in range(n)]
    ).reshape(n, -1) if n else np.zeros((0, len(corpus.templates) * n_labels))
    tri_counts = expected_triad_counts(q, corpus.triad_edges, tt)
    beta_d = np.zeros((n, tt.shape[-1]))
    np.add.at(beta_d, corpus.triad_network(), tri_counts)
    phi_data = np.hstack([eta_d, beta_d, np.ones((n, 1))])

    p = noise.empirical_dist
    with np.errstate(divide="ignore"):
        logp = np.where(p > 0, np.log(p), 0.0)
    nu = noise.labelings[0].shape[0] if noise.labelings else 1
    log_nu = math.log(nu)
    e_log_pn = np.bincount(edge_net, weights=q @ logp, minlength=n)
    off_data = -e_log_pn - log_nu

    rows, offs = [], []
    for t in range(n):
        for lab in noise.labelings[t]:
            rows.append(np.concatenate([_labeling_features(corpus, t, lab, n_labels, tt), [1.0]]))
            offs.append(-float(np.sum(logp[lab])) - log_nu)
    width = phi_data.shape[1]
    phi_noise = np.array(rows).reshape(-1, width)
    return NceProblem(phi_data, off_data, phi_noise, np.array(offs))


def nce_objective_and_gradient(networks, triads, beliefs, noise, struct, labelset=BINARY):
    """NCE objective and its exact gradient over ``struct.to_vector()``."""
    corpus = build_corpus(networks, struct.templates, triads)
    q = np.vstack([b.q for b in beliefs]) if beliefs else np.zeros((0, len(labelset)))
    problem = build_nce_problem(corpus, q, noise, labelset)
    obj, grad = problem.objective_and_gradient(struct.to_vector())
    if not (np.isfinite(obj) and np.all(np.isfinite(grad))):
        raise NumericalError(f"non-finite NCE objective at {struct.to_vector().tolist()}",
                             {"params": struct.to_vector().tolist()})
    return obj, grad


@dataclass(frozen=True)
class FitInfo:
    objective: float
    grad_inf_norm: float
    iterations: int
    message: str


def fit_struct(problem, init, config=NceConfig(), freeze_eta=False, freeze_beta=False):
    """Maximize the NCE objective over the free entries of ``init``."""
    mask = init.free_mask(freeze_eta, freeze_beta)
    penalized = mask.copy()
    penalized[-1] = False  # c is never shrunk
    full = init.to_vector()
    if freeze_eta:
        full[: init.eta.size] = 0.0
    if freeze_beta:
        full[init.eta.size : init.eta.size + init.beta.size] = 0.0
    history = []

    def fun(free):
        w = full.copy()
        w[mask] = free
        obj, grad = problem.objective_and_gradient(w)
        if config.l2:
            obj = obj - 0.5 * config.l2 * float(np.sum(w[penalized] ** 2))
            grad = grad - config.l2 * np.where(penalized, w, 0.0)
        history.append(obj)
        if not np.isfinite(obj):
            raise NumericalError(f"NCE objective diverged (trace tail {history[-5:]})",
                                 {"params": w.tolist(), "trace": history[-20:]})
        return -obj, -grad[mask]

    res = minimize(
        fun, full[mask], jac=True, method="L-BFGS-B",
        options={"maxcor": config.memory, "maxiter": config.max_iter, "gtol": config.gtol, "ftol": 1e-15},
    )
    w = full.copy()
    w[mask] = res.x
    obj, grad = problem.objective_and_gradient(w)
    info = FitInfo(obj, float(np.max(np.abs(grad[mask]))) if mask.any() else 0.0, int(res.nit), str(res.message))
    return init.with_vector(w), info


def optimize_struct(networks, triads, beliefs, config=NceConfig(), seed=0, labelset=BINARY,
                    init=None, templates=("adamic_adar",), freeze_eta=False, freeze_beta=False):
    """Draw fresh noise from ``beliefs`` and run L-BFGS on the NCE objective."""
    if init is None:
        init = StructParams.zeros(labelset, templates)
    corpus = build_corpus(networks, init.templates, triads)
    q = np.vstack([b.q for b in beliefs]) if beliefs else np.zeros((0, len(labelset)))
    noise = _sample_noise_flat(corpus, q, seed, config.noise_per_true)
    struct, _ = fit_struct(build_nce_problem(corpus, q, noise, labelset), init, config, freeze_eta, freeze_beta)
    return struct


# EM -----------------------------------------------------------------------


@dataclass(frozen=True)
class EmConfig:
    labelset: object = BINARY
    tying: TyingScheme = TyingScheme.SYMMETRIC
    alpha: float = 0.1
    templates: tuple = ("adamic_adar",)
    max_iter: int = 100
    tol: float = 1e-6
    restarts: int = 5
    estep_tol: float = ESTEP_TOL
    estep_max_sweeps: int = ESTEP_MAX_SWEEPS
    nce: NceConfig = NceConfig()
    freeze_eta: bool = False
    freeze_beta: bool = False
    update_struct: bool = True
    threads: int = 1


@dataclass(frozen=True)
class EmRecord:
    restart: int
    iteration: int
    bound: float
    nce_objective: float
    eta_norm: float
    beta_norm: float
    c: float
    estep_sweeps: int
    wall_time: float
    bound_decreased: bool


TRACE_COLUMNS = ("restart", "iteration", "bound", "nce_objective", "eta_norm", "beta_norm", "c",
                 "estep_sweeps", "wall_time", "bound_decreased")


@dataclass
class EmTrace:
    records: list = field(default_factory=list)

    def append(self, record):
        if self.records and record.wall_time < self.records[-1].wall_time:
            raise ValueError("trace timestamps must be monotone")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def for_restart(self, r):
        return [rec for rec in self.records if rec.restart == r]

    def to_tsv(self, include_time=True):
        cols = [c for c in TRACE_COLUMNS if include_time or c != "wall_time"]
        lines = ["\t".join(cols)]
        for rec in self.records:
            lines.append("\t".join(repr(getattr(rec, c)) if isinstance(getattr(rec, c), float)
                                   else str(getattr(rec, c)) for c in cols))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class EmResult:
    content: ContentParams
    struct: StructParams
    beliefs: tuple
    trace: EmTrace
    bound: float
    restart: int
    restart_bounds: tuple

    def __iter__(self):
        return iter((self.content, self.struct, self.beliefs, self.trace))


def _em_single(corpus, config, seed, restart, trace, clock0):
    labelset = config.labelset
    content, struct = init_params(corpus.vocab_size, labelset, config.tying,
                                  substream(seed, STREAM_INIT, restart), config.alpha, config.templates)
    q = np.full((corpus.n_edges, len(labelset)), 1.0 / len(labelset))
    prev = None
    done = 0
    for it in range(config.max_iter):
        sweeps = run_estep(corpus, q, content, struct, labelset, config.estep_tol,
                           config.estep_max_sweeps, config.threads)
        bound = corpus_bound(corpus, q, content, struct, labelset).bound_excluding_logZ
        content = content_from_counts(expected_counts(corpus, q), config.tying, labelset, config.alpha)
        nce_obj = float("nan")
        if config.update_struct:
            noise = _sample_noise_flat(corpus, q, substream(seed, STREAM_NOISE, restart, it),
                                       config.nce.noise_per_true)
            problem = build_nce_problem(corpus, q, noise, labelset)
            struct, info = fit_struct(problem, struct, config.nce, config.freeze_eta, config.freeze_beta)
            nce_obj = info.objective
        decreased = prev is not None and bound < prev - 1e-6
        if decreased:
            log.info("restart %d iteration %d: bound fell from %.6f to %.6f", restart, it, prev, bound)
        trace.append(EmRecord(restart, it, bound, nce_obj, float(np.linalg.norm(struct.eta)),
                              float(np.linalg.norm(struct.beta)), struct.c, int(sweeps.max(initial=0)),
                              time.monotonic() - clock0, decreased))
        done += 1
        if prev is not None and abs(bound - prev) <= config.tol * max(abs(prev), 1e-300):
            break
        prev = bound
    if done:
        run_estep(corpus, q, content, struct, labelset, config.estep_tol, config.estep_max_sweeps, config.threads)
    final = corpus_bound(corpus, q, content, struct, labelset).bound_excluding_logZ
    return content, struct, q, final


def run_em(networks, config=EmConfig(), seed=0):
    """Fit content and structural parameters by EM with ``config.restarts`` restarts.

    The restart with the highest final bound (excluding log Z) wins.
    """
    networks = list(networks)
    if not networks or sum(len(n.edges) for n in networks) == 0:
        raise ParameterError("run_em needs at least one network with at least one edge")
    corpus = build_corpus(networks, config.templates)
    if corpus.vocab_size < 1:
        raise ParameterError("vocabulary is empty")
    trace = EmTrace()
    clock0 = time.monotonic()
    best = None
    bounds = []
    for r in range(max(1, config.restarts)):
        content, struct, q, final = _em_single(corpus, config, seed, r, trace, clock0)
        bounds.append(final)
        if best is None or final > best[3]:
            best = (content, struct, q, final, r)
    content, struct, q, final, r = best
    beliefs = tuple(EdgeBeliefs(net.network_id, net.edges, qt)
                    for net, qt in zip(networks, corpus.split_rows(q)))
    return EmResult(content, struct, beliefs, trace, final, r, tuple(bounds))


def infer_beliefs(networks, content, struct, labelset=BINARY, tol=ESTEP_TOL, max_sweeps=ESTEP_MAX_SWEEPS,
                  threads=1):
    """Converged beliefs for new networks under fixed parameters."""
    networks = list(networks)
    corpus = build_corpus(networks, struct.templates, vocab_size=content.vocab_size)
    q = np.full((corpus.n_edges, len(labelset)), 1.0 / len(labelset))
    run_estep(corpus, q, content, struct, labelset, tol, max_sweeps, threads)
    return [EdgeBeliefs(net.network_id, net.edges, qt) for net, qt in zip(networks, corpus.split_rows(q))]
