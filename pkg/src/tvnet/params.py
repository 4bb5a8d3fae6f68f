"""Learnable parameters, tying schemes and the model file."""

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError
from .graph import check_templates, triad_types
from .labels import BINARY, LabelSet

MODEL_FORMAT = "tvnet-model/1"


class TyingScheme(enum.Enum):
    SYMMETRIC = "symmetric"
    DIRECTED = "directed"
    STATUS = "status"


def tie_groups(tying, labelset=BINARY):
    """Partition of (direction, label) slots into groups sharing one theta.

    Direction 0 is i->j, direction 1 is j->i.
    """
    tying = TyingScheme(tying)
    n = len(labelset)
    if tying is TyingScheme.DIRECTED:
        return [[(d, y)] for d in (0, 1) for y in range(n)]
    if tying is TyingScheme.SYMMETRIC:
        return [[(0, y), (1, y)] for y in range(n)]
    labels = labelset.labels
    if "<" not in labels or ">" not in labels:
        raise ParameterError("status tying needs '<' and '>' labels")
    partner = {labels.index("<"): labels.index(">"), labels.index(">"): labels.index("<")}
    return [[(0, y), (1, partner.get(y, y))] for y in range(n)]


@dataclass(frozen=True, eq=False)
class ContentParams:
    theta_fwd: np.ndarray
    theta_bwd: np.ndarray
    alpha: float = 0.1

    def __post_init__(self):
        tf = np.asarray(self.theta_fwd, dtype=float)
        tb = np.asarray(self.theta_bwd, dtype=float)
        if tf.shape != tb.shape or tf.ndim != 2:
            raise ParameterError(f"theta shapes differ: {tf.shape} vs {tb.shape}")
        if self.alpha < 0:
            raise ParameterError("smoothing alpha must be nonnegative")
        for name, t in (("theta_fwd", tf), ("theta_bwd", tb)):
            if np.any(t < 0) or not np.all(np.isfinite(t)):
                raise ParameterError(f"{name} has negative or non-finite entries")
            if t.size and np.max(np.abs(t.sum(axis=1) - 1.0)) > 1e-9:
                raise ParameterError(f"{name} rows do not sum to 1")
        object.__setattr__(self, "theta_fwd", tf)
        object.__setattr__(self, "theta_bwd", tb)

    @property
    def n_labels(self):
        return self.theta_fwd.shape[0]

    @property
    def vocab_size(self):
        return self.theta_fwd.shape[1]

    def theta(self, direction):
        return self.theta_fwd if direction == 0 else self.theta_bwd


@dataclass(frozen=True, eq=False)
class StructParams:
    """Dyad weights ``eta`` (templates x labels), triad weights ``beta`` and ``c``.

    ``beta`` is indexed like :func:`tvnet.graph.triad_types`.
    """

    eta: np.ndarray
    beta: np.ndarray
    c: float = 0.0
    templates: tuple = ("adamic_adar",)

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float).reshape(len(self.templates), -1)
        beta = np.array(self.beta, dtype=float).ravel()
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "templates", check_templates(self.templates))
        if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(beta)) and np.isfinite(self.c)):
            raise ParameterError("structural parameters must be finite")

    @classmethod
    def zeros(cls, labelset=BINARY, templates=("adamic_adar",)):
        n_types = len(triad_types(labelset))
        return cls(np.zeros((len(templates), len(labelset))), np.zeros(n_types), 0.0, tuple(templates))

    @property
    def n_labels(self):
        return self.eta.shape[1]

    def beta_tensor(self, labelset=BINARY):
        """Full (L, L, L) weight tensor, symmetric under label permutations."""
        from .graph import triad_type_tensor

        return triad_type_tensor(labelset) @ self.beta

    def to_vector(self):
        return np.concatenate([self.eta.ravel(), self.beta, [self.c]])

    def with_vector(self, vec):
        vec = np.asarray(vec, dtype=float)
        n_eta = self.eta.size
        n_beta = self.beta.size
        return replace(
            self,
            eta=vec[:n_eta].reshape(self.eta.shape),
            beta=vec[n_eta : n_eta + n_beta].copy(),
            c=float(vec[n_eta + n_beta]),
        )

    def free_mask(self, freeze_eta=False, freeze_beta=False):
        """Boolean mask over :meth:`to_vector` of the optimizable entries.

        Reference-label eta slots and the all-reference triad weight are
        gauge-fixed and never free.
        """
        eta_free = np.ones(self.eta.shape, dtype=bool)
        eta_free[:, -1] = False
        if freeze_eta:
            eta_free[:] = False
        beta_free = np.ones(self.beta.shape, dtype=bool)
        beta_free[-1] = False
        if freeze_beta:
            beta_free[:] = False
        return np.concatenate([eta_free.ravel(), beta_free, [True]])


def init_params(vocab_size, labelset=BINARY, tying=TyingScheme.SYMMETRIC, seed=0,
                alpha=0.1, templates=("adamic_adar",)):
    """Random content parameters and zero structural parameters.

    Each theta row is a symmetric Dirichlet(1) draw; tied slots share one
    draw.
    """
    if vocab_size < 1:
        raise ParameterError("vocab_size must be at least 1")
    rng = np.random.default_rng(seed)
    n = len(labelset)
    theta = np.zeros((2, n, vocab_size))
    for group in tie_groups(tying, labelset):
        draw = rng.dirichlet(np.ones(vocab_size))
        for d, y in group:
            theta[d, y] = draw
    content = ContentParams(theta[0], theta[1], alpha)
    return content, StructParams.zeros(labelset, templates)


def apply_tying(params, tying, labelset=None, weights=None):
    """Replace each tied group by its weighted average.

    ``weights`` has shape (2, L) and gives the pooled count behind each
    (direction, label) slot; equal weights are used when omitted.
    """
    n = params.n_labels
    if labelset is None:
        labelset = BINARY if n == 2 else LabelSet(tuple(str(k) for k in range(n)))
    theta = np.stack([params.theta_fwd, params.theta_bwd])
    out = theta.copy()
    w = np.ones((2, n)) if weights is None else np.asarray(weights, dtype=float)
    for group in tie_groups(tying, labelset):
        first = theta[group[0]]
        if all(np.array_equal(first, theta[g]) for g in group[1:]):
            continue
        ws = np.array([w[d, y] for d, y in group])
        if ws.sum() <= 0:
            ws = np.ones_like(ws)
        pooled = sum(wk * theta[d, y] for wk, (d, y) in zip(ws, group)) / ws.sum()
        pooled = pooled / pooled.sum()
        for d, y in group:
            out[d, y] = pooled
    return ContentParams(out[0], out[1], params.alpha)


@dataclass(frozen=True, eq=False)
class Model:
    """Everything needed to run inference on new networks."""

    vocab: tuple
    labelset: LabelSet
    tying: TyingScheme
    content: ContentParams
    struct: StructParams
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vocab", tuple(self.vocab))
        object.__setattr__(self, "tying", TyingScheme(self.tying))
        if self.content.vocab_size != len(self.vocab):
            raise ParameterError("theta width does not match vocabulary")
        if self.content.n_labels != len(self.labelset) or self.struct.n_labels != len(self.labelset):
            raise ParameterError("parameter label dimension does not match label set")


def model_to_dict(model):
    ls = model.labelset
    types = triad_types(ls)
    return {
        "format": MODEL_FORMAT,
        "vocab": list(model.vocab),
        "labels": list(ls.labels),
        "label_semantics": {k: ls.semantics.get(k, "") for k in ls.labels},
        "tying": model.tying.value,
        "smoothing_alpha": model.content.alpha,
        "theta_fwd": model.content.theta_fwd.tolist(),
        "theta_bwd": model.content.theta_bwd.tolist(),
        "feature_templates": list(model.struct.templates),
        "eta": {
            tpl: {lab: float(model.struct.eta[t, y]) for y, lab in enumerate(ls.labels)}
            for t, tpl in enumerate(model.struct.templates)
        },
        "beta": {tt.name(ls): float(model.struct.beta[k]) for k, tt in enumerate(types)},
        "c": model.struct.c,
        "seed": model.seed,
        "extra": model.extra,
    }


def model_from_dict(doc):
    if doc.get("format") != MODEL_FORMAT:
        raise ParameterError(f"unsupported model format {doc.get('format')!r}")
    labels = tuple(doc["labels"])
    ls = LabelSet(labels, dict(doc.get("label_semantics", {})))
    templates = tuple(doc["feature_templates"])
    eta = np.array([[doc["eta"][tpl][lab] for lab in labels] for tpl in templates], dtype=float)
    beta = np.array([doc["beta"][tt.name(ls)] for tt in triad_types(ls)], dtype=float)
    content = ContentParams(np.array(doc["theta_fwd"]), np.array(doc["theta_bwd"]), doc["smoothing_alpha"])
    struct = StructParams(eta, beta, doc["c"], templates)
    return Model(doc["vocab"], ls, doc["tying"], content, struct, doc.get("seed", 0), doc.get("extra", {}))


def dumps_model(model):
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def save_model(model, path):
    text = dumps_model(model)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_model(path):
    with open(path, encoding="utf-8") as f:
        return model_from_dict(json.load(f))


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def permute_labels(content, struct, perm, labelset=BINARY):
    """Relabel clusters: new label ``y`` takes the role of old label ``perm[y]``.

    Structural weights are re-gauged afterwards so the reference slots are
    zero again; the normalized prior is unchanged by the shift.
    """
    perm = list(perm)
    new_content = ContentParams(content.theta_fwd[perm], content.theta_bwd[perm], content.alpha)
    eta = struct.eta[:, perm]
    eta = eta - eta[:, [-1]]
    full = struct.beta_tensor(labelset)[np.ix_(perm, perm, perm)]
    beta = np.array([full[t.members] for t in triad_types(labelset)])
    beta = beta - beta[-1]
    return new_content, replace(struct, eta=eta, beta=beta)


DEFAULT_SEED_TERMS = {"V": ("sir", "mr"), "T": ("man", "baby")}


def _symbol_term(symbol):
    return symbol.split(":", 1)[-1]


def seed_permutation(content, vocab, labelset=BINARY, seeds=None):
    """Permutation that puts the cluster with most formal seed mass on "V".

    Only defined for binary label sets containing "T" and "V"; otherwise, or
    when no seed term is in the vocabulary, the identity is returned.
    """
    seeds = DEFAULT_SEED_TERMS if seeds is None else seeds
    ident = list(range(len(labelset)))
    if set(labelset.labels) != {"T", "V"}:
        return ident
    theta = (content.theta_fwd + content.theta_bwd) / 2
    sign = np.zeros(len(vocab))
    for w, sym in enumerate(vocab):
        term = _symbol_term(sym)
        if term in seeds.get("V", ()):
            sign[w] = 1.0
        elif term in seeds.get("T", ()):
            sign[w] = -1.0
    if not sign.any():
        return ident
    formality = theta @ sign
    v_old = int(np.argmax(formality))
    perm = [0, 0]
    perm[labelset.index("V")] = v_old
    perm[labelset.index("T")] = 1 - v_old
    return perm
