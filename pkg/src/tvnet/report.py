"""Held-out likelihood, term ranking, weight tables and DOT export."""

import json
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import Network, triad_types
from .labels import BINARY
from .mstep import STREAM_SPLIT, infer_beliefs, run_em, substream


# Splits -------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    holdout_frac: float = 0.10
    split_frac: float = 0.50
    seed: int = 0

    def __post_init__(self):
        for name in ("holdout_frac", "split_frac"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1); got {v}")


def split_films(networks, spec):
    """Seeded film-level split; returns (train, heldout) in input order."""
    networks = list(networks)
    n_hold = min(len(networks) - 1, max(1, int(round(spec.holdout_frac * len(networks)))))
    rng = np.random.default_rng(substream(spec.seed, STREAM_SPLIT, 0))
    hold = set(rng.permutation(len(networks))[:n_hold].tolist())
    train = [n for k, n in enumerate(networks) if k not in hold]
    heldout = [n for k, n in enumerate(networks) if k in hold]
    return train, heldout


def token_sequence(net, e, seed=0):
    """Address tokens of edge ``e`` in line order as (direction, index) pairs.

    Networks built from bare counts carry no order; their tokens are
    expanded and shuffled with a seed derived from the edge, so the split is
    still deterministic.
    """
    if net.tokens is not None:
        return list(net.tokens[e])
    seq = [(0, int(w)) for w in np.repeat(np.arange(net.vocab_size), net.x_fwd[e])]
    seq += [(1, int(w)) for w in np.repeat(np.arange(net.vocab_size), net.x_bwd[e])]
    key = sum(ord(ch) for ch in net.network_id)
    rng = np.random.default_rng(substream(seed, STREAM_SPLIT, 1, key, e))
    return [seq[k] for k in rng.permutation(len(seq))]


def split_dyad_tokens(net, frac=0.5, seed=0):
    """First ``ceil(frac * n)`` tokens of every dyad become a new network.

    Returns (first-half network, list of second-half token lists).
    """
    x_fwd = np.zeros_like(net.x_fwd)
    x_bwd = np.zeros_like(net.x_bwd)
    firsts, seconds = [], []
    for e in range(len(net.edges)):
        seq = token_sequence(net, e, seed)
        cut = math.ceil(frac * len(seq))
        head, tail = seq[:cut], seq[cut:]
        for d, w in head:
            (x_fwd if d == 0 else x_bwd)[e, w] += 1
        firsts.append(head)
        seconds.append(tail)
    first = Network(net.network_id, net.nodes, net.edges, x_fwd, x_bwd, firsts)
    return first, seconds


# Held-out likelihood -----------------------------------------------------


ABLATIONS = {
    # name: (mutual friends, signed triads)
    "text-only": (False, False),
    "text+triads": (False, True),
    "text+mutual-friends": (True, False),
    "full": (True, True),
}


@dataclass
class HeldoutRow:
    name: str
    mutual_friends: bool
    signed_triads: bool
    total_ll: float
    n_dyads: int
    n_tokens: int
    empty_dyads: int
    per_film: dict = field(default_factory=dict)

    @property
    def per_dyad_mean(self):
        return self.total_ll / self.n_dyads if self.n_dyads else 0.0


@dataclass
class HeldoutReport:
    rows: list
    model_hash: str = ""

    def row(self, name):
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_tsv(self):
        lines = []
        if self.model_hash:
            lines.append(f"# model-sha256: {self.model_hash}")
        lines.append("\t".join(["ablation", "address_terms", "mutual_friends", "signed_triads",
                                "total_ll", "per_dyad_mean", "n_dyads", "n_tokens", "empty_dyads"]))
        for r in self.rows:
            lines.append("\t".join([r.name, "1", str(int(r.mutual_friends)), str(int(r.signed_triads)),
                                    repr(r.total_ll), repr(r.per_dyad_mean), str(r.n_dyads),
                                    str(r.n_tokens), str(r.empty_dyads)]))
        lines.append("")
        lines.append("\t".join(["ablation", "film", "total_ll"]))
        for r in self.rows:
            for film, ll in r.per_film.items():
                lines.append(f"{r.name}\t{film}\t{ll!r}")
        return "\n".join(lines) + "\n"


def heldout_predictive_ll(content, struct, heldout, split=SplitSpec(), labelset=BINARY,
                          name="model", mutual_friends=True, signed_triads=True):
    """Expected log-likelihood of each held-out dyad's second-half tokens.

    Beliefs come from an E-step on the first-half counts; each dyad adds
    sum_y q(y) sum_n log theta_y[x_n].  Dyads with an empty second half add
    zero and are counted in ``empty_dyads``.
    """
    halves = [split_dyad_tokens(net, split.split_frac, split.seed) for net in heldout]
    beliefs = infer_beliefs([h[0] for h in halves], content, struct, labelset)
    logt = np.log(np.stack([content.theta_fwd, content.theta_bwd]))
    per_film = {}
    n_dyads = n_tokens = empty = 0
    for (first, seconds), b in zip(halves, beliefs):
        film_terms = []
        for e, tail in enumerate(seconds):
            if not tail:
                empty += 1
                continue
            d = np.array([t[0] for t in tail])
            w = np.array([t[1] for t in tail])
            per_label = logt[d, :, w].sum(axis=0)
            film_terms.append(float(b.q[e] @ per_label))
            n_dyads += 1
            n_tokens += len(tail)
        per_film[first.network_id] = math.fsum(film_terms)
    total = math.fsum(per_film.values())
    return HeldoutRow(name, mutual_friends, signed_triads, total, n_dyads, n_tokens, empty, per_film)


def ablation_grid(train, heldout, config, seed=0, split=SplitSpec(), names=tuple(ABLATIONS)):
    """Train one model per ablation (weights frozen at zero) and score each."""
    rows = []
    models = {}
    for name in names:
        mf, tri = ABLATIONS[name]
        cfg = replace(config, freeze_eta=not mf, freeze_beta=not tri)
        res = run_em(train, cfg, seed)
        models[name] = res
        rows.append(heldout_predictive_ll(res.content, res.struct, heldout, split, cfg.labelset, name, mf, tri))
    return HeldoutReport(rows), models


# Term ranking -------------------------------------------------------------


@dataclass
class TermRanking:
    """``columns[label]`` is a list of (term, likelihood ratio), best first."""

    columns: dict

    def to_tsv(self, model_hash=""):
        labels = sorted(self.columns, key=lambda lab: lab != "V")
        lines = [f"# model-sha256: {model_hash}"] if model_hash else []
        lines.append("\t".join(f"{lab}-cluster\t{lab}-ratio" for lab in labels))
        depth = max((len(v) for v in self.columns.values()), default=0)
        for k in range(depth):
            cells = []
            for lab in labels:
                col = self.columns[lab]
                cells.extend([col[k][0], f"{col[k][1]:.6g}"] if k < len(col) else ["", ""])
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def rank_terms(content, vocab, top_k=10, labelset=BINARY):
    """Terms per cluster by theta_y[w] / max over other clusters of theta[w].

    Ties are broken by term string so the result ignores vocabulary order.
    """
    theta = (content.theta_fwd + content.theta_bwd) / 2
    columns = {}
    for y, lab in enumerate(labelset.labels):
        others = np.delete(theta, y, axis=0).max(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            score = theta[y] / others
        items = sorted(zip(vocab, score.tolist()), key=lambda it: (-it[1], it[0]))
        columns[lab] = items[:top_k]
    return TermRanking(columns)


# Weight tables ------------------------------------------------------------


def triad_weight_rows(struct, labelset=BINARY):
    rows = [("beta", tt.name(labelset), float(struct.beta[k])) for k, tt in enumerate(triad_types(labelset))]
    for t, tpl in enumerate(struct.templates):
        for y, lab in enumerate(labelset.labels):
            rows.append(("eta", f"{tpl}:{lab}", float(struct.eta[t, y])))
    rows.append(("c", "c", struct.c))
    return rows


def report_triad_weights(struct, labelset=BINARY, model_hash=""):
    lines = [f"# model-sha256: {model_hash}"] if model_hash else []
    lines.append("kind\tname\tweight")
    lines += [f"{kind}\t{name}\t{w!r}" for kind, name, w in triad_weight_rows(struct, labelset)]
    return "\n".join(lines) + "\n"


def triad_bar_chart(struct, labelset=BINARY):
    """Bar-chart description of the triad weights as a JSON string."""
    rows = [r for r in triad_weight_rows(struct, labelset) if r[0] == "beta"]
    return json.dumps({"chart": "bar", "title": "Estimated triad feature weights",
                       "x": [r[1] for r in rows], "y": [r[2] for r in rows]}, indent=1) + "\n"


# DOT export ---------------------------------------------------------------

EDGE_STYLES = {"V": ("solid", "blue"), "T": ("dashed", "red")}
UNCERTAIN_STYLE = ("dotted", "gray")


def _quote(s):
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_signed_network(net, beliefs, threshold=0.5, labelset=BINARY, names=None, model_hash=""):
    """DOT document for one network.

    V edges are solid blue, T edges dashed red; edges whose largest belief
    falls below ``threshold`` are dotted gray and marked uncertain.
    """
    names = names or {}
    lines = []
    if model_hash:
        lines.append(f"// model-sha256: {model_hash}")
    lines.append(f"graph {_quote(net.network_id)} {{")
    for node in net.nodes:
        lines.append(f"  {_quote(node)} [label={_quote(names.get(node, node))}];")
    for e, (i, j) in enumerate(net.edges):
        q = beliefs.q[e]
        y = int(np.argmax(q))
        lab = labelset.labels[y]
        if q[y] < threshold:
            style, color, status = *UNCERTAIN_STYLE, "uncertain"
        else:
            style, color = EDGE_STYLES.get(lab, ("solid", "black"))
            status = lab
        attrs = [f"style={style}", f"color={color}", f"sign={_quote(status)}", f"belief={_quote(f'{q[y]:.6f}')}"]
        attrs += [f"q_{lb}={_quote(f'{q[k]:.6f}')}" for k, lb in enumerate(labelset.labels)]
        lines.append(f"  {_quote(i)} -- {_quote(j)} [{', '.join(attrs)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


_DOT_TOKEN = re.compile(r'\s+|//[^\n]*|#[^\n]*|/\*.*?\*/|"(?:\\.|[^"\\])*"|--|->|[{}\[\];=,]|[A-Za-z0-9_.\-]+', re.S)


def _dot_tokens(text):
    pos = 0
    while pos < len(text):
        m = _DOT_TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"unexpected character {text[pos]!r} at offset {pos}")
        tok = m.group(0)
        pos = m.end()
        if tok.isspace() or tok.startswith(("//", "#", "/*")):
            continue
        yield tok


def _unquote(tok):
    if tok.startswith('"'):
        return re.sub(r'\\(.)', r'\1', tok[1:-1])
    return tok


def parse_dot(text):
    """Parse the undirected DOT subset written by :func:`export_signed_network`.

    Returns ``{"name", "nodes": {id: attrs}, "edges": [(a, b, attrs)]}``;
    raises ValueError on anything outside the grammar.
    """
    toks = list(_dot_tokens(text))
    k = 0

    def take(expected=None):
        nonlocal k
        if k >= len(toks):
            raise ValueError("unexpected end of DOT input")
        tok = toks[k]
        if expected is not None and tok != expected:
            raise ValueError(f"expected {expected!r}, got {tok!r}")
        k += 1
        return tok

    def attr_list():
        attrs = {}
        take("[")
        while toks[k] != "]":
            key = _unquote(take())
            take("=")
            attrs[key] = _unquote(take())
            if toks[k] in (",", ";"):
                take()
        take("]")
        return attrs

    if toks and toks[0] == "strict":
        take()
    take("graph")
    name = _unquote(take()) if toks[k] != "{" else ""
    take("{")
    nodes, edges = {}, []
    while toks[k] != "}":
        a = _unquote(take())
        if a in ("{", "[", "]", "=", "--", "->", ";", ","):
            raise ValueError(f"unexpected {a!r}")
        if toks[k] == "--":
            take()
            b = _unquote(take())
            attrs = attr_list() if toks[k] == "[" else {}
            edges.append((a, b, attrs))
            nodes.setdefault(a, {})
            nodes.setdefault(b, {})
        elif toks[k] == "->":
            raise ValueError("directed edge in an undirected graph")
        else:
            attrs = attr_list() if toks[k] == "[" else {}
            nodes.setdefault(a, {}).update(attrs)
        if k < len(toks) and toks[k] == ";":
            take()
    take("}")
    if k != len(toks):
        raise ValueError("trailing tokens after graph body")
    return {"name": name, "nodes": nodes, "edges": edges}
