"""Interaction graphs, closed triads and dyadic structural features."""

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement

import numpy as np

from .errors import InvalidNetworkError
from .labels import BINARY, LabelSet

TEMPLATES = ("adamic_adar", "mutual_friends")


@dataclass(frozen=True, eq=False)
class Network:
    """One undirected interaction graph with directed content per edge.

    ``edges[e] = (i, j)`` with ``i`` before ``j`` in ``nodes``.  Row ``e`` of
    ``x_fwd`` counts what ``i`` said to ``j``; row ``e`` of ``x_bwd`` counts
    what ``j`` said to ``i``.  ``tokens`` optionally keeps, per edge, the
    address tokens in line order as ``(direction, vocab_index)`` pairs with
    direction 0 for i->j and 1 for j->i.
    """

    network_id: str
    nodes: tuple
    edges: tuple
    x_fwd: np.ndarray
    x_bwd: np.ndarray
    tokens: tuple = None
    _order: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        edges = tuple(tuple(e) for e in self.edges)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        order = {n: k for k, n in enumerate(nodes)}
        if len(order) != len(nodes):
            raise InvalidNetworkError(f"{self.network_id}: duplicate node ids")
        object.__setattr__(self, "_order", order)

        seen = set()
        for i, j in edges:
            if i not in order or j not in order:
                raise InvalidNetworkError(f"{self.network_id}: edge ({i}, {j}) has unknown node")
            if i == j:
                raise InvalidNetworkError(f"{self.network_id}: self-loop on {i}")
            if order[i] >= order[j]:
                raise InvalidNetworkError(f"{self.network_id}: edge ({i}, {j}) violates i < j")
            if (i, j) in seen:
                raise InvalidNetworkError(f"{self.network_id}: duplicate edge ({i}, {j})")
            seen.add((i, j))

        x_fwd = np.asarray(self.x_fwd)
        x_bwd = np.asarray(self.x_bwd)
        if x_fwd.ndim == 1 and x_fwd.size == 0:
            x_fwd = x_fwd.reshape(0, 0)
            x_bwd = x_bwd.reshape(0, 0)
        if x_fwd.shape != x_bwd.shape or x_fwd.ndim != 2 or x_fwd.shape[0] != len(edges):
            raise InvalidNetworkError(
                f"{self.network_id}: content shape {x_fwd.shape}/{x_bwd.shape} "
                f"does not match {len(edges)} edges"
            )
        for x in (x_fwd, x_bwd):
            if x.size and (np.any(x < 0) or np.any(x != np.round(x))):
                raise InvalidNetworkError(f"{self.network_id}: content must be nonnegative integers")
        x_fwd = x_fwd.astype(np.int64)
        x_bwd = x_bwd.astype(np.int64)
        x_fwd.flags.writeable = False
        x_bwd.flags.writeable = False
        object.__setattr__(self, "x_fwd", x_fwd)
        object.__setattr__(self, "x_bwd", x_bwd)

        if self.tokens is not None:
            tokens = tuple(tuple((int(d), int(w)) for d, w in seq) for seq in self.tokens)
            if len(tokens) != len(edges):
                raise InvalidNetworkError(f"{self.network_id}: token sequences do not match edges")
            object.__setattr__(self, "tokens", tokens)

    @classmethod
    def from_dyads(cls, network_id, dyads, vocab_size, nodes=None, tokens=None):
        """Build a network from ``{(a, b): (x_ab, x_ba)}``.

        Node order is lexicographic over node ids unless ``nodes`` is given.
        Pairs may be listed in either orientation; content is swapped as
        needed so that ``x_fwd`` always runs from the earlier node.
        ``tokens`` maps the same keys to ``[(direction, index), ...]`` with
        direction relative to the key's orientation.
        """
        if nodes is None:
            nodes = sorted({n for pair in dyads for n in pair})
        order = {n: k for k, n in enumerate(nodes)}
        rows = []
        for (a, b), (xab, xba) in dyads.items():
            seq = None if tokens is None else list(tokens.get((a, b), ()))
            if order[a] > order[b]:
                a, b, xab, xba = b, a, xba, xab
                if seq is not None:
                    seq = [(1 - d, w) for d, w in seq]
            rows.append(((order[a], order[b]), (a, b), xab, xba, seq))
        rows.sort(key=lambda r: r[0])
        x_fwd = np.zeros((len(rows), vocab_size), dtype=np.int64)
        x_bwd = np.zeros((len(rows), vocab_size), dtype=np.int64)
        for e, (_, _, xab, xba, _) in enumerate(rows):
            x_fwd[e] = xab
            x_bwd[e] = xba
        return cls(
            network_id,
            tuple(nodes),
            tuple(r[1] for r in rows),
            x_fwd,
            x_bwd,
            None if tokens is None else tuple(r[4] for r in rows),
        )

    @property
    def vocab_size(self):
        return self.x_fwd.shape[1]

    def __len__(self):
        return len(self.edges)

    def position(self, node):
        return self._order[node]

    @cached_property
    def edge_index(self):
        return {e: k for k, e in enumerate(self.edges)}

    def find_edge(self, i, j):
        """Index of the edge joining ``i`` and ``j`` in either orientation."""
        if self._order[i] > self._order[j]:
            i, j = j, i
        return self.edge_index[(i, j)]

    @cached_property
    def neighbors(self):
        nbrs = {n: set() for n in self.nodes}
        for i, j in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return {n: frozenset(s) for n, s in nbrs.items()}

    def content(self, i, j):
        e = self.find_edge(i, j)
        return self.x_fwd[e], self.x_bwd[e]

    def without_edge(self, i, j):
        e = self.find_edge(i, j)
        keep = [k for k in range(len(self.edges)) if k != e]
        return Network(
            self.network_id,
            self.nodes,
            tuple(self.edges[k] for k in keep),
            self.x_fwd[keep],
            self.x_bwd[keep],
            None if self.tokens is None else tuple(self.tokens[k] for k in keep),
        )


@dataclass(frozen=True)
class TriadIndex:
    """Closed triangles of a network.

    ``triads`` holds node triples ``(i, j, k)`` in node order.  ``edge_ids``
    holds the matching edge indices ``(ij, jk, ik)``; ``by_edge[e]`` lists
    the triads containing edge ``e``.
    """

    triads: tuple
    edge_ids: np.ndarray
    by_edge: tuple

    def __len__(self):
        return len(self.triads)


def enumerate_triads(net):
    nbrs = net.neighbors
    pos = net.position
    triads = []
    for i, j in net.edges:
        for k in sorted(nbrs[i] & nbrs[j], key=pos):
            if pos(k) > pos(j):
                triads.append((i, j, k))
    edge_ids = np.array(
        [(net.find_edge(i, j), net.find_edge(j, k), net.find_edge(i, k)) for i, j, k in triads],
        dtype=np.int64,
    ).reshape(-1, 3)
    by_edge = [[] for _ in net.edges]
    for t, row in enumerate(edge_ids):
        for e in row:
            by_edge[e].append(t)
    return TriadIndex(tuple(triads), edge_ids, tuple(tuple(x) for x in by_edge))


def adamic_adar(net, i, j):
    """Sum of 1/ln(deg k) over mutual neighbors k of i and j."""
    nbrs = net.neighbors
    common = sorted(nbrs[i] & nbrs[j], key=net.position)
    return math.fsum(1.0 / math.log(len(nbrs[k])) for k in common)


def mutual_friends(net, i, j):
    nbrs = net.neighbors
    return float(len(nbrs[i] & nbrs[j]))


_TEMPLATE_FUNCS = {"adamic_adar": adamic_adar, "mutual_friends": mutual_friends}


def check_templates(templates):
    templates = tuple(templates)
    for t in templates:
        if t not in _TEMPLATE_FUNCS:
            raise ValueError(f"unknown feature template {t!r}; choose from {TEMPLATES}")
    return templates


def edge_template_values(net, templates=("adamic_adar",)):
    """(n_edges, n_templates) matrix of label-independent structural scores."""
    templates = check_templates(templates)
    out = np.zeros((len(net.edges), len(templates)))
    for e, (i, j) in enumerate(net.edges):
        for t, name in enumerate(templates):
            out[e, t] = _TEMPLATE_FUNCS[name](net, i, j)
    return out


def dyad_features(net, i, j, label, labelset=BINARY, templates=("adamic_adar",)):
    """Feature vector f(label, i, j, G).

    Slot ``t * len(labelset) + y`` holds template ``t``'s value when ``y`` is
    the given label and zero otherwise.
    """
    net.find_edge(i, j)
    templates = check_templates(templates)
    y = labelset.index(label)
    n_labels = len(labelset)
    vec = np.zeros(len(templates) * n_labels)
    for t, name in enumerate(templates):
        vec[t * n_labels + y] = _TEMPLATE_FUNCS[name](net, i, j)
    return vec


@dataclass(frozen=True, order=True)
class TriadType:
    """Rotation-invariant triad type: label indices sorted ascending."""

    members: tuple

    def name(self, labelset=BINARY):
        return "".join(labelset.labels[y] for y in self.members).lower()

    def counts(self, labelset=BINARY):
        return {lab: self.members.count(y) for y, lab in enumerate(labelset.labels)}


def canonical_triad_type(a, b, c, labelset=BINARY):
    idx = sorted(labelset.index(x) if isinstance(x, str) else int(x) for x in (a, b, c))
    return TriadType(tuple(idx))


def triad_types(labelset=BINARY):
    """All triad types in a fixed order; the all-reference type is last."""
    return tuple(TriadType(m) for m in combinations_with_replacement(range(len(labelset)), 3))


def triad_type_tensor(labelset=BINARY):
    """One-hot map (L, L, L, K) from an ordered label triple to its type."""
    types = triad_types(labelset)
    where = {t.members: k for k, t in enumerate(types)}
    n = len(labelset)
    out = np.zeros((n, n, n, len(types)))
    for a in range(n):
        for b in range(n):
            for c in range(n):
                out[a, b, c, where[tuple(sorted((a, b, c)))]] = 1.0
    return out
