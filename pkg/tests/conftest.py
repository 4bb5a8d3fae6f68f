import itertools
import math

import numpy as np
import pytest

from tvnet.graph import Network
from tvnet.params import ContentParams, StructParams


def make_network(edges, vocab_size=1, x_fwd=None, x_bwd=None, network_id="g", nodes=None, tokens=None):
    """Network from an edge list of node-id pairs already in node order."""
    if nodes is None:
        nodes = sorted({n for e in edges for n in e})
    zero = np.zeros((len(edges), vocab_size), dtype=np.int64)
    return Network(network_id, tuple(nodes), tuple(edges),
                   zero if x_fwd is None else x_fwd, zero if x_bwd is None else x_bwd, tokens)


def random_network(rng, n_nodes, n_edges, vocab_size=1, max_count=0, network_id="g"):
    nodes = [f"n{k}" for k in range(n_nodes)]
    pairs = [(nodes[a], nodes[b]) for a in range(n_nodes) for b in range(a + 1, n_nodes)]
    pick = sorted(rng.choice(len(pairs), size=min(n_edges, len(pairs)), replace=False))
    edges = [pairs[k] for k in pick]
    x_fwd = rng.integers(0, max_count + 1, size=(len(edges), vocab_size))
    x_bwd = rng.integers(0, max_count + 1, size=(len(edges), vocab_size))
    return Network(network_id, tuple(nodes), tuple(edges), x_fwd, x_bwd)


def random_struct(rng, scale=1.0, templates=("adamic_adar",)):
    return StructParams(rng.uniform(-scale, scale, size=(len(templates), 2)),
                        rng.uniform(-scale, scale, size=4), 0.0, templates)


def random_content(rng, vocab_size, concentration=1.0):
    tf = rng.dirichlet(np.full(vocab_size, concentration), size=2)
    tb = rng.dirichlet(np.full(vocab_size, concentration), size=2)
    return ContentParams(tf, tb)


# Plain-python reference scorer, written from the model definition only --


def ref_neighbors(net):
    nbrs = {n: set() for n in net.nodes}
    for i, j in net.edges:
        nbrs[i].add(j)
        nbrs[j].add(i)
    return nbrs


def ref_adamic_adar(net, i, j):
    nbrs = ref_neighbors(net)
    return sum(1.0 / math.log(len(nbrs[k])) for k in nbrs[i] & nbrs[j])


def ref_triangles(net):
    """Closed triangles as triples of edge indices, found by node triples."""
    idx = {frozenset(e): k for k, e in enumerate(net.edges)}
    out = []
    for a, b, c in itertools.combinations(net.nodes, 3):
        ks = [idx.get(frozenset(p)) for p in ((a, b), (b, c), (a, c))]
        if None not in ks:
            out.append(ks)
    return out


BINARY_TYPES = [(0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)]


def ref_log_weight(net, labeling, struct, content=None):
    """log of the unnormalized prior (times likelihood when content is given)."""
    s = 0.0
    for e, (i, j) in enumerate(net.edges):
        y = labeling[e]
        for t, tpl in enumerate(struct.templates):
            if tpl == "adamic_adar":
                f = ref_adamic_adar(net, i, j)
            else:
                f = float(len(ref_neighbors(net)[i] & ref_neighbors(net)[j]))
            s += struct.eta[t, y] * f
        if content is not None:
            for w in range(net.vocab_size):
                s += net.x_fwd[e, w] * math.log(content.theta_fwd[y, w])
                s += net.x_bwd[e, w] * math.log(content.theta_bwd[y, w])
    for tri in ref_triangles(net):
        key = tuple(sorted(labeling[k] for k in tri))
        s += struct.beta[BINARY_TYPES.index(key)]
    return s


def ref_enumerate(net, struct, content=None):
    """(Z, marginals) by plain enumeration over all binary labelings."""
    weights = {}
    for lab in itertools.product((0, 1), repeat=len(net.edges)):
        weights[lab] = math.exp(ref_log_weight(net, lab, struct, content))
    Z = math.fsum(weights.values())
    marg = np.zeros((len(net.edges), 2))
    for lab, w in weights.items():
        for e, y in enumerate(lab):
            marg[e, y] += w / Z
    return Z, marg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
