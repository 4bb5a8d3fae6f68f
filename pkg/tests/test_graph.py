import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_network, random_network, ref_adamic_adar, ref_triangles
from tvnet.errors import InvalidNetworkError
from tvnet.graph import (Network, adamic_adar, canonical_triad_type, dyad_features, edge_template_values,
                         enumerate_triads, mutual_friends, triad_type_tensor, triad_types)
from tvnet.labels import BINARY, LabelSet


def complete_graph(n):
    nodes = [str(k) for k in range(n)]
    return make_network(list(itertools.combinations(nodes, 2)), nodes=nodes)


# Network ----------------------------------------------------------------


@pytest.mark.parametrize("edges, nodes", [
    ([("a", "a")], ["a"]),
    ([("b", "a")], ["a", "b"]),
    ([("a", "b"), ("a", "b")], ["a", "b"]),
    ([("a", "z")], ["a", "b"]),
])
def test_network_rejects_bad_edges(edges, nodes):
    with pytest.raises(InvalidNetworkError):
        make_network(edges, nodes=nodes)


def test_network_rejects_bad_content():
    with pytest.raises(InvalidNetworkError):
        make_network([("a", "b")], x_fwd=np.array([[-1]]), x_bwd=np.array([[0]]))
    with pytest.raises(InvalidNetworkError):
        make_network([("a", "b")], x_fwd=np.array([[0.5]]), x_bwd=np.array([[0]]))
    with pytest.raises(InvalidNetworkError):
        make_network([("a", "b")], x_fwd=np.zeros((2, 1)), x_bwd=np.zeros((2, 1)))


def test_network_content_is_read_only():
    net = make_network([("a", "b")], vocab_size=2)
    with pytest.raises(ValueError):
        net.x_fwd[0, 0] = 3


def test_from_dyads_orients_content_by_node_order():
    # "b" spoke twice of symbol 0 to "a"; keyed in reverse orientation
    net = Network.from_dyads("f", {("b", "a"): (np.array([2, 0]), np.array([0, 1]))}, 2,
                             tokens={("b", "a"): [(0, 0), (1, 1), (0, 0)]})
    assert net.nodes == ("a", "b")
    assert net.edges == (("a", "b"),)
    assert net.x_fwd.tolist() == [[0, 1]]
    assert net.x_bwd.tolist() == [[2, 0]]
    assert net.tokens == (((1, 0), (0, 1), (1, 0)),)
    xf, xb = net.content("b", "a")
    assert xf.tolist() == [0, 1] and xb.tolist() == [2, 0]


# Triads -------------------------------------------------------------------


def test_triangle_has_one_triad():
    tri = enumerate_triads(make_network([("1", "2"), ("1", "3"), ("2", "3")]))
    assert len(tri) == 1
    assert all(len(b) == 1 for b in tri.by_edge)


def test_path_has_no_triads():
    assert len(enumerate_triads(make_network([("1", "2"), ("2", "3")]))) == 0


def test_k4_triads():
    tri = enumerate_triads(complete_graph(4))
    assert len(tri) == 4
    assert all(len(b) == 2 for b in tri.by_edge)


@pytest.mark.parametrize("n", range(3, 9))
def test_complete_graph_triad_count(n):
    assert len(enumerate_triads(complete_graph(n))) == math.comb(n, 3)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 9), st.integers(0, 36), st.integers(0, 2**31 - 1))
def test_triads_match_node_triple_search(n, m, seed):
    net = random_network(np.random.default_rng(seed), n, m)
    tri = enumerate_triads(net)
    got = sorted(sorted(int(k) for k in row) for row in tri.edge_ids)
    assert got == sorted(sorted(r) for r in ref_triangles(net))
    for t, (a, b, c) in enumerate(tri.edge_ids):
        for e in (a, b, c):
            assert t in tri.by_edge[e]


# Adamic-Adar ----------------------------------------------------------------


def test_adamic_adar_examples():
    net = make_network([("a", "b"), ("c", "d")])
    assert adamic_adar(net, "a", "b") == 0.0
    # one common neighbor k of degree 2
    net = make_network([("i", "k"), ("j", "k")])
    assert adamic_adar(net, "i", "j") == pytest.approx(1.442695, abs=1e-6)
    # two common neighbors: k (deg 2), m (deg 4)
    net = make_network([("i", "k"), ("i", "m"), ("j", "k"), ("j", "m"), ("m", "x"), ("m", "y")])
    assert adamic_adar(net, "i", "j") == pytest.approx(2.164043, abs=1e-6)
    assert mutual_friends(net, "i", "j") == 2.0


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 9), st.integers(1, 36), st.integers(0, 2**31 - 1))
def test_adamic_adar_symmetric_and_matches_reference(n, m, seed):
    net = random_network(np.random.default_rng(seed), n, m)
    for i, j in net.edges:
        assert adamic_adar(net, i, j) == adamic_adar(net, j, i)
        assert adamic_adar(net, i, j) == pytest.approx(ref_adamic_adar(net, i, j), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 8), st.integers(3, 28), st.integers(0, 2**31 - 1))
def test_removing_edge_never_grows_mutual_friend_sets(n, m, seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, n, m)
    a, b = net.edges[int(rng.integers(len(net.edges)))]
    smaller = net.without_edge(a, b)
    for i, j in smaller.edges:
        assert smaller.neighbors[i] & smaller.neighbors[j] <= net.neighbors[i] & net.neighbors[j]
        assert mutual_friends(smaller, i, j) <= mutual_friends(net, i, j)
        assert adamic_adar(smaller, i, j) == pytest.approx(ref_adamic_adar(smaller, i, j), rel=1e-12)


def test_removing_edge_can_raise_aa_through_degree():
    # k stays a common neighbor of i, j but loses degree, so 1/ln deg(k) grows
    net = make_network([("i", "j"), ("i", "k"), ("j", "k"), ("k", "z")])
    smaller = net.without_edge("k", "z")
    assert adamic_adar(net, "i", "j") == pytest.approx(1 / math.log(3))
    assert adamic_adar(smaller, "i", "j") == pytest.approx(1 / math.log(2))


# Features and triad types ---------------------------------------------------


def test_dyad_feature_layout():
    net = make_network([("i", "k"), ("j", "k"), ("i", "j")])
    aa = adamic_adar(net, "i", "j")
    assert dyad_features(net, "i", "j", "T").tolist() == [aa, 0.0]
    lonely = make_network([("a", "b")])
    assert dyad_features(lonely, "a", "b", "V").tolist() == [0.0, 0.0]
    two = make_network([("i", "j"), ("i", "k"), ("i", "m"), ("j", "k"), ("j", "m"), ("m", "x"), ("m", "y")])
    assert dyad_features(two, "i", "j", "T") == pytest.approx([2.164043, 0.0], abs=1e-6)


def test_edge_template_values_both_templates():
    net = make_network([("i", "k"), ("j", "k"), ("i", "j")])
    vals = edge_template_values(net, ("adamic_adar", "mutual_friends"))
    e = net.find_edge("i", "j")
    assert vals[e].tolist() == [pytest.approx(1 / math.log(2)), 1.0]
    with pytest.raises(ValueError):
        edge_template_values(net, ("pagerank",))


def test_canonical_triad_type_examples():
    assert canonical_triad_type("T", "V", "T") == canonical_triad_type("V", "T", "T")
    assert canonical_triad_type("T", "V", "T").counts() == {"T": 2, "V": 1}
    assert canonical_triad_type("T", "T", "T").counts() == {"T": 3, "V": 0}
    types = {canonical_triad_type(*t) for t in itertools.product("TV", repeat=3)}
    assert len(types) == 4
    assert [t.name() for t in triad_types()] == ["ttt", "ttv", "tvv", "vvv"]


@given(st.lists(st.integers(0, 3), min_size=3, max_size=3))
def test_triad_type_permutation_invariant(labs):
    ls = LabelSet(("a", "b", "c", "d"))
    ref = canonical_triad_type(*labs, labelset=ls)
    for perm in itertools.permutations(labs):
        assert canonical_triad_type(*perm, labelset=ls) == ref


def test_triad_type_tensor_is_one_hot_and_symmetric():
    for ls in (BINARY, LabelSet(("<", "=", ">"))):
        T = triad_type_tensor(ls)
        assert np.all(T.sum(axis=-1) == 1)
        assert np.array_equal(T, T.transpose(1, 0, 2, 3))
        assert np.array_equal(T, T.transpose(0, 2, 1, 3))
    assert len(triad_types(LabelSet(("<", "=", ">")))) == 10
