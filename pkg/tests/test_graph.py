import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from spin.graph import (
    CsrMatrix, Graph, OperatorKind, build_operator, canonical_edges, circulant_graph, complete_graph,
    cycle_graph, degree_feature, disjoint_union, erdos_renyi, operator_bank, path_graph,
    read_edgelist, star_graph, write_edgelist,
)
from spin.nn import make_rng

KINDS = list(OperatorKind)


@st.composite
def graphs(draw, max_nodes=12, d=None):
    n = draw(st.integers(0, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    width = draw(st.integers(1, 3)) if d is None else d
    feats = draw(st.lists(st.lists(st.floats(-3, 3), min_size=width, max_size=width),
                          min_size=n, max_size=n))
    return Graph(n, edges, np.array(feats).reshape(n, width))


def test_canonical_edges_drop_loops_and_duplicates():
    e = canonical_edges([(1, 0), (0, 1), (2, 2), (2, 1)])
    assert e.tolist() == [[0, 1], [1, 2]]


def test_graph_rejects_bad_endpoint_and_feature_rows():
    with pytest.raises(ValueError):
        Graph(2, [(0, 2)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 1)], np.ones((2, 1)))


def test_triangle_adjacency():
    m = build_operator(complete_graph(3), OperatorKind.ADJACENCY).to_dense()
    assert np.array_equal(m, np.ones((3, 3)) - np.eye(3))


def test_triangle_normalized_is_half():
    m = build_operator(complete_graph(3), OperatorKind.NORMALIZED).to_dense()
    assert np.allclose(m, (np.ones((3, 3)) - np.eye(3)) / 2, atol=1e-15)


def test_single_edge_normalized_plus_adjacency_is_two():
    m = build_operator(path_graph(2), "normalized+adjacency").to_dense()
    assert m[0, 1] == m[1, 0] == 2.0 and m[0, 0] == 0.0


def test_isolated_node_gives_zero_row():
    g = Graph(3, [(0, 1)])
    for kind in KINDS:
        assert not build_operator(g, kind).to_dense()[2].any()


def test_operator_kind_aliases():
    assert OperatorKind.parse("A") is OperatorKind.ADJACENCY
    assert OperatorKind.parse("NormalizedAdjacency") is OperatorKind.NORMALIZED
    with pytest.raises(ValueError):
        OperatorKind.parse("laplacian")


@settings(max_examples=60, deadline=None)
@given(graphs(), st.sampled_from(KINDS))
def test_operator_satisfies_csr_invariants(g, kind):
    op = build_operator(g, kind)
    op.check(symmetric=True)
    assert op.row_ptr[0] == 0 and op.row_ptr[-1] == op.nnz


def test_csr_check_catches_unsorted_columns():
    bad = CsrMatrix(2, 2, np.array([0, 2, 2]), np.array([1, 0]), np.ones(2))
    with pytest.raises(ValueError):
        bad.check()


@settings(max_examples=40, deadline=None)
@given(graphs(), st.sampled_from(KINDS))
def test_operator_matches_scipy_dense_formula(g, kind):
    n = g.node_count
    a = np.zeros((n, n))
    for u, v in g.edges:
        a[u, v] = a[v, u] = 1
    deg = a.sum(1)
    s = np.where(deg > 0, 1 / np.sqrt(np.where(deg > 0, deg, 1)), 0)
    norm = s[:, None] * a * s[None, :]
    expect = {OperatorKind.ADJACENCY: a, OperatorKind.NORMALIZED: norm,
              OperatorKind.NORMALIZED_PLUS_ADJACENCY: norm + a}[kind]
    assert np.allclose(build_operator(g, kind).to_dense(), expect, atol=1e-14)


def test_bank_on_path_counts_neighbors():
    bank = operator_bank(path_graph(3), "adjacency", 1)
    assert bank.matrices[1][:, 0].tolist() == [1, 2, 1]


def test_bank_R0_is_features():
    g = erdos_renyi(5, 0.5, make_rng(0)).with_features(np.arange(10.0).reshape(5, 2))
    for kind in KINDS:
        bank = operator_bank(g, kind, 0)
        assert len(bank.matrices) == 1 and np.array_equal(bank.matrices[0], g.features)


def test_bank_does_not_alias_features():
    g = cycle_graph(4)
    bank = operator_bank(g, "adjacency", 1)
    bank.matrices[0][0, 0] = 99
    assert g.features[0, 0] == 1


def test_normalized_cycle_keeps_all_ones():
    bank = operator_bank(cycle_graph(6), "normalized", 5)
    for m in bank.matrices:
        assert np.allclose(m, 1.0, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(graphs(d=1))
def test_first_power_of_ones_is_degree(g):
    g = g.with_features(np.ones((g.node_count, 1)))
    bank = operator_bank(g, "adjacency", 1)
    assert np.array_equal(bank.matrices[1][:, 0], g.degrees())


@settings(max_examples=30, deadline=None)
@given(graphs(), st.sampled_from(KINDS), st.integers(0, 4))
def test_bank_equals_dense_powers(g, kind, R):
    dense = build_operator(g, kind).to_dense()
    bank = operator_bank(g, kind, R)
    ref = g.features.copy()
    for r in range(R + 1):
        scale = max(np.abs(ref).max(initial=0), 1.0)
        assert np.allclose(bank.matrices[r], ref, rtol=1e-12, atol=1e-12 * scale)
        ref = dense @ ref


@pytest.mark.parametrize("n,k", [(6, 2), (8, 3), (7, 4), (10, 5), (9, 2)])
@pytest.mark.parametrize("kind", KINDS)
def test_regular_graph_rows_stay_identical(n, k, kind):
    g = circulant_graph(n, k).with_features(np.full((n, 2), [0.3, -1.2]))
    for m in operator_bank(g, kind, 4).matrices:
        assert np.allclose(m, m[0], rtol=1e-13, atol=0)


def test_circulant_rejects_odd_product():
    with pytest.raises(ValueError):
        circulant_graph(5, 3)
    with pytest.raises(ValueError):
        circulant_graph(4, 4)


def test_csr_spmm_matches_scipy(rng):
    g = erdos_renyi(30, 0.2, rng)
    op = build_operator(g, "normalized")
    ref = sp.csr_matrix((op.values, op.col_idx, op.row_ptr), shape=(30, 30))
    x = rng.normal(size=(30, 4))
    assert np.allclose(op @ x, ref @ x, rtol=1e-13, atol=1e-13)
    assert np.allclose(op @ x[:, 0], ref @ x[:, 0], rtol=1e-13, atol=1e-13)


def test_csr_add_sums_entries():
    g = cycle_graph(5)
    a = build_operator(g, "adjacency")
    total = a + a
    assert np.array_equal(total.to_dense(), 2 * a.to_dense())


def test_degree_feature_examples():
    assert np.array_equal(degree_feature(complete_graph(3), 5).argmax(1), [2, 2, 2])
    star = degree_feature(star_graph(3), 5)
    assert star[0].argmax() == 3 and list(star[1:].argmax(1)) == [1, 1, 1]
    big = degree_feature(star_graph(9), 5)
    assert big[0].argmax() == 5 and big.shape == (10, 6)
    assert np.array_equal(big.sum(1), np.ones(10))
    with pytest.raises(ValueError):
        degree_feature(complete_graph(3), 0)


def test_permuted_relabels_edges_and_features():
    g = path_graph(3).with_features(np.array([[1.0], [2.0], [3.0]]))
    h = g.permuted([2, 0, 1])
    assert sorted(map(tuple, h.edges.tolist())) == [(0, 1), (0, 2)]
    assert h.features[:, 0].tolist() == [2.0, 3.0, 1.0]


def test_disjoint_union_counts():
    g = disjoint_union(cycle_graph(3), cycle_graph(3))
    assert g.node_count == 6 and g.edge_count == 6
    assert np.all(g.degrees() == 2)


def test_edgelist_round_trip(tmp_path):
    g = erdos_renyi(7, 0.4, make_rng(3))
    write_edgelist(g, tmp_path / "g.edges")
    h = read_edgelist(tmp_path / "g.edges")
    assert h.node_count == 7 and np.array_equal(h.edges, g.edges)


@pytest.mark.parametrize("text", ["3\n", "3 1\n0 5\n", "3 2\n0 1\n", "2 1\n0 1 2\n"])
def test_edgelist_rejects_malformed(tmp_path, text):
    (tmp_path / "bad.edges").write_text(text)
    with pytest.raises(ValueError):
        read_edgelist(tmp_path / "bad.edges")
