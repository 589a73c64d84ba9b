import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spin.graph import Graph, complete_graph, cycle_graph, disjoint_union, erdos_renyi, path_graph, star_graph
from spin.nn import make_rng
from spin.wl import WlVerdict, brute_force_isomorphic, wl_distinguish, wl_init, wl_refine, wl_step

from conftest import random_graph


def two_triangles():
    return disjoint_union(cycle_graph(3), cycle_graph(3))


def test_uniform_init_single_color():
    g = erdos_renyi(6, 0.5, make_rng(0)).with_features(np.arange(6.0))
    assert np.all(wl_init(g, use_features=False).colors == 0)


def test_init_partitions_by_feature_rows():
    c = wl_init(Graph(3, [], np.array([[1.0], [1.0], [2.0]]))).colors
    assert c[0] == c[1] != c[2]
    c = wl_init(Graph(3, [], np.array([[1.0, 0.0]] * 3))).colors
    assert set(c.tolist()) == {0}


def test_init_rejects_nonfinite_features():
    with pytest.raises(ValueError):
        wl_init(Graph(2, [], np.array([[1.0], [np.nan]])))


def test_step_on_path_separates_middle():
    c = wl_step(path_graph(3), wl_init(path_graph(3), False)).colors
    assert c[0] == c[2] != c[1]


def test_step_on_triangle_keeps_one_color():
    c = wl_step(complete_graph(3), wl_init(complete_graph(3), False))
    assert c.num_colors == 1 and c.iteration == 1


def test_step_on_star_gives_two_classes():
    assert wl_step(star_graph(3), wl_init(star_graph(3), False)).num_colors == 2


def test_step_rejects_wrong_length():
    with pytest.raises(ValueError):
        wl_step(path_graph(3), wl_init(path_graph(4)))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_refinement_monotone_and_dense(seed):
    g = random_graph(make_rng(seed), n_max=10)
    hist = wl_refine(g, use_features=False)
    counts = [c.num_colors for c in hist]
    assert counts == sorted(counts)
    assert len(hist) - 1 <= g.node_count
    for c in hist:
        assert sorted(set(c.colors.tolist())) == list(range(c.num_colors))


def test_verdicts_on_named_pairs():
    assert wl_distinguish(complete_graph(3), complete_graph(3)) == WlVerdict.possibly_isomorphic()
    assert not wl_distinguish(cycle_graph(6), two_triangles()).distinguished
    v = wl_distinguish(star_graph(3), path_graph(4))
    assert v.distinguished and v.iteration == 1
    assert str(v) == "Distinguished(1)"
    assert str(WlVerdict.possibly_isomorphic()) == "PossiblyIsomorphic"


def test_different_sizes_distinguished_at_zero():
    assert wl_distinguish(cycle_graph(3), cycle_graph(4)) == WlVerdict(True, 0)


def test_features_can_separate_what_structure_cannot():
    a = cycle_graph(6)
    b = cycle_graph(6).with_features(np.array([[1.0]] * 5 + [[2.0]]))
    assert wl_distinguish(a, b) == WlVerdict(True, 0)
    assert not wl_distinguish(a, b, use_features=False).distinguished


def test_brute_force_examples():
    assert brute_force_isomorphic(complete_graph(3), complete_graph(3))
    assert not brute_force_isomorphic(cycle_graph(6), two_triangles())
    assert not brute_force_isomorphic(path_graph(3), complete_graph(3))


def test_brute_force_respects_features():
    a = path_graph(3).with_features(np.array([[1.0], [2.0], [1.0]]))
    b = path_graph(3).with_features(np.array([[2.0], [1.0], [1.0]]))
    assert not brute_force_isomorphic(a, b)
    assert brute_force_isomorphic(a, a.permuted([1, 2, 0]))


def test_brute_force_guard():
    with pytest.raises(ValueError):
        brute_force_isomorphic(cycle_graph(11), cycle_graph(11))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_permutation_invariance(seed):
    rng = make_rng(seed)
    g1, g2 = random_graph(rng), random_graph(rng)
    h1 = g1.permuted(rng.permutation(g1.node_count))
    assert wl_distinguish(g1, g2) == wl_distinguish(h1, g2)
    assert not wl_distinguish(g1, h1).distinguished
    assert brute_force_isomorphic(g1, h1)


def test_soundness_on_random_pairs():
    rng = make_rng(99)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        g1, g2 = erdos_renyi(n, 0.5, rng), erdos_renyi(n, 0.5, rng)
        if wl_distinguish(g1, g2).distinguished:
            assert not brute_force_isomorphic(g1, g2)


def test_deterministic_colors():
    g = erdos_renyi(8, 0.4, make_rng(4))
    a = [c.colors.tolist() for c in wl_refine(g)]
    b = [c.colors.tolist() for c in wl_refine(g)]
    assert a == b
