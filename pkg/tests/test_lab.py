import numpy as np
import pytest

from spin import lab
from spin.graph import circulant_graph, erdos_renyi
from spin.nn import Activation, make_rng
from spin.wl import wl_distinguish


def test_lemma1_unit_weight():
    rep = lab.lemma1_demo([[1.0]])
    w = rep.witnesses[0]
    assert w["sum1"].tolist() == [2.0] and w["sum2"].tolist() == [2.0] and w["difference"] == 0.0
    assert rep.passed


def test_lemma1_negative_weight_gives_zero_sums():
    w = lab.lemma1_demo([[-1.0]]).witnesses[0]
    assert w["sum1"].tolist() == [0.0] and w["sum2"].tolist() == [0.0]


def test_lemma1_leaky_random_scalars():
    rng = make_rng(0)
    rep = lab.lemma1_demo([[w] for w in rng.normal(size=10)], Activation("leaky_relu", 0.1))
    assert rep.instances == 10 and rep.violations == 0


def test_lemma1_vector_weights_also_collide():
    rng = make_rng(1)
    rep = lab.lemma1_demo([rng.normal(size=5) for _ in range(5)], "relu")
    assert rep.violations == 0


def test_lemma1_reports_unequal_multisets_when_weights_break_homogeneity():
    # the collision relies on positive homogeneity; a bias term breaks it
    act = Activation("relu")
    s1 = lab.weighted_sum(*lab.MULTISET_1, [[1.0]], act)
    shifted = act.forward(lab.MULTISET_1[0][:, None] - 1.5).T @ lab.MULTISET_1[1]
    shifted2 = act.forward(lab.MULTISET_2[0][:, None] - 1.5).T @ lab.MULTISET_2[1]
    assert s1.tolist() == [2.0] and shifted[0] != shifted2[0]


def test_attention_pair_identical_inputs():
    rng = make_rng(0)
    z = rng.normal(size=8)
    o1, o2 = lab.attention_pair(rng.normal(size=8), z, z.copy())
    assert np.array_equal(o1, o2)


def test_attention_pair_scaled_input_stays_distinct():
    rng = make_rng(1)
    for _ in range(100):
        w, z1 = rng.normal(size=8), rng.normal(size=8)
        if w @ z1 <= 0:
            z1 = -z1
        o1, o2 = lab.attention_pair(w, z1, 2 * z1)
        assert np.max(np.abs(o1 - o2)) > 1e-9


def test_lemma2_probe_small():
    rep = lab.lemma2_probe(2000, 8, make_rng(3))
    assert rep.instances == 2000 and rep.violations == 0
    with pytest.raises(ValueError):
        lab.lemma2_probe(0)


@pytest.mark.parametrize("readout", ["mean", "max"])
@pytest.mark.parametrize("n1,n2,k", [(6, 3, 2), (8, 4, 3), (10, 6, 3), (9, 5, 4), (12, 8, 5)])
def test_lemma3_collisions(readout, n1, n2, k):
    rep = lab.lemma3_demo(n1, n2, k, readout)
    assert rep.passed and rep.witnesses[0]["delta_inf"] < 1e-12


@pytest.mark.parametrize("n1,n2,k", [(6, 3, 2), (8, 4, 3), (10, 6, 3)])
def test_lemma3_sum_separates_and_scales(n1, n2, k):
    w = lab.lemma3_demo(n1, n2, k, "sum").witnesses[0]
    assert w["delta_inf"] > 1e-6
    assert w["norm_ratio"] == pytest.approx(n1 / n2, abs=1e-9)


def test_lemma3_on_hexagon_vs_triangles():
    for readout in ("mean", "max", "sum"):
        rep = lab.lemma3_demo(readout=readout, graphs=lab.cycle_vs_triangles())
        assert rep.witnesses[0]["delta_inf"] < 1e-12


def test_lemma3_rejects_odd_degree_sum():
    with pytest.raises(ValueError):
        lab.lemma3_demo(5, 3, 3)


def test_identical_graphs_not_separated():
    rng = make_rng(0)
    g = erdos_renyi(6, 0.5, rng)
    assert not wl_distinguish(g, g).distinguished
    assert lab.model_separation(g, g, 5, rng) == 0.0


def test_hexagon_vs_triangles_blind_for_both():
    g1, g2 = lab.cycle_vs_triangles()
    assert not wl_distinguish(g1, g2).distinguished
    assert lab.model_separation(g1, g2, 5, make_rng(1)) == 0.0


def test_theorem1_small_run():
    rep = lab.theorem1_experiment(num_pairs=100, max_nodes=6, tau=1e-6, seed=3)
    assert rep.wl_distinguished == 100
    assert rep.model_distinguished <= rep.wl_distinguished <= rep.pairs_tested
    assert rep.both_separated <= rep.model_separated_total <= rep.pairs_tested
    assert rep.agreement_rate >= 0.99
    assert rep.to_csv().splitlines()[0].startswith("pairs_tested,")
    assert "not a proof" in rep.to_text()


def test_theorem1_is_reproducible():
    a = lab.theorem1_experiment(num_pairs=30, max_nodes=5, seed=8)
    b = lab.theorem1_experiment(num_pairs=30, max_nodes=5, seed=8)
    assert a == b


def test_theorem1_rejects_large_graphs():
    with pytest.raises(ValueError):
        lab.theorem1_experiment(10, max_nodes=9)


def test_report_writers():
    rep = lab.lemma1_demo([[1.0], [2.0]])
    lines = rep.to_csv().splitlines()
    assert lines[0] == "lemma,instance,W,difference,sum1,sum2" and len(lines) == 3
    assert rep.to_text().startswith("lemma1: PASS")


def test_regular_pair_is_regular():
    g1, g2 = lab.regular_pair(8, 6, 3)
    assert np.all(g1.degrees() == 3) and np.all(g2.degrees() == 3)
    assert g1.node_count == 8 and circulant_graph(6, 3).edge_count == g2.edge_count
