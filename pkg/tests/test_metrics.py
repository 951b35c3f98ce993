import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiersel import (
    RULES,
    ScoreTable,
    cc_curve,
    ece,
    evaluate,
    flat_hierarchy,
    haurc,
    hier_risk_01,
    hierarchical_gain,
    mean_coverage,
    predict_nodes,
    rc_curve,
    severity_loss,
)
from hiersel.exceptions import EmptyInput, LengthMismatch, TooFewPoints, ZeroBaseline
from hiersel.metrics import Curve, node_scores
from hiersel.synth import brute_force_rc

from conftest import random_tree

LN2_LN3 = math.log(2) / math.log(3)
ABOVE_ONE = float(np.nextafter(1.0, 2.0))


def random_table(rng, h, m):
    probs = rng.dirichlet(np.full(h.n_leaves, 0.5), size=m)
    return ScoreTable.from_arrays(h, probs, rng.integers(h.n_leaves, size=m))


@pytest.fixture
def single(five, five_probs):
    return ScoreTable.from_arrays(five, five_probs, [five.leaf_position(five.index("b"))])


def test_hier_risk(five):
    i = five.index
    assert hier_risk_01(five, [five.root] * 3, [i("a1"), i("b"), i("a2")]) == 0.0
    assert hier_risk_01(five, [i("a1"), i("b")], [i("a1"), i("b")]) == 0.0
    assert hier_risk_01(five, [i("a"), i("a"), i("b")], [i("a1"), i("b"), i("b")]) == 1 / 3
    with pytest.raises(LengthMismatch):
        hier_risk_01(five, [i("a")], [i("a1"), i("b")])


def test_severity_loss(five):
    i = five.index
    assert severity_loss(five, i("a"), i("a1")) == 0.0
    assert severity_loss(five, five.root, i("b")) == 0.0
    assert abs(severity_loss(five, i("a1"), i("a2")) - LN2_LN3) <= 1e-12
    assert severity_loss(five, i("a1"), i("b")) == 1.0
    assert abs(severity_loss(five, i("a"), i("b")) - 1.0) <= 1e-12


def test_mean_coverage(five):
    i = five.index
    assert mean_coverage(five, [five.root, five.root]) == 0.0
    assert mean_coverage(five, list(five.leaves)) == 1.0
    assert mean_coverage(five, [i("a1"), i("a")]) == pytest.approx((1 + (1 - LN2_LN3)) / 2, abs=1e-15)
    with pytest.raises(EmptyInput):
        mean_coverage(five, [])


def test_ece_examples():
    assert abs(ece([1.0, 1.0], [True, True])) <= 1e-12
    assert abs(ece([1.0, 1.0], [False, False]) - 1.0) <= 1e-12
    assert abs(ece([0.8, 0.6], [True, False], n_bins=1) - 0.2) <= 1e-12
    assert ece([], []) == 0.0


def test_ece_matches_direct_formula():
    rng = np.random.default_rng(3)
    conf = rng.random(500)
    correct = rng.random(500) < conf
    n_bins = 15
    bins = np.minimum((conf * n_bins).astype(int), n_bins - 1)
    expected = 0.0
    for b in range(n_bins):
        sel = bins == b
        if sel.any():
            expected += sel.mean() * abs(correct[sel].mean() - conf[sel].mean())
    assert ece(conf, correct, n_bins) == pytest.approx(expected, abs=1e-12)


def test_single_sample_curve(five, single):
    curve = rc_curve(five, single)
    distinct = sorted(set(zip(curve.coverage.tolist(), curve.values.tolist())))
    assert distinct == [(0.0, 0.0), (1 - LN2_LN3, 1.0), (1.0, 1.0)]
    assert curve.at(0.4).coverage == 1.0
    assert curve.at(0.75).coverage == pytest.approx(1 - LN2_LN3)
    assert curve.at(1.0).coverage == 0.0
    # trapezoid over (0,0) -> (c_a, 1) -> (1, 1)
    c_a = 1 - LN2_LN3
    assert haurc(curve) == pytest.approx(0.5 * c_a + (1 - c_a), abs=1e-15)
    assert haurc(curve) == pytest.approx(0.8155, abs=5e-5)


def test_curve_csv_and_ordering(five, single):
    curve = rc_curve(five, single)
    lines = curve.to_csv().splitlines()
    assert lines[0] == "threshold,coverage,value"
    first, last = lines[1].split(","), lines[-1].split(",")
    assert float(first[1]) == 0.0 and float(first[2]) == 0.0
    assert float(last[1]) == 1.0
    assert np.all(np.diff(curve.coverage) >= 0)
    assert np.all(np.diff(curve.thresholds) <= 0)
    assert curve.thresholds[0] == ABOVE_ONE and curve.thresholds[-1] == 0.0


def test_empty_table(five):
    with pytest.raises(EmptyInput):
        rc_curve(five, np.zeros((0, 5)), labels=[])


def test_haurc_rectangle_and_errors():
    curve = Curve(np.array([2.0, 0.0]), np.array([0.0, 1.0]), np.array([0.3, 0.3]), "risk")
    assert haurc(curve) == pytest.approx(0.3)
    with pytest.raises(TooFewPoints):
        haurc(Curve(np.array([0.0]), np.array([1.0]), np.array([0.3]), "risk"))
    with pytest.raises(ValueError):
        haurc(Curve(np.array([2.0, 0.0]), np.array([0.0, 1.0]), np.array([0.3, 0.3]), "ece"))


def test_haurc_perfect_classifier(five):
    t = ScoreTable.from_arrays(five, np.eye(3), [0, 1, 2])
    assert haurc(rc_curve(five, t)) == 0.0


def test_hierarchical_gain():
    assert hierarchical_gain(0.3, 0.3) == 0.0
    assert hierarchical_gain(42.27e-3, 36.51e-3) == pytest.approx(13.627, abs=1e-3)
    assert hierarchical_gain(0.2, 0.3) < 0
    with pytest.raises(ZeroBaseline):
        hierarchical_gain(0.0, 0.1)


def test_cc_curve_single_sample(five, single):
    curve = cc_curve(five, single)
    assert curve.kind == "ece"
    assert curve.at(0.0).value == pytest.approx(0.4)  # leaf a1 (conf 0.4) is wrong
    assert curve.at(0.75).value == pytest.approx(0.75)
    assert curve.at(ABOVE_ONE).value == 0.0 and curve.at(ABOVE_ONE).coverage == 0.0


def test_evaluate_report(five):
    rng = np.random.default_rng(0)
    t = random_table(rng, five, 200)
    report, curve = evaluate(five, t, "climbing")
    assert report.haurc == haurc(curve)
    base, _ = evaluate(five, t, "selective")
    assert report.haurc_selective_baseline == base.haurc
    assert report.hierarchical_gain_percent == pytest.approx(
        100 * (base.haurc - report.haurc) / base.haurc)
    leaf = predict_nodes(five, node_scores(five, t), 0.0, "climbing")
    assert report.full_coverage_risk == hier_risk_01(five, leaf, t.labels)
    assert set(report.to_dict()) >= {"haurc", "haurc_selective_baseline", "hierarchical_gain_percent",
                                     "full_coverage_risk", "ece_full_coverage", "rule", "n_samples"}


def test_flat_hierarchy_gain_is_zero():
    rng = np.random.default_rng(1)
    h = flat_hierarchy([f"k{i}" for i in range(6)])
    report, _ = evaluate(h, random_table(rng, h, 300), "climbing")
    assert report.hierarchical_gain_percent == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(RULES), st.sampled_from(["zero-one", "severity"]))
def test_rc_curve_equals_brute_force_at_its_breakpoints(seed, rule, loss):
    rng = np.random.default_rng(seed)
    h = random_tree(rng)
    t = random_table(rng, h, int(rng.integers(1, 40)))
    curve = rc_curve(h, t, rule, loss)
    brute = brute_force_rc(h, t, rule, loss, thresholds=curve.thresholds)
    assert np.array_equal(brute.thresholds, curve.thresholds)
    assert np.array_equal(brute.coverage, curve.coverage)
    if loss == "zero-one":
        assert np.array_equal(brute.values, curve.values)
    else:
        assert np.allclose(brute.values, curve.values, rtol=0, atol=1e-12)
    assert haurc(brute) == pytest.approx(haurc(curve), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_curve_properties(seed):
    rng = np.random.default_rng(seed)
    h = random_tree(rng)
    t = random_table(rng, h, int(rng.integers(1, 60)))
    curve = rc_curve(h, t, "climbing")
    # thresholds descend as coverage ascends, so risk falls with the threshold
    assert np.all(np.diff(curve.values) >= 0)
    ns = node_scores(h, t)
    leaf = h.leaves[np.argmax(ns[:, h.leaves], axis=1)]
    assert curve.at(0.0).value == hier_risk_01(h, leaf, t.labels)
    assert curve.at(0.0).coverage == 1.0
    assert curve.at(ABOVE_ONE).coverage == 0.0 and curve.at(ABOVE_ONE).value == 0.0
    area = haurc(curve)
    assert 0.0 <= area <= curve.values.max() + 1e-15


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(RULES))
def test_cc_curve_matches_direct_ece(seed, rule):
    rng = np.random.default_rng(seed)
    h = random_tree(rng)
    t = random_table(rng, h, int(rng.integers(1, 40)))
    ns = node_scores(h, t)
    curve = cc_curve(h, t, rule)
    for th, cov, value in curve.points:
        nodes = predict_nodes(h, ns, th, rule)
        kept = nodes != h.root
        conf = ns[np.arange(len(ns)), nodes][kept]
        right = h.is_ancestor(nodes, t.labels)[kept]
        assert cov == mean_coverage(h, nodes)
        # ECE is taken over the non-root predictions only
        assert value == pytest.approx(ece(conf, right) if kept.any() else 0.0, abs=1e-12)


def test_operating_point_between_breakpoints(five, single):
    curve = rc_curve(five, single)
    # confidences are 0.4 (a1), 0.75 (a), 1 (root); anything in (0.4, 0.75] behaves like 0.75
    assert curve.operating_point(0.5) == curve.at(0.75)
    assert curve.operating_point(0.4) == curve.at(0.4)
    assert curve.operating_point(0.1) == curve.at(0.4)
    assert curve.operating_point(5.0) == curve.points[0]
    assert curve.operating_point(0.5).coverage == mean_coverage(five, predict_nodes(five, node_scores(five, single), 0.5))
