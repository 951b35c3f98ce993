import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hiersel import ScoreTable, fit_temperature, lift_to_nodes, load_scores, softmax
from hiersel.exceptions import (
    KindMismatch,
    LabelNotLeaf,
    MalformedLine,
    MissingLeafColumn,
    NonFiniteValue,
    RowSumOutOfTolerance,
    UnknownLabel,
    UnknownLeafColumn,
)
from hiersel.scores import mean_nll, parse_scores, write_scores
from hiersel.synth import GeneratorConfig, random_hierarchy, synth_calibrated

from conftest import tree_and_row


def test_column_permutation_gives_same_table(five):
    a = parse_scores("sample_id,label,a1,a2,b\ns,b,0.4,0.35,0.25\n", five)
    b = parse_scores("sample_id,label,b,a2,a1\ns,b,0.25,0.35,0.4\n", five)
    assert np.array_equal(a.values, b.values)
    assert a.labels.tolist() == [five.index("b")]
    assert a.label_columns.tolist() == [0]


@pytest.mark.parametrize(
    "text, error",
    [
        ("sample_id,label,a1,a2,b\ns,zebra,0.4,0.35,0.25\n", UnknownLabel),
        ("sample_id,label,a1,a2,b\ns,a,0.4,0.35,0.25\n", LabelNotLeaf),
        ("sample_id,label,a1,a2,b\ns,b,0.5,0.5,0.1\n", RowSumOutOfTolerance),
        ("sample_id,label,a1,a2,b\ns,b,-0.1,0.85,0.25\n", RowSumOutOfTolerance),
        ("sample_id,label,a1,a2,b\ns,b,nan,0.5,0.5\n", NonFiniteValue),
        ("sample_id,label,a1,a2,zz\ns,b,0.4,0.35,0.25\n", UnknownLeafColumn),
        ("sample_id,label,a1,a2,a\ns,b,0.4,0.35,0.25\n", UnknownLeafColumn),
        ("sample_id,label,a1,a2\ns,b,0.4,0.6\n", MissingLeafColumn),
        ("sample_id,label,a1,a2,b\ns,b,0.4,0.35\n", MalformedLine),
        ("sample_id,label,a1,a2,b\ns,b,x,0.35,0.25\n", MalformedLine),
        ("id,label,a1,a2,b\ns,b,0.4,0.35,0.25\n", MalformedLine),
        ("", MalformedLine),
    ],
)
def test_load_errors(five, text, error):
    with pytest.raises(error):
        parse_scores(text, five)


def test_row_sum_tolerance(five):
    ok = parse_scores("sample_id,label,a1,a2,b\ns,b,0.40005,0.35,0.25\n", five)
    assert ok.probabilities().sum() == pytest.approx(1.0, abs=1e-15)


def test_logits_skip_row_sum_check(five):
    t = parse_scores("sample_id,label,a1,a2,b\ns,b,3,-1,0.5\n", five, kind="logits")
    assert t.kind == "logits"


def test_write_then_load_roundtrip(five):
    t = ScoreTable.from_arrays(five, [[0.25, 0.4, 0.35], [0.1, 0.2, 0.7]], [0, 2])
    buf = io.StringIO()
    write_scores(t, five, buf)
    again = load_scores(io.StringIO(buf.getvalue()), five)
    assert np.array_equal(again.values, t.values)
    assert np.array_equal(again.labels, t.labels)


def test_softmax_examples():
    assert np.allclose(softmax([0.0, 0.0, 0.0]), [1 / 3] * 3, atol=1e-15)
    c = 3.7
    assert np.allclose(softmax([c, c + math.log(2)]), [1 / 3, 2 / 3], atol=1e-15)
    big = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(big)) and big[0] == pytest.approx(1.0) and big[1] < 1e-300


@given(arrays(float, st.integers(2, 8), elements=st.floats(-50, 50)),
       st.floats(0.05, 10.0))
def test_softmax_properties(z, t):
    p = softmax(z / t)
    assert np.all(p > 0) or np.ptp(z) / t > 700
    assert abs(p.sum() - 1.0) <= 1e-9
    # rounding may tie nearly-equal logits, but never reorder them
    assert p[np.argmax(z)] == p.max()


def test_lift_five_node(five, five_probs):
    ns = lift_to_nodes(five, five_probs)
    assert ns[five.index("a")] == pytest.approx(0.75, abs=1e-15)
    assert ns[five.root] == 1.0
    assert ns[five.index("a1")] == 0.4


def test_lift_one_hot_and_uniform(five):
    for j, y in enumerate(five.leaves):
        ns = lift_to_nodes(five, np.eye(3)[j])
        expected = five.is_ancestor(np.arange(5), y).astype(float)
        assert np.array_equal(ns, expected)
    ns = lift_to_nodes(five, np.full(3, 1 / 3))
    assert np.allclose(ns, five.leaf_count / 3, atol=1e-15)


@given(tree_and_row(), st.floats(0, 1))
def test_lift_invariants_and_mixture(a, lam):
    h, p, _ = a
    ns = lift_to_nodes(h, p)
    assert ns[h.root] == 1.0
    for v in range(h.node_count):
        if h.children[v] and v != h.root:
            assert ns[v] == pytest.approx(sum(p[h.leaf_position(y)] for y in h.leaf_descendants(v)), abs=1e-6)
        if h.parent[v] >= 0:
            assert ns[h.parent[v]] >= ns[v]
    # mixture commutes with lifting on the same tree
    q = np.roll(p, 1)
    mixed = lift_to_nodes(h, lam * p + (1 - lam) * q)
    assert np.allclose(mixed, lam * ns + (1 - lam) * lift_to_nodes(h, q), atol=1e-9)


def test_temperature_hits_lower_bound():
    assert fit_temperature(np.array([[10.0, 0.0]]), [0]) == 0.05


def test_temperature_rejects_probs(five, five_probs):
    t = ScoreTable.from_arrays(five, five_probs, [0])
    with pytest.raises(KindMismatch):
        fit_temperature(t)


def test_temperature_is_local_minimum():
    h = random_hierarchy(GeneratorConfig(seed=1, n_leaves=8))
    t = synth_calibrated(h, 3000, seed=5, logit_scale=3.0)
    z = t.values * 0.7
    best = fit_temperature(z, t.label_columns)
    f = mean_nll(z, t.label_columns, best)
    assert f <= mean_nll(z, t.label_columns, best + 0.1) + 1e-9
    assert f <= mean_nll(z, t.label_columns, best - 0.1) + 1e-9


def test_temperature_on_probabilities_uses_log_surrogate(five):
    t = ScoreTable.from_arrays(five, [[0.2, 0.5, 0.3]], [0])
    assert np.allclose(t.probabilities(1.0), [[0.2, 0.5, 0.3]], atol=1e-12)
    sharper = t.probabilities(0.5)[0]
    assert np.allclose(sharper, np.array([0.04, 0.25, 0.09]) / 0.38, atol=1e-12)


def test_subset_and_with_probabilities(five):
    t = ScoreTable.from_arrays(five, [[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]], [2, 0], kind="logits")
    p = t.with_probabilities(2.0)
    assert p.kind == "probs"
    assert np.allclose(p.values[1], 1 / 3)
    assert t.subset([1]).sample_ids == ("1",)
