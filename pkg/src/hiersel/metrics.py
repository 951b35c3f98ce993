"""Hierarchical risk, coverage, calibration error and RC / CC curves.

Curves are evaluated at every threshold where some sample's prediction can
change (its ladder confidences, see :mod:`hiersel.rules`), plus ``0`` and
the smallest double above ``1``.  Between breakpoints the curve is constant.
Risk on a curve is the unconditional mean loss over all samples; root
predictions simply contribute zero loss.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import EmptyInput, LabelNotLeaf, TooFewPoints, ZeroBaseline
from .hierarchy import Hierarchy
from .rules import Prediction, check_rule, rule_ladder
from .scores import ScoreTable, lift_to_nodes
from .validation import check_same_length

LOSSES = ("zero-one", "severity")
DEFAULT_BINS = 15
ABOVE_ONE = float(np.nextafter(1.0, 2.0))


def _node_ids(predictions):
    return np.array(
        [p.node if isinstance(p, Prediction) else int(p) for p in predictions], dtype=np.int64
    )


def _check_labels(h, labels):
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(h.leaf_position(labels) < 0):
        raise LabelNotLeaf("labels must be leaves")
    return labels


def hier_risk_01(h: Hierarchy, predictions, labels) -> float:
    """Fraction of predictions that are not an ancestor (inclusive) of the label."""
    n = check_same_length(predictions, labels)
    if n == 0:
        raise EmptyInput("no predictions")
    nodes, labels = _node_ids(predictions), _check_labels(h, labels)
    return int(np.count_nonzero(~h.is_ancestor(nodes, labels))) / n


def severity_losses(h: Hierarchy, nodes, labels) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64)
    labels = _check_labels(h, labels)
    lca = h.lca_many(nodes, labels)
    cov_pred = h.coverage[nodes]
    safe = np.where(cov_pred > 0, cov_pred, 1.0)
    loss = 1.0 - h.coverage[lca] / safe
    # covers predicted == root (0/0) and every correct prediction
    return np.where(lca == nodes, 0.0, loss)


def severity_loss(h: Hierarchy, predicted: int, label: int) -> float:
    """Mistake severity ``1 - coverage(LCA(pred, label)) / coverage(pred)``."""
    if not h.is_leaf(label):
        raise LabelNotLeaf(f"label {h.names[label]!r} is not a leaf")
    return float(severity_losses(h, [predicted], [label])[0])


# coverage is averaged through per-class integer counts so that curve
# points and direct evaluation produce bit-identical values
def _coverage_classes(h):
    values, cls = np.unique(np.asarray(h.coverage), return_inverse=True)
    return values, cls


def _coverage_from_counts(counts, values, m):
    total = np.zeros(np.shape(counts)[:-1])
    for k, value in enumerate(values):
        total = total + counts[..., k] * value
    return total / m


def mean_coverage(h: Hierarchy, predictions) -> float:
    """Mean entropy-based coverage of the predicted nodes."""
    nodes = _node_ids(predictions)
    if len(nodes) == 0:
        raise EmptyInput("no predictions")
    values, cls = _coverage_classes(h)
    counts = np.bincount(cls[nodes], minlength=len(values))
    return float(_coverage_from_counts(counts, values, len(nodes)))


def _bin_index(conf, n_bins):
    return np.minimum((np.asarray(conf) * n_bins).astype(np.int64), n_bins - 1)


def ece(confidences, correct, n_bins: int = DEFAULT_BINS) -> float:
    """Expected calibration error with equal-width bins on [0, 1]."""
    n = check_same_length(confidences, correct)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if n == 0:
        return 0.0
    conf = np.asarray(confidences, dtype=float)
    corr = np.asarray(correct, dtype=float)
    b = _bin_index(conf, n_bins)
    gap = np.abs(np.bincount(b, corr, n_bins) - np.bincount(b, conf, n_bins))
    return float(gap.sum() / n)


# -- curves -------------------------------------------------------------------


class CurvePoint(NamedTuple):
    threshold: float
    coverage: float
    value: float


@dataclass(frozen=True)
class Curve:
    """RC (``kind='risk'``) or CC (``kind='ece'``) curve.

    Points run from the highest threshold to the lowest, i.e. by ascending
    coverage for coverage-monotone rules.
    """

    thresholds: np.ndarray
    coverage: np.ndarray
    values: np.ndarray
    kind: str = "risk"

    def __len__(self):
        return len(self.thresholds)

    @property
    def points(self) -> list[CurvePoint]:
        return [CurvePoint(*map(float, p)) for p in zip(self.thresholds, self.coverage, self.values)]

    def at(self, threshold: float) -> CurvePoint:
        hit = np.flatnonzero(self.thresholds == threshold)
        if len(hit) == 0:
            raise KeyError(threshold)
        return self.points[hit[0]]

    def operating_point(self, threshold: float) -> CurvePoint:
        """Point in effect at any ``threshold``: the one at the smallest breakpoint >= it."""
        # no confidence lies strictly between threshold and that breakpoint
        i = max(int(np.count_nonzero(self.thresholds >= threshold)) - 1, 0)
        return self.points[i]

    def to_csv(self) -> str:
        lines = ["threshold,coverage,value"]
        lines += [f"{t!r},{c!r},{v!r}" for t, c, v in self.points]
        return "\n".join(lines) + "\n"


def node_scores(h: Hierarchy, table: ScoreTable, temperature=None) -> np.ndarray:
    return lift_to_nodes(h, table.probabilities(temperature))


def _breakpoints(confs):
    finite = confs[:, :-1].ravel()
    return np.unique(np.concatenate([finite, [0.0, ABOVE_ONE]]))


def _sweep(values, thresholds, base, deltas):
    """``base + sum(deltas[e] for events e with values[e] < t)`` for each threshold."""
    order = np.argsort(values, kind="stable")
    csum = np.concatenate([[0], np.cumsum(deltas[order])])
    k = np.searchsorted(values[order], thresholds, side="left")
    return base + csum[k]


def _ladder_events(confs, quantity):
    """Event values and per-event deltas for a per-ladder-entry quantity."""
    ev = confs[:, :-1].ravel()
    delta = (quantity[:, 1:] - quantity[:, :-1]).ravel()
    keep = delta != 0
    return ev[keep], delta[keep]


def _prepare(h, table_or_scores, labels, rule):
    check_rule(rule)
    if isinstance(table_or_scores, ScoreTable):
        labels = table_or_scores.labels
        scores = node_scores(h, table_or_scores)
    else:
        scores = np.atleast_2d(np.asarray(table_or_scores, dtype=float))
    labels = _check_labels(h, labels)
    if len(scores) == 0:
        raise EmptyInput("no samples")
    check_same_length(scores, labels)
    nodes, confs = rule_ladder(h, scores, rule)
    return scores, labels, nodes, confs


def rc_curve(h: Hierarchy, table, rule: str = "climbing", loss: str = "zero-one", labels=None) -> Curve:
    """Breakpoint-exact hierarchical risk-coverage curve.

    ``table`` is a :class:`ScoreTable` or a node-score matrix (with
    ``labels`` given separately).
    """
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}")
    _, labels, nodes, confs = _prepare(h, table, labels, rule)
    m = len(labels)
    thresholds = _breakpoints(confs)[::-1]

    values, cls = _coverage_classes(h)
    node_cls = cls[nodes]
    counts = np.empty((len(thresholds), len(values)))
    for k in range(len(values)):
        member = (node_cls == k).astype(np.int64)
        ev, d = _ladder_events(confs, member)
        counts[:, k] = _sweep(ev, thresholds, int(member[:, 0].sum()), d)
    coverage = _coverage_from_counts(counts, values, m)

    if loss == "zero-one":
        wrong = (~h.is_ancestor(nodes, labels[:, None])).astype(np.int64)
        ev, d = _ladder_events(confs, wrong)
        risk = _sweep(ev, thresholds, int(wrong[:, 0].sum()), d) / m
    else:
        sev = severity_losses(h, nodes, labels[:, None])
        ev, d = _ladder_events(confs, sev)
        risk = _sweep(ev, thresholds, float(sev[:, 0].sum()), d) / m
        risk = np.clip(risk, 0.0, 1.0)
    return _ordered(thresholds, coverage, risk, "risk")


def _ordered(thresholds, coverage, values, kind):
    # thresholds arrive descending; a stable sort keeps that order within ties
    order = np.argsort(coverage, kind="stable")
    return Curve(thresholds[order], coverage[order], values[order], kind)


def cc_curve(h: Hierarchy, table, rule: str = "climbing", n_bins: int = DEFAULT_BINS, labels=None) -> Curve:
    """Calibration-coverage curve: ECE of non-root predictions versus coverage."""
    _, labels, nodes, confs = _prepare(h, table, labels, rule)
    m = len(labels)
    thresholds = _breakpoints(confs)[::-1]

    values, cls = _coverage_classes(h)
    node_cls = cls[nodes]
    counts = np.empty((len(thresholds), len(values)))
    for k in range(len(values)):
        member = (node_cls == k).astype(np.int64)
        ev, d = _ladder_events(confs, member)
        counts[:, k] = _sweep(ev, thresholds, int(member[:, 0].sum()), d)
    coverage = _coverage_from_counts(counts, values, m)

    kept = nodes != h.root
    conf = np.where(kept, np.where(np.isfinite(confs), confs, 0.0), 0.0)
    correct = h.is_ancestor(nodes, labels[:, None])
    bins = _bin_index(conf, n_bins)
    n_kept = np.zeros(len(thresholds))
    gap = np.zeros(len(thresholds))
    for b in range(n_bins):
        inside = kept & (bins == b)
        n_b = inside.astype(np.int64)
        c_b = (inside & correct).astype(np.int64)
        s_b = np.where(inside, conf, 0.0)
        ev, d = _ladder_events(confs, n_b)
        cnt = _sweep(ev, thresholds, int(n_b[:, 0].sum()), d)
        ev, d = _ladder_events(confs, c_b)
        hits = _sweep(ev, thresholds, int(c_b[:, 0].sum()), d)
        ev, d = _ladder_events(confs, s_b)
        mass = _sweep(ev, thresholds, float(s_b[:, 0].sum()), d)
        # an emptied bin must contribute exactly zero despite rounding
        gap += np.where(cnt > 0, np.abs(hits - mass), 0.0)
        n_kept += cnt
    value = np.where(n_kept > 0, gap / np.maximum(n_kept, 1), 0.0)
    return _ordered(thresholds, coverage, value, "ece")


def haurc(curve: Curve) -> float:
    """Trapezoidal area under a risk curve over coverage."""
    if curve.kind != "risk":
        raise ValueError("hAURC is defined on risk curves")
    if len(curve) < 2:
        raise TooFewPoints("need at least two curve points")
    order = np.argsort(curve.coverage, kind="stable")
    c, v = curve.coverage[order], curve.values[order]
    return float(np.sum(np.diff(c) * (v[1:] + v[:-1]) / 2.0))


def hierarchical_gain(haurc_selective: float, haurc_rule: float) -> float:
    """Percentage hAURC reduction of a rule relative to the selective baseline."""
    if haurc_selective <= 0:
        raise ZeroBaseline("selective hAURC is zero; gain undefined")
    return 100.0 * (haurc_selective - haurc_rule) / haurc_selective


@dataclass(frozen=True)
class EvalReport:
    haurc: float
    haurc_selective_baseline: float
    hierarchical_gain_percent: float | None
    full_coverage_risk: float
    ece_full_coverage: float
    rule: str
    n_samples: int
    loss: str = "zero-one"
    temperature: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(
    h: Hierarchy, table: ScoreTable, rule: str = "climbing", loss: str = "zero-one",
    n_bins: int = DEFAULT_BINS, temperature=None,
) -> tuple[EvalReport, Curve]:
    """hAURC, selective baseline, gain and full-coverage figures for one rule."""
    scores = node_scores(h, table, temperature)
    labels = table.labels
    curve = rc_curve(h, scores, rule, loss, labels=labels)
    area = haurc(curve)
    if rule == "selective":
        base = area
    else:
        base = haurc(rc_curve(h, scores, "selective", loss, labels=labels))
    gain = hierarchical_gain(base, area) if base > 0 else None
    leaf = h.leaves[np.argmax(scores[:, h.leaves], axis=1)]
    leaf_conf = scores[np.arange(len(scores)), leaf]
    report = EvalReport(
        haurc=area,
        haurc_selective_baseline=base,
        hierarchical_gain_percent=gain,
        full_coverage_risk=curve.at(0.0).value,
        ece_full_coverage=ece(leaf_conf, h.is_ancestor(leaf, labels), n_bins),
        rule=rule,
        n_samples=len(labels),
        loss=loss,
        temperature=temperature,
    )
    return report, curve
