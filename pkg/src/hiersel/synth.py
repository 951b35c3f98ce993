"""Seeded synthetic hierarchies and classifier outputs, plus reference oracles.

Randomness comes from numpy's ``default_rng`` (PCG64) seeded with integer
lists ``[seed, purpose, stream]``, so every artifact is reproducible from
its config alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import FewerThanTwoLeaves
from .guarantee import conformal_threshold, epsilon_for
from .hierarchy import Hierarchy, from_edges
from .metrics import (
    ABOVE_ONE,
    LOSSES,
    Curve,
    _coverage_classes,
    _coverage_from_counts,
    _ordered,
    severity_losses,
)
from .rules import check_rule, min_correct_thresholds, rule_ladder
from .scores import ScoreTable, lift_to_nodes, softmax

_HIERARCHY, _SCORES, _CALIBRATED = 0, 1, 2


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for :func:`random_hierarchy` and :func:`synth_scores`.

    ``sharpness`` sets how peaked each row is around its argmax leaf
    (``wrong_sharpness`` overrides it for misclassified rows).  ``overlap``
    is the chance that a misclassification lands on a leaf near the true
    one, with leftover mass favouring the true leaf, so that an ancestor
    of the wrong leaf is still correct.
    """

    seed: int = 0
    n_leaves: int = 10
    max_branching: int = 4
    sharpness: float = 4.0
    correct_prob: float = 0.8
    wrong_sharpness: float | None = None
    overlap: float = 0.0

    def __post_init__(self):
        if self.n_leaves < 2:
            raise FewerThanTwoLeaves(f"n_leaves={self.n_leaves}; need >= 2")
        if self.max_branching < 2:
            raise ValueError("max_branching must be >= 2")
        if self.sharpness <= 0 or (self.wrong_sharpness is not None and self.wrong_sharpness <= 0):
            raise ValueError("sharpness must be positive")
        if not 0 <= self.correct_prob <= 1 or not 0 <= self.overlap <= 1:
            raise ValueError("correct_prob and overlap must lie in [0, 1]")


def _rng(seed, purpose, stream=0):
    return np.random.default_rng([int(seed) & (2**64 - 1), purpose, int(stream)])


def random_hierarchy(cfg: GeneratorConfig) -> Hierarchy:
    """Random tree with ``cfg.n_leaves`` leaves and 2..max_branching children per node."""
    rng = _rng(cfg.seed, _HIERARCHY)
    width = len(str(cfg.n_leaves - 1))
    edges = []
    n_internal = 0
    n_leaf = 0
    queue = [("root", cfg.n_leaves)]
    while queue:
        name, size = queue.pop(0)
        k = int(rng.integers(2, min(cfg.max_branching, size) + 1))
        cuts = np.sort(rng.choice(size - 1, size=k - 1, replace=False) + 1)
        for part in np.diff(np.concatenate([[0], cuts, [size]])):
            if part == 1:
                child = f"c{n_leaf:0{width}d}"
                n_leaf += 1
            else:
                n_internal += 1
                child = f"n{n_internal}"
                queue.append((child, int(part)))
            edges.append((name, child))
    return from_edges(edges)


def _nearest_leaves(h: Hierarchy):
    """Per leaf column, the other leaves under its lowest ancestor with >1 leaf."""
    groups = []
    for y in h.leaves:
        v = int(h.parent[y])
        while h.leaf_count[v] < 2:
            v = int(h.parent[v])
        groups.append([h.leaf_position(u) for u in h.leaf_descendants(v) if u != y])
    width = max(len(g) for g in groups)
    table = np.zeros((len(groups), width), dtype=np.int64)
    for j, g in enumerate(groups):
        table[j, : len(g)] = g
    return table, np.array([len(g) for g in groups])


def synth_scores(cfg: GeneratorConfig, h: Hierarchy, n_samples: int, stream: int = 0) -> ScoreTable:
    """Probability rows from a peaked mixture with a known top-1 accuracy.

    For each sample a true leaf is drawn uniformly.  With probability
    ``correct_prob`` the row's peak sits on it, otherwise on another leaf.
    The peak mass is drawn just large enough to keep the peak the argmax,
    so leaf top-1 accuracy equals ``correct_prob`` in expectation.
    """
    rng = _rng(cfg.seed, _SCORES, stream)
    k, m = h.n_leaves, int(n_samples)
    rows = np.arange(m)
    y = rng.integers(k, size=m)
    correct = rng.random(m) < cfg.correct_prob
    near = rng.random(m) < cfg.overlap
    target = np.where(correct, y, (y + rng.integers(1, k, size=m)) % k)
    close = ~correct & near
    if close.any():
        table, sizes = _nearest_leaves(h)
        pick = (rng.random(m) * sizes[y]).astype(np.int64)
        target = np.where(close, table[y, np.minimum(pick, sizes[y] - 1)], target)

    w = rng.exponential(size=(m, k))
    w[rows, target] = 0.0
    w[close, y[close]] += w[close].sum(axis=1)
    w /= w.sum(axis=1, keepdims=True)

    sharp = np.where(correct, cfg.sharpness, cfg.wrong_sharpness or cfg.sharpness)
    peak = rng.random(m) ** (1.0 / sharp)
    floor = w.max(axis=1) / (1.0 + w.max(axis=1))
    p = floor + (1.0 - floor) * peak
    probs = (1.0 - p)[:, None] * w
    probs[rows, target] = p
    return ScoreTable.from_arrays(h, probs, y, kind="probs")


def synth_calibrated(h: Hierarchy, n_samples: int, seed: int = 0, logit_scale: float = 2.0,
                     stream: int = 0) -> ScoreTable:
    """Gaussian logits whose labels are drawn from their own softmax.

    Every node's lifted confidence is then calibrated by construction, and
    temperature 1 minimises the expected NLL.
    """
    rng = _rng(seed, _CALIBRATED, stream)
    z = rng.normal(scale=logit_scale, size=(int(n_samples), h.n_leaves))
    cdf = np.cumsum(softmax(z), axis=1)
    u = rng.random(len(z))[:, None]
    y = np.minimum((cdf < u).sum(axis=1), h.n_leaves - 1)
    return ScoreTable.from_arrays(h, z, y, kind="logits")


def brute_force_rc(h: Hierarchy, table, rule: str = "climbing", loss: str = "zero-one",
                   grid_size: int = 10_001, labels=None, thresholds=None) -> Curve:
    """Risk-coverage curve evaluated rule-by-threshold on a uniform grid.

    The grid spans ``[0, 1 + ulp]``; ``thresholds`` overrides it.
    """
    check_rule(rule)
    if loss not in LOSSES:
        raise ValueError(f"loss must be one of {LOSSES}")
    if isinstance(table, ScoreTable):
        labels = table.labels
        scores = lift_to_nodes(h, table.probabilities())
    else:
        scores = np.atleast_2d(np.asarray(table, dtype=float))
    labels = np.asarray(labels, dtype=np.int64)
    if thresholds is None:
        if grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        thresholds = np.linspace(0.0, ABOVE_ONE, grid_size)
    thresholds = np.sort(np.asarray(thresholds, dtype=float))[::-1]
    nodes, confs = rule_ladder(h, scores, rule)
    m = len(scores)
    rows = np.arange(m)
    values, cls = _coverage_classes(h)
    cov, risk = [], []
    # thresholds are independent; chunking only bounds memory
    for start in range(0, len(thresholds), 256):
        block = thresholds[start:start + 256]
        idx = (confs[None, :, :] < block[:, None, None]).sum(axis=2)
        pred = nodes[rows[None, :], idx]
        counts = np.stack([np.bincount(cls[p], minlength=len(values)) for p in pred])
        cov.append(_coverage_from_counts(counts, values, m))
        if loss == "zero-one":
            risk.append(np.count_nonzero(~h.is_ancestor(pred, labels[None, :]), axis=1) / m)
        else:
            risk.append(severity_losses(h, pred, labels[None, :]).sum(axis=1) / m)
    cov, risk = np.concatenate(cov), np.concatenate(risk)
    return _ordered(thresholds, cov, risk, "risk")


def monte_carlo_guarantee(cfg: GeneratorConfig, alpha: float, delta: float, n_cal: int,
                         n_trials: int, test_pool: int, eps_tight: float = 1e-9) -> dict:
    """Repeat Climbing threshold calibration on fresh draws and score each on a fixed pool.

    Returns the fraction of trials whose pool accuracy is within epsilon of
    ``1 - alpha`` and the mean absolute accuracy error.
    """
    if n_trials < 100:
        raise ValueError("n_trials must be >= 100")
    h = random_hierarchy(cfg)
    pool = synth_scores(cfg, h, test_pool, stream=0)
    pool_scores = lift_to_nodes(h, pool.probabilities())
    nodes, confs = rule_ladder(h, pool_scores, "climbing")
    right = h.is_ancestor(nodes, pool.labels[:, None])
    rows = np.arange(len(pool))
    epsilon = epsilon_for(n_cal, alpha, delta, allow_degenerate=True)

    thetas_hat = np.empty(n_trials)
    accuracy = np.empty(n_trials)
    for trial in range(n_trials):
        cal = synth_scores(cfg, h, n_cal, stream=trial + 1)
        scores = lift_to_nodes(h, cal.probabilities())
        theta = conformal_threshold(min_correct_thresholds(h, scores, cal.labels, eps_tight), alpha)
        thetas_hat[trial] = theta
        accuracy[trial] = right[rows, (confs < theta).sum(axis=1)].mean()
    err = np.abs(accuracy - (1.0 - alpha))
    return {
        "empirical_confidence": float(np.mean(err <= epsilon)),
        "mean_abs_error": float(err.mean()),
        "epsilon": epsilon,
        "target_accuracy": 1.0 - alpha,
        "mean_accuracy": float(accuracy.mean()),
        "mean_theta_hat": float(thetas_hat.mean()),
        "n_cal": int(n_cal),
        "n_trials": int(n_trials),
        "test_pool": int(test_pool),
    }


def with_seed(cfg: GeneratorConfig, seed: int) -> GeneratorConfig:
    return replace(cfg, seed=seed)
