"""Hierarchical selective inference rules.

A rule maps one sample's node confidences and a threshold ``theta`` to a
predicted node.  All rules accept a node once its confidence is ``>= theta``.

Two forms are provided.  The ``infer_*`` functions follow each rule's
definition step by step on a single sample.  :func:`rule_ladder` gives the
batched form: for every supported rule, the prediction at ``theta`` is the
first entry of a per-sample ladder of nodes (with non-decreasing
confidence) whose confidence is ``>= theta``, falling back to the root.
Curves and threshold calibration are built on ladders.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import LabelNotLeaf, UnsupportedRule
from .hierarchy import Hierarchy

RULES = ("selective", "climbing", "max-coverage", "jumping")
DEFAULT_EPS_TIGHT = 1e-9


@dataclass(frozen=True)
class Prediction:
    node: int
    confidence: float


def check_rule(rule: str) -> str:
    if rule not in RULES:
        raise UnsupportedRule(f"unknown rule {rule!r}; choose from {', '.join(RULES)}")
    return rule


def argmax_leaf(h: Hierarchy, ns) -> int:
    """Most confident leaf; ties go to the lowest node id."""
    return int(h.leaves[int(np.argmax(np.asarray(ns)[h.leaves]))])


def _pred(ns, v):
    return Prediction(int(v), float(ns[v]))


def infer_selective(h: Hierarchy, ns, theta: float) -> Prediction:
    """Flat selective baseline: the argmax leaf if confident enough, else the root."""
    y = argmax_leaf(h, ns)
    return _pred(ns, y if ns[y] >= theta else h.root)


def infer_climbing(h: Hierarchy, ns, theta: float) -> Prediction:
    """Climb from the argmax leaf towards the root until confidence reaches ``theta``."""
    v = argmax_leaf(h, ns)
    while ns[v] < theta and v != h.root:
        v = int(h.parent[v])
    return _pred(ns, v)


def infer_max_coverage(h: Hierarchy, ns, theta: float) -> Prediction:
    """Highest-coverage node among those with confidence ``>= theta``.

    Ties go to higher confidence, then to leaves (a leaf beats its
    single-child ancestors, which share its coverage and confidence), then
    to the lower node id.  If no node
    qualifies (``theta > 1``) the root is returned.
    """
    best = None
    for v in range(h.node_count):
        if ns[v] < theta:
            continue
        key = (h.coverage[v], ns[v], h.is_leaf(v), -v)
        if best is None or key > best[0]:
            best = (key, v)
    return _pred(ns, h.root if best is None else best[1])


def infer_jumping(h: Hierarchy, ns, theta: float) -> Prediction:
    """Jump level by level to the most confident node of the next height.

    Leaves shallower than the deepest one are treated as if padded with a
    chain of dummy ancestors sharing their confidence; a dummy is reported
    as the leaf it stands in for.
    """
    depth_max = h.max_depth
    v = argmax_leaf(h, ns)
    height = 0
    while ns[v] < theta and height < depth_max:
        height += 1
        level = depth_max - height
        best = None
        for u in range(h.node_count):
            if h.is_leaf(u):
                present = h.depth[u] <= level
            else:
                present = h.depth[u] == level
            if present and (best is None or ns[u] > ns[best]):
                best = u
        v = best
    return _pred(ns, v)


_SCALAR = {
    "selective": infer_selective,
    "climbing": infer_climbing,
    "max-coverage": infer_max_coverage,
    "jumping": infer_jumping,
}


def infer(h: Hierarchy, ns, theta: float, rule: str = "climbing") -> Prediction:
    return _SCALAR[check_rule(rule)](h, ns, theta)


def min_correct_threshold(
    h: Hierarchy, ns, label: int, eps_tight: float = DEFAULT_EPS_TIGHT, *, convex: bool = False
) -> float:
    """Smallest threshold at which Climbing predicts correctly (up to ``eps_tight``).

    Walks up from the argmax leaf; every incorrect node ``v`` on the way sets
    the threshold to ``f(v) + eps_tight * f(parent(v))``.  With ``convex``
    the update is ``f(v) + eps_tight * (f(parent(v)) - f(v))`` instead.
    """
    if not h.is_leaf(label):
        raise LabelNotLeaf(f"label {h.names[label]!r} is not a leaf")
    theta = 0.0
    v = argmax_leaf(h, ns)
    while not h.is_ancestor(v, label):
        p = int(h.parent[v])
        step = ns[p] - ns[v] if convex else ns[p]
        theta = ns[v] + eps_tight * step
        v = p
    return float(min(max(theta, 0.0), 1.0))


# -- batched ladders ---------------------------------------------------------


@lru_cache(maxsize=32)
def _climb_paths(h: Hierarchy) -> np.ndarray:
    """Leaf-to-root path per leaf column, right-padded with the root."""
    paths = np.full((h.n_leaves, h.max_depth + 1), h.root, dtype=np.int64)
    for j, y in enumerate(h.leaves):
        anc = h.ancestors(y)
        paths[j, : len(anc)] = anc
    return paths


@lru_cache(maxsize=32)
def _jump_levels(h: Hierarchy) -> tuple:
    """Candidate node ids for every height of the padded tree."""
    is_leaf = np.array([h.is_leaf(v) for v in range(h.node_count)])
    levels = []
    for height in range(h.max_depth + 1):
        level = h.max_depth - height
        if height == 0:
            mask = is_leaf
        else:
            mask = np.where(is_leaf, h.depth <= level, h.depth == level)
        levels.append(np.flatnonzero(mask))
    return tuple(levels)


def _argmax_leaf_columns(h, scores):
    return np.argmax(scores[:, h.leaves], axis=1)


def rule_ladder(h: Hierarchy, scores, rule: str):
    """Per-sample ladders ``(nodes, confs)`` for a matrix of node scores.

    Both outputs have shape ``(m, width)``; confidences are non-decreasing
    along each row and the last column is a ``(root, +inf)`` sentinel, so the
    prediction at ``theta`` is ``nodes[i, (confs[i] < theta).sum()]``.
    """
    check_rule(rule)
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    m = len(scores)
    rows = np.arange(m)[:, None]
    if rule == "selective":
        leaf = h.leaves[_argmax_leaf_columns(h, scores)]
        nodes = np.stack([leaf, np.full(m, h.root)], axis=1)
    elif rule == "climbing":
        nodes = _climb_paths(h)[_argmax_leaf_columns(h, scores)]
    elif rule == "jumping":
        cols = []
        for cand in _jump_levels(h):
            cols.append(cand[np.argmax(scores[:, cand], axis=1)])
        nodes = np.stack(cols, axis=1)
    else:
        nodes = _max_coverage_records(h, scores)
    confs = scores[rows, nodes]
    nodes = np.concatenate([nodes, np.full((m, 1), h.root)], axis=1)
    confs = np.concatenate([confs, np.full((m, 1), np.inf)], axis=1)
    return nodes, confs


def _max_coverage_records(h, scores):
    m, n = scores.shape
    ids = np.broadcast_to(np.arange(n), (m, n))
    cov = np.broadcast_to(h.coverage, (m, n))
    internal = np.broadcast_to(h.leaf_position(np.arange(n)) < 0, (m, n))
    # priority: coverage desc, confidence desc, leaves first, id asc
    order = np.lexsort((ids, internal, -scores, -cov), axis=-1)
    ranked = np.take_along_axis(scores, order, axis=1)
    prev_max = np.maximum.accumulate(ranked, axis=1)
    record = np.ones_like(ranked, dtype=bool)
    record[:, 1:] = ranked[:, 1:] > prev_max[:, :-1]
    width = int(record.sum(axis=1).max())
    pos = np.argsort(~record, axis=1, kind="stable")[:, :width]
    count = record.sum(axis=1)
    pad = np.arange(width)[None, :] >= count[:, None]
    pos = np.where(pad, np.take_along_axis(pos, (count - 1)[:, None], axis=1), pos)
    return np.take_along_axis(order, pos, axis=1)


def ladder_index(confs, theta):
    return (np.asarray(confs) < theta).sum(axis=-1)


def predict_nodes(h: Hierarchy, scores, theta: float, rule: str = "climbing") -> np.ndarray:
    """Predicted node id per row of a node-score matrix."""
    nodes, confs = rule_ladder(h, scores, rule)
    idx = ladder_index(confs, theta)
    return nodes[np.arange(len(nodes)), idx]


def min_correct_thresholds(
    h: Hierarchy, scores, labels, eps_tight: float = DEFAULT_EPS_TIGHT, *, convex: bool = False
) -> np.ndarray:
    """Vectorised :func:`min_correct_threshold` over rows of ``scores``."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(h.leaf_position(labels) < 0):
        raise LabelNotLeaf("all labels must be leaves")
    paths = _climb_paths(h)[_argmax_leaf_columns(h, scores)]
    confs = scores[np.arange(len(scores))[:, None], paths]
    wrong = ~h.is_ancestor(paths, labels[:, None])
    last = wrong.sum(axis=1) - 1
    has = last >= 0
    rows = np.flatnonzero(has)
    f_v = confs[rows, last[has]]
    f_p = confs[rows, last[has] + 1]
    theta = np.zeros(len(scores))
    theta[rows] = f_v + eps_tight * ((f_p - f_v) if convex else f_p)
    return np.clip(theta, 0.0, 1.0)
