"""Per-sample leaf scores: CSV ingestion, softmax, temperature scaling and
lifting of leaf probabilities to every node of a hierarchy."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    KindMismatch,
    LabelNotLeaf,
    MalformedLine,
    MissingLeafColumn,
    NonFiniteValue,
    UnknownLabel,
    UnknownLeafColumn,
)
from .hierarchy import Hierarchy
from .validation import check_probability_rows, check_score_matrix

KINDS = ("probs", "logits")
T_MIN, T_MAX = 0.05, 10.0
PROB_FLOOR = 1e-12
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ScoreTable:
    """Leaf scores for a batch of samples.

    ``values`` has one row per sample and one column per leaf, columns in the
    hierarchy's canonical leaf order (ascending leaf node id).  ``labels``
    holds true-leaf node ids and ``label_columns`` the matching column
    indices.
    """

    sample_ids: tuple
    labels: np.ndarray
    label_columns: np.ndarray
    values: np.ndarray
    kind: str = "probs"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for arr in (self.labels, self.label_columns, self.values):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.sample_ids)

    @classmethod
    def from_arrays(cls, h: Hierarchy, values, label_columns, kind="probs", sample_ids=None):
        """Build a table from a matrix already in canonical leaf order."""
        values = check_score_matrix(values, h.n_leaves).copy()
        label_columns = np.asarray(label_columns, dtype=np.int64).copy()
        if label_columns.shape != (len(values),):
            raise ValueError("need exactly one label per row")
        if np.any((label_columns < 0) | (label_columns >= h.n_leaves)):
            raise UnknownLabel("label column out of range")
        if kind == "probs":
            check_probability_rows(values)
        if sample_ids is None:
            sample_ids = tuple(str(i) for i in range(len(values)))
        return cls(tuple(sample_ids), h.leaves[label_columns].copy(), label_columns, values, kind)

    def probabilities(self, temperature=None) -> np.ndarray:
        """Row-normalised leaf probabilities, temperature-scaled if requested.

        Probability tables rescaled by a temperature go through surrogate
        logits ``log(max(p, 1e-12))``.
        """
        if self.kind == "logits":
            t = 1.0 if temperature is None else float(temperature)
            return softmax(self.values / t)
        if temperature is None:
            return check_probability_rows(self.values)
        return softmax(self.logits() / float(temperature))

    def logits(self) -> np.ndarray:
        if self.kind == "logits":
            return np.array(self.values)
        return np.log(np.maximum(self.values, PROB_FLOOR))

    def with_probabilities(self, temperature=None) -> "ScoreTable":
        """Copy of this table converted to (optionally temperature-scaled) probabilities."""
        return ScoreTable(
            self.sample_ids, self.labels.copy(), self.label_columns.copy(),
            self.probabilities(temperature), "probs",
        )

    def subset(self, rows) -> "ScoreTable":
        rows = np.asarray(rows, dtype=np.intp)
        return ScoreTable(
            tuple(self.sample_ids[i] for i in rows), self.labels[rows], self.label_columns[rows],
            self.values[rows], self.kind,
        )


def load_scores(source, h: Hierarchy, kind: str = "probs") -> ScoreTable:
    """Read a ``sample_id,label,<leaf...>`` CSV.

    ``source`` is a path or an open text file.  Leaf columns may come in any
    order; they are permuted into the hierarchy's canonical order.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if hasattr(source, "read"):
        return _parse_scores(source.read(), h, kind)
    with open(source, encoding="utf-8", newline="") as fh:
        return _parse_scores(fh.read(), h, kind)


def parse_scores(text: str, h: Hierarchy, kind: str = "probs") -> ScoreTable:
    return _parse_scores(text, h, kind)


def _parse_scores(text, h, kind):
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise MalformedLine(1, "empty scores file")
    header = [c.strip() for c in rows[0]]
    if header[:2] != ["sample_id", "label"]:
        raise MalformedLine(1, "header must start with 'sample_id,label'")
    leaf_cols = header[2:]
    if len(set(leaf_cols)) != len(leaf_cols):
        raise MalformedLine(1, "duplicate leaf column")
    perm = np.empty(h.n_leaves, dtype=np.int64)
    seen = set()
    for j, name in enumerate(leaf_cols):
        if name not in h or not h.is_leaf(h.index(name)):
            raise UnknownLeafColumn(f"column {name!r} is not a leaf of the hierarchy")
        perm[h.leaf_position(h.index(name))] = j
        seen.add(name)
    missing = [n for n in h.leaf_names if n not in seen]
    if missing:
        raise MissingLeafColumn(f"missing leaf columns: {', '.join(missing[:5])}")

    ids, label_cols, values = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MalformedLine(lineno, f"expected {len(header)} fields, got {len(row)}")
        label = row[1].strip()
        if label not in h:
            raise UnknownLabel(f"line {lineno}: label {label!r} not in hierarchy")
        node = h.index(label)
        if not h.is_leaf(node):
            raise LabelNotLeaf(f"line {lineno}: label {label!r} is an internal node")
        try:
            vals = [float(x) for x in row[2:]]
        except ValueError:
            raise MalformedLine(lineno, "non-numeric score") from None
        ids.append(row[0].strip())
        label_cols.append(h.leaf_position(node))
        values.append(vals)
    if not values:
        raise MalformedLine(2, "no score rows")
    values = np.asarray(values, dtype=float)[:, perm]
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("scores contain NaN or infinite values")
    return ScoreTable.from_arrays(h, values, label_cols, kind=kind, sample_ids=ids)


def write_scores(table: ScoreTable, h: Hierarchy, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["sample_id", "label", *h.leaf_names])
    for sid, lab, row in zip(table.sample_ids, table.labels, table.values):
        writer.writerow([sid, h.names[lab], *(repr(float(x)) for x in row)])


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mean_nll(logits, label_columns, temperature: float) -> float:
    """Mean negative log-likelihood of the true leaf under ``softmax(logits / t)``."""
    z = np.asarray(logits, dtype=float) / temperature
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(z)), label_columns]))


def fit_temperature(logits, label_columns=None, *, bounds=(T_MIN, T_MAX), tol=1e-4) -> float:
    """Temperature minimising mean NLL, by golden-section search over ``bounds``.

    Accepts a logits :class:`ScoreTable` (labels taken from it) or a raw
    logit matrix plus label column indices.
    """
    if isinstance(logits, ScoreTable):
        if logits.kind != "logits":
            raise KindMismatch("temperature fitting needs logits, got a probability table")
        label_columns = logits.label_columns
        logits = logits.values
    if label_columns is None:
        raise ValueError("label_columns is required with a raw logit matrix")
    z = check_score_matrix(logits)
    y = np.asarray(label_columns, dtype=np.int64)
    if len(z) == 0:
        raise ValueError("need at least one sample")

    def f(t):
        return mean_nll(z, y, t)

    a, b = map(float, bounds)
    c, d = b - _INV_PHI * (b - a), a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    t = 0.5 * (a + b)
    # a monotone objective drives the bracket onto an endpoint
    for edge in bounds:
        if abs(t - edge) <= tol and f(edge) <= f(t):
            t = float(edge)
    return t


def lift_to_nodes(h: Hierarchy, probs) -> np.ndarray:
    """Confidence of every node as the sum of its leaf descendants' probabilities.

    ``probs`` is one row (shape ``(n_leaves,)``) or a matrix of rows in
    canonical leaf order.  Rows are renormalised to sum to one, summed
    bottom-up, clamped to [0, 1], and the root is pinned to exactly 1.
    """
    probs = np.asarray(probs, dtype=float)
    single = probs.ndim == 1
    p = check_probability_rows(probs)
    scores = np.zeros((len(p), h.node_count))
    scores[:, h.leaves] = p
    for v in h.topological_order[::-1]:
        parent = h.parent[v]
        if parent >= 0:
            scores[:, parent] += scores[:, v]
    np.clip(scores, 0.0, 1.0, out=scores)
    scores[:, h.root] = 1.0
    return scores[0] if single else scores
