"""Input checks shared by the library functions and estimators."""

import numpy as np

from .exceptions import DomainError, LengthMismatch, NonFiniteValue, RowSumOutOfTolerance

ROW_SUM_TOL = 1e-4


def check_fraction(value, name, *, low=0.0, high=1.0, closed=False):
    """Return ``value`` as float if it lies in (low, high), or [low, high] if closed."""
    value = float(value)
    inside = low <= value <= high if closed else low < value < high
    if not inside:
        bracket = "[{}, {}]" if closed else "({}, {})"
        raise DomainError(f"{name} must lie in {bracket.format(low, high)}, got {value}")
    return value


def check_score_matrix(values, n_columns=None):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
    if values.ndim != 2:
        raise ValueError(f"expected a 2-d score matrix, got shape {values.shape}")
    if n_columns is not None and values.shape[1] != n_columns:
        raise ValueError(f"expected {n_columns} leaf columns, got {values.shape[1]}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue("scores contain NaN or infinite values")
    return values


def check_probability_rows(probs, tol=ROW_SUM_TOL):
    """Validate non-negative rows summing to one within ``tol``; return them renormalised."""
    probs = check_score_matrix(probs)
    if np.any(probs < 0):
        bad = int(np.flatnonzero((probs < 0).any(axis=1))[0])
        raise RowSumOutOfTolerance(f"row {bad} has negative probabilities")
    sums = probs.sum(axis=1)
    off = np.abs(sums - 1.0) > tol
    if np.any(off):
        bad = int(np.flatnonzero(off)[0])
        raise RowSumOutOfTolerance(f"row {bad} sums to {sums[bad]:.6g}")
    return probs / sums[:, None]


def check_same_length(*arrays):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise LengthMismatch(f"inputs have different lengths: {sorted(lengths)}")
    return lengths.pop() if lengths else 0
