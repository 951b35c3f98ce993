"""Threshold calibration with a distribution-free accuracy guarantee.

Given a calibration set, every sample gets the smallest threshold at which
the Climbing rule would have predicted it correctly.  The calibrated
threshold is the ``ceil((n + 1)(1 - alpha))``-th smallest of those values
(or 1 when that index falls off the end).  For an exchangeable test sample,
the probability of landing at or below that threshold follows
``Beta(n + 1 - l, l)`` with ``l = floor((n + 1) * alpha)``, so the band
``|C - (1 - alpha)| <= epsilon`` holds with probability ``1 - delta``.
Any three of ``(n, alpha, epsilon, delta)`` determine the fourth.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import (
    CapExceeded,
    DegenerateBeta,
    DomainError,
    EmptyCalibrationSet,
    EmptyInput,
    UnsupportedRule,
)
from .hierarchy import Hierarchy
from .metrics import hier_risk_01, mean_coverage
from .rules import DEFAULT_EPS_TIGHT, check_rule, min_correct_thresholds, predict_nodes
from .scores import ScoreTable, fit_temperature, lift_to_nodes
from .validation import check_fraction

_CF_EPS = 1e-15
_CF_TINY = 1e-300
_CF_MAXITER = 100_000
N_CAP = 10**8


# -- regularized incomplete beta ---------------------------------------------


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAXITER + 1):
        m2 = 2 * m
        for aa in (
            m * (b - m) * x / ((qam + m2) * (a + m2)),
            -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2)),
        ):
            d = 1.0 + aa * d
            if abs(d) < _CF_TINY:
                d = _CF_TINY
            c = 1.0 + aa / c
            if abs(c) < _CF_TINY:
                c = _CF_TINY
            d = 1.0 / d
            step = d * c
            h *= step
        if abs(step - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b})")


def _beta_cdf(a, b, x):
    if not (a > 0 and b > 0):
        raise DomainError(f"Beta parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    # the fraction converges fast only below the mean; use symmetry above it
    flip = x > (a + 1.0) / (a + b + 2.0)
    if flip:
        a, b, x = b, a, 1.0 - x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    val = math.exp(log_front) * _betacf(a, b, x) / a
    val = 1.0 - val if flip else val
    return min(max(val, 0.0), 1.0)


_beta_cdf_array = np.vectorize(_beta_cdf, otypes=[float])


def beta_cdf(a, b, x):
    """Regularized incomplete beta ``I_x(a, b)``, the CDF of ``Beta(a, b)`` at ``x``.

    Scalars give a float; array arguments broadcast.
    """
    if np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(x) == 0:
        return _beta_cdf(float(a), float(b), float(x))
    return _beta_cdf_array(a, b, x)


# -- parameter solving ---------------------------------------------------------


def _order_index(n, alpha):
    """1-based rank ``ceil((n + 1)(1 - alpha))`` of the calibrated threshold."""
    # rounding strips float noise such as 10 * 0.8 = 8.000000000000002
    return math.ceil(round((n + 1) * (1.0 - alpha), 9))


def beta_params(n: int, alpha: float, *, allow_degenerate: bool = False):
    """``(a, b, degenerate)`` of the marginal-coverage distribution ``Beta(n + 1 - l, l)``.

    With ``alpha < 1 / (n + 1)`` the second parameter is zero; that raises
    :class:`DegenerateBeta` unless ``allow_degenerate``, in which case the
    nearest proper member ``Beta(n, 1)`` is returned.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    check_fraction(alpha, "alpha")
    l = math.floor(round((n + 1) * alpha, 9))
    if l == 0:
        if not allow_degenerate:
            raise DegenerateBeta(f"alpha={alpha} < 1/(n+1) with n={n}: Beta second parameter is 0")
        return float(n), 1.0, True
    return float(n + 1 - l), float(l), False


def band_mass(n: int, alpha: float, epsilon: float, *, allow_degenerate: bool = False) -> float:
    """``P(|C(n, alpha) - (1 - alpha)| <= epsilon)`` under the Beta law of ``C``."""
    a, b, _ = beta_params(n, alpha, allow_degenerate=allow_degenerate)
    hi = min(1.0, 1.0 - alpha + epsilon)
    lo = max(0.0, 1.0 - alpha - epsilon)
    return float(beta_cdf(a, b, hi) - beta_cdf(a, b, lo))


def epsilon_for(n: int, alpha: float, delta: float, *, tol: float = 1e-6,
                allow_degenerate: bool = False) -> float:
    """Smallest band half-width holding with probability ``1 - delta`` (bisection)."""
    check_fraction(delta, "delta")
    beta_params(n, alpha, allow_degenerate=allow_degenerate)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if band_mass(n, alpha, mid, allow_degenerate=allow_degenerate) >= 1.0 - delta:
            hi = mid
        else:
            lo = mid
    return hi


def delta_for(n: int, alpha: float, epsilon: float, *, allow_degenerate: bool = False) -> float:
    """Failure probability of the ``epsilon`` band: ``1 - band_mass``."""
    check_fraction(epsilon, "epsilon", closed=True)
    mass = band_mass(n, alpha, epsilon, allow_degenerate=allow_degenerate)
    return min(max(1.0 - mass, 0.0), 1.0)


def _meets(n, alpha, epsilon, delta):
    try:
        return epsilon_for(n, alpha, delta) <= epsilon
    except DegenerateBeta:
        return False


def n_for(alpha: float, epsilon: float, delta: float, *, cap: int = N_CAP) -> int:
    """Smallest calibration size whose band half-width is at most ``epsilon``.

    Doubles ``n`` until ``epsilon_for(n) <= epsilon``, then binary-searches the
    last doubling interval.  ``epsilon_for`` is not exactly monotone in ``n``
    (it jumps up slightly whenever ``floor((n + 1) * alpha)`` steps), so the
    result is minimal in the sense that ``n - 1`` fails.
    """
    check_fraction(alpha, "alpha")
    check_fraction(epsilon, "epsilon")
    check_fraction(delta, "delta")
    hi = 1
    while not _meets(hi, alpha, epsilon, delta):
        hi *= 2
        if hi > cap:
            raise CapExceeded(f"no n <= {cap} reaches epsilon={epsilon}")
    lo = hi // 2  # fails, or is 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _meets(mid, alpha, epsilon, delta):
            hi = mid
        else:
            lo = mid
    return hi


def alpha_for(n: int, epsilon: float, delta: float, *, tol: float = 1e-6) -> float:
    """Largest ``alpha`` in ``[1/(n+1), 1/2]`` whose band meets ``(epsilon, delta)``.

    Smaller ``alpha`` (a stricter accuracy target) only narrows the Beta law,
    so every ``alpha`` between ``1/(n+1)`` and the returned value also meets
    the requirement.
    """
    check_fraction(epsilon, "epsilon")
    check_fraction(delta, "delta")
    lo = 1.0 / (n + 1)
    if not _meets(n, lo, epsilon, delta):
        raise DomainError(f"no alpha meets epsilon={epsilon}, delta={delta} with n={n}")
    hi = 0.5
    if _meets(n, hi, epsilon, delta):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _meets(n, mid, epsilon, delta):
            lo = mid
        else:
            hi = mid
    return lo


# -- calibration ----------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdCertificate:
    """A calibrated threshold with the parameters of its guarantee."""

    theta_hat: float
    n: int
    alpha: float
    delta: float
    epsilon: float
    rule: str = "climbing"
    degenerate: bool = False
    temperature: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdCertificate":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


def conformal_threshold(thetas, alpha: float) -> float:
    """Order statistic ``ceil((n + 1)(1 - alpha))`` of ``thetas``, or 1 past the end."""
    thetas = np.sort(np.asarray(thetas, dtype=float), kind="stable")
    n = len(thetas)
    if n == 0:
        raise EmptyCalibrationSet("no calibration thresholds")
    k = _order_index(n, alpha)
    return float(thetas[k - 1]) if k <= n else 1.0


def _resolve_temperature(table: ScoreTable, temperature):
    if temperature == "auto":
        return fit_temperature(table) if table.kind == "logits" else None
    if temperature == "fit":
        return fit_temperature(ScoreTable(
            table.sample_ids, table.labels, table.label_columns, table.logits(), "logits"))
    return temperature


def calibrate_threshold(
    h: Hierarchy, table: ScoreTable, rule: str = "climbing", alpha: float = 0.1,
    delta: float = 0.1, eps_tight: float = DEFAULT_EPS_TIGHT, *, temperature="auto",
    convex: bool = False,
) -> ThresholdCertificate:
    """Calibrate a threshold on ``table`` for target accuracy ``1 - alpha``.

    ``temperature`` is ``"auto"`` (fit on logits tables, off for
    probabilities), ``"fit"``, ``None`` or a fixed value.
    """
    check_rule(rule)
    if rule != "climbing":
        raise UnsupportedRule(f"threshold calibration is implemented for climbing only, not {rule!r}")
    alpha = check_fraction(alpha, "alpha")
    delta = check_fraction(delta, "delta")
    if len(table) == 0:
        raise EmptyCalibrationSet("calibration table is empty")
    t = _resolve_temperature(table, temperature)
    scores = lift_to_nodes(h, table.probabilities(t))
    thetas = min_correct_thresholds(h, scores, table.labels, eps_tight, convex=convex)
    n = len(thetas)
    _, _, degenerate = beta_params(n, alpha, allow_degenerate=True)
    return ThresholdCertificate(
        theta_hat=conformal_threshold(thetas, alpha),
        n=n,
        alpha=alpha,
        delta=delta,
        epsilon=epsilon_for(n, alpha, delta, allow_degenerate=True),
        rule=rule,
        degenerate=degenerate,
        temperature=t,
    )


def evaluate_certificate(cert: ThresholdCertificate, h: Hierarchy, test: ScoreTable) -> dict:
    """Hierarchical accuracy and coverage of the certificate's rule on ``test``."""
    if len(test) == 0:
        raise EmptyInput("test table is empty")
    scores = lift_to_nodes(h, test.probabilities(cert.temperature))
    nodes = predict_nodes(h, scores, cert.theta_hat, cert.rule)
    accuracy = 1.0 - hier_risk_01(h, nodes, test.labels)
    return {
        "accuracy": accuracy,
        "coverage": mean_coverage(h, nodes),
        "accuracy_error": abs(accuracy - (1.0 - cert.alpha)),
    }
