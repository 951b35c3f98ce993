"""Hierarchical selective classification on top of any flat classifier's scores."""

from .exceptions import HierselError
from .hierarchy import Hierarchy, flat_hierarchy, from_edges, load_hierarchy, parse_hierarchy
from .scores import ScoreTable, fit_temperature, lift_to_nodes, load_scores, softmax
from .rules import (
    RULES,
    Prediction,
    infer,
    infer_climbing,
    infer_jumping,
    infer_max_coverage,
    infer_selective,
    min_correct_threshold,
    min_correct_thresholds,
    predict_nodes,
)
from .metrics import (
    Curve,
    EvalReport,
    cc_curve,
    ece,
    evaluate,
    haurc,
    hier_risk_01,
    hierarchical_gain,
    mean_coverage,
    rc_curve,
    severity_loss,
)
from .guarantee import (
    ThresholdCertificate,
    alpha_for,
    beta_cdf,
    calibrate_threshold,
    delta_for,
    epsilon_for,
    evaluate_certificate,
    n_for,
)
from .estimators import HierarchicalSelectiveClassifier, TemperatureScaler

__version__ = "0.1.0"
