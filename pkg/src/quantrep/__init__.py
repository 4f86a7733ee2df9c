"""Quantile representations for arbitrary classifiers.

Given any pretrained base classifier, thresholding its probabilities
yields pseudo-labels whose fitted classifiers realize the full spectrum of
simultaneous binary quantile regression solutions. The resulting per-sample
logit curves serve as representations for out-of-distribution detection,
calibration-error estimation, and distribution-shift matching.
"""

from .calibration import (
    IsotonicMap,
    MetricsReport,
    ReliabilityTable,
    class_probabilities,
    corrupt_features,
    corruption_sweep,
    ece,
    isotonic_apply,
    isotonic_fit,
    model_class_probabilities,
    msp_confidence,
    platt_apply,
    platt_fit,
    quantile_probability,
)
from .datasets import (
    Dataset,
    LatentModelSpec,
    LatentOracle,
    gen_gaussian_pair,
    gen_latent_binary,
    gen_two_moons,
    load_dataset,
    one_hot,
    save_dataset,
)
from .errors import (
    ConfigError,
    DegenerateClassifierError,
    FitError,
    ParseError,
    QuantrepError,
    UndefinedMetricError,
    ValidationError,
)
from .linear import (
    FitConfig,
    LinearClassifier,
    decision,
    fit_sigmoid_mae,
    fit_weighted_logistic,
    normalize_l2,
)
from .ood import (
    OodScores,
    auroc,
    detection_accuracy,
    lof_scores,
    ood_metrics,
    random_label_quantile_model,
    tnr_at_tpr,
)
from .quantile import (
    MonotonicityReport,
    QuantileGrid,
    QuantileModel,
    QuantileRepresentation,
    binary_check_loss,
    check_loss,
    class_balance_weights,
    coefficient_cross_correlation,
    duality_residual,
    fit_base_classifiers,
    fit_quantile_model,
    interpolate_coefficients,
    isotonic_projection,
    load_model,
    modified_labels,
    monotonicity_violation_rate,
    raw_feature_correlation,
    represent,
    save_model,
    simultaneous_loss,
)
from .shift import (
    SearchConfig,
    Transform,
    TransformEstimate,
    apply_transform,
    estimate_transform,
    matching_objective,
)

__version__ = "0.1.0"
