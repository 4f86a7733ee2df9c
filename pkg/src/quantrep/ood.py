"""Out-of-distribution scoring and the associated threshold-free metrics.

Scores follow one convention throughout: higher means more in-distribution.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .datasets import Dataset
from .errors import UndefinedMetricError, ValidationError
from .linear import FitConfig, fit_weighted_logistic
from .quantile import QuantileModel, fit_quantile_model

DEFAULT_LOF_K = 20

# Guards the reachability-density inversion when a neighborhood collapses
# onto duplicate points.
_LRD_EPS = 1e-12


@dataclass
class OodScores:
    scores: np.ndarray
    is_id: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.is_id = np.asarray(self.is_id, dtype=bool)
        if self.scores.shape != self.is_id.shape:
            raise ValidationError("scores and is_id must have equal length")
        if not np.all(np.isfinite(self.scores)):
            raise ValidationError("scores must be finite")


def lof_scores(reference, queries, k=DEFAULT_LOF_K):
    """Negated local outlier factor of each query w.r.t. the reference set.

    Classical construction: k-distance within the reference set,
    reachability distance max(k-distance(neighbor), actual distance),
    local reachability density as inverse mean reachability, and the LOF
    as the ratio of neighbor densities to the query's own. Neighborhoods
    are the exact k nearest points (self excluded inside the reference).
    Returned negated so that higher = more in-distribution.
    """
    reference = np.asarray(reference, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if reference.ndim == 1:
        reference = reference[:, None]
    if queries.ndim == 1:
        queries = queries[:, None]
    m = reference.shape[0]
    if k >= m:
        raise ValidationError(f"k={k} must be smaller than the reference size {m}")
    if k < 1:
        raise ValidationError("k must be at least 1")
    if queries.shape[1] != reference.shape[1]:
        raise ValidationError("reference and queries must share dimensionality")

    d_rr = cdist(reference, reference)
    np.fill_diagonal(d_rr, np.inf)
    nn_r = np.argsort(d_rr, axis=1, kind="stable")[:, :k]
    rows = np.arange(m)[:, None]
    kdist = d_rr[rows, nn_r[:, -1:]]  # (m, 1)

    reach_r = np.maximum(d_rr[rows, nn_r], kdist[nn_r[:, :], 0].reshape(m, k))
    lrd_r = 1.0 / np.maximum(reach_r.mean(axis=1), _LRD_EPS)

    d_qr = cdist(queries, reference)
    nn_q = np.argsort(d_qr, axis=1, kind="stable")[:, :k]
    qrows = np.arange(queries.shape[0])[:, None]
    reach_q = np.maximum(d_qr[qrows, nn_q], kdist[nn_q, 0])
    lrd_q = 1.0 / np.maximum(reach_q.mean(axis=1), _LRD_EPS)

    lof = lrd_r[nn_q].mean(axis=1) / lrd_q
    return -lof


def auroc(scores, is_id):
    """Rank-based area under the ROC curve; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    is_id = np.asarray(is_id, dtype=bool)
    n_pos = int(is_id.sum())
    n_neg = is_id.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both ID and OOD samples")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    # midranks: average rank within each tie group
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[is_id].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def tnr_at_tpr(scores, is_id, tpr_target=0.95):
    """True-negative rate at the largest threshold keeping TPR >= target.

    A sample is accepted as ID when its score >= threshold, so the chosen
    threshold attains the smallest TPR at or above the target.
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_id = np.asarray(is_id, dtype=bool)
    if not (0 < tpr_target <= 1):
        raise ValidationError("tpr_target must lie in (0,1]")
    id_scores = scores[is_id]
    ood_scores = scores[~is_id]
    if id_scores.size == 0 or ood_scores.size == 0:
        raise UndefinedMetricError("TNR@TPR needs both ID and OOD samples")
    candidates = np.unique(scores)[::-1]
    for thr in candidates:
        tpr = np.mean(id_scores >= thr)
        if tpr >= tpr_target:
            return float(np.mean(ood_scores < thr))
    return float(np.mean(ood_scores < candidates[-1]))


def detection_accuracy(scores, is_id):
    """Maximum classification accuracy over every threshold position."""
    scores = np.asarray(scores, dtype=np.float64)
    is_id = np.asarray(is_id, dtype=bool)
    n_pos = int(is_id.sum())
    n_neg = is_id.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("detection accuracy needs both ID and OOD samples")
    order = np.argsort(scores, kind="stable")
    sorted_id = is_id[order]
    sorted_scores = scores[order]
    n = scores.size
    # correct(c) with threshold below position c: OOD among first c + ID among rest
    ood_below = np.concatenate([[0], np.cumsum(~sorted_id)])
    id_above = n_pos - np.concatenate([[0], np.cumsum(sorted_id)])
    correct = ood_below + id_above
    # only cut positions at distinct-score boundaries are realizable
    boundary = np.concatenate([[True], sorted_scores[1:] != sorted_scores[:-1], [True]])
    return float(correct[boundary].max() / n)


def ood_metrics(scores, is_id, tpr_target=0.95):
    return {
        "auroc": auroc(scores, is_id),
        "tnr_at_tpr95": tnr_at_tpr(scores, is_id, tpr_target),
        "detection_accuracy": detection_accuracy(scores, is_id),
    }


def random_label_quantile_model(features, n_pseudo_classes=2,
                                fit_config: FitConfig | None = None,
                                seed=0) -> QuantileModel:
    """Quantile model built from uniform random pseudo-labels.

    With labels carrying no signal, the anchor classifiers trace the
    geometry of the feature distribution itself, which makes the resulting
    representations usable for marking arbitrary data regions as
    in-distribution.
    """
    features = np.asarray(features, dtype=np.float64)
    if n_pseudo_classes < 2:
        raise ValidationError("need at least two pseudo-classes")
    if features.shape[0] < 2 * n_pseudo_classes:
        raise ValidationError("need at least two samples per pseudo-class")
    fit_config = fit_config or FitConfig()
    rng = np.random.default_rng(seed)
    pseudo = rng.integers(0, n_pseudo_classes, features.shape[0])
    dataset = Dataset(features, pseudo, n_pseudo_classes)
    bases = [
        fit_weighted_logistic(features, (pseudo == c).astype(np.int64),
                              config=fit_config)
        for c in range(n_pseudo_classes)
    ]
    return fit_quantile_model(dataset, bases, fit_config=fit_config)
