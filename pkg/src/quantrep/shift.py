"""Estimating an unknown deterministic feature transform between two data
epochs by matching their quantile representations.

The quantile models fitted on the two epochs describe the same labeled
distribution in different coordinates, so the logit fields should agree
once the newer features are mapped back through the inverse transform.
The estimator minimizes the mean absolute logit discrepancy over a
transform family; the search is derivative-free because the interpolated
coefficient field makes analytic gradients brittle.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError
from .linear import FitConfig
from .quantile import (
    QuantileGrid,
    QuantileModel,
    fit_base_classifiers,
    fit_quantile_model,
    represent,
)

_ORTHO_TOL = 1e-12
_MAX_CONDITION = 1e8


@dataclass
class Transform:
    """A member of a parametric transform family.

    orthogonal-2d: rotation by ``angle`` radians, optionally composed with
    a reflection (y-axis sign flip applied first). affine: x -> A x + b.
    """

    family: str
    angle: float = 0.0
    reflect: bool = False
    matrix: np.ndarray | None = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        if self.family == "orthogonal-2d":
            self.angle = float(self.angle)
        elif self.family == "affine":
            self.matrix = np.asarray(self.matrix, dtype=np.float64)
            d = self.matrix.shape[0]
            if self.matrix.shape != (d, d):
                raise ValidationError("affine matrix must be square")
            if self.offset is None:
                self.offset = np.zeros(d)
            self.offset = np.asarray(self.offset, dtype=np.float64)
            if np.linalg.cond(self.matrix) >= _MAX_CONDITION:
                raise ValidationError("affine matrix is not invertible enough")
        else:
            raise ConfigError(f"unknown transform family: {self.family!r}")

    def _rotation(self):
        c, s = math.cos(self.angle), math.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        if self.reflect:
            rot = rot @ np.diag([1.0, -1.0])
        return rot

    def forward_matrix(self):
        if self.family == "orthogonal-2d":
            return self._rotation()
        return self.matrix

    def apply(self, features):
        features = np.asarray(features, dtype=np.float64)
        m = self.forward_matrix()
        if features.shape[1] != m.shape[0]:
            raise ValidationError("feature dimension does not match transform")
        out = features @ m.T
        if self.family == "affine":
            out = out + self.offset
        return out

    def apply_inverse(self, features):
        features = np.asarray(features, dtype=np.float64)
        m = self.forward_matrix()
        if features.shape[1] != m.shape[0]:
            raise ValidationError("feature dimension does not match transform")
        if self.family == "orthogonal-2d":
            return features @ m  # inverse of an orthogonal matrix is its transpose
        return (features - self.offset) @ np.linalg.inv(self.matrix).T

    def to_json_dict(self):
        if self.family == "orthogonal-2d":
            return {"family": self.family,
                    "params": {"angle_deg": math.degrees(self.angle),
                               "reflect": bool(self.reflect)}}
        return {"family": self.family,
                "params": {"matrix": self.matrix.tolist(),
                           "offset": self.offset.tolist()}}


def apply_transform(transform: Transform, features):
    return transform.apply(features)


def _task_logit_stack(model, features):
    return np.stack([task.logits(features) for task in model.tasks])


def _field_gap_tasks(model_t0, logits1, inv_transform, samples_t1):
    """Mean |logit gap| over stored tasks only.

    For single-task binary models the mirrored class-0 slice is the
    negated tau-reflection on both sides, so it contributes the same mean
    absolute gap and can be skipped.
    """
    mapped = inv_transform.apply_inverse(samples_t1)
    logits0 = _task_logit_stack(model_t0, mapped)
    if logits0.shape != logits1.shape:
        raise ValidationError("the two models must share grid and class count")
    return float(np.mean(np.abs(logits0 - logits1)))


def matching_objective(model_t0: QuantileModel, model_t1: QuantileModel,
                       inv_transform: Transform, samples_t1, grid=None):
    """Mean over samples, classes, and dense taus of the absolute logit gap
    between the old model at the mapped-back point and the new model at the
    point itself. Zero when both pictures agree exactly."""
    samples_t1 = np.asarray(samples_t1, dtype=np.float64)
    if model_t0.single_task_binary == model_t1.single_task_binary:
        logits1 = _task_logit_stack(model_t1, samples_t1)
        return _field_gap_tasks(model_t0, logits1, inv_transform, samples_t1)
    rep1 = represent(model_t1, samples_t1).values
    mapped = inv_transform.apply_inverse(samples_t1)
    rep0 = represent(model_t0, mapped).values
    if rep0.shape != rep1.shape:
        raise ValidationError("the two models must share grid and class count")
    return float(np.mean(np.abs(rep0 - rep1)))


@dataclass
class SearchConfig:
    angle_step_deg: float = 1.0
    refine_tol: float = 1e-4      # radians, golden-section stop width
    tie_tol: float = 1e-6         # near-optimum reporting threshold
    n_starts: int = 5             # affine multi-start
    n_sweeps: int = 12            # affine coordinate-descent sweeps
    seed: int = 0


@dataclass
class TransformEstimate:
    transform: Transform
    objective: float
    near_ties: list = field(default_factory=list)

    @property
    def identifiable(self):
        return len(self.near_ties) == 0


def _golden_section(fn, lo, hi, tol):
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def _estimate_orthogonal(model_t0, logits1, samples, config):
    step = math.radians(config.angle_step_deg)
    n_steps = int(round(2.0 * math.pi / step))
    grid_vals = []  # (objective, angle, reflect)

    def objective_at(angle, reflect):
        t = Transform("orthogonal-2d", angle=angle, reflect=reflect)
        return _field_gap_tasks(model_t0, logits1, t, samples)

    for reflect in (False, True):
        for i in range(n_steps):
            angle = i * step
            grid_vals.append((objective_at(angle, reflect), angle, reflect))

    best_obj, best_angle, best_reflect = min(grid_vals, key=lambda v: v[0])
    refined = _golden_section(lambda a: objective_at(a, best_reflect),
                              best_angle - step, best_angle + step,
                              config.refine_tol)
    refined_obj = objective_at(refined, best_reflect)
    if refined_obj <= best_obj:
        best_obj, best_angle = refined_obj, refined

    best = Transform("orthogonal-2d", angle=best_angle % (2.0 * math.pi),
                     reflect=best_reflect)
    ties = [
        Transform("orthogonal-2d", angle=angle, reflect=reflect)
        for obj, angle, reflect in grid_vals
        if obj <= best_obj + config.tie_tol
        and not (reflect == best_reflect
                 and _angle_distance(angle, best_angle) <= 2.0 * step)
    ]
    return TransformEstimate(best, best_obj, ties)


def _angle_distance(a, b):
    diff = (a - b) % (2.0 * math.pi)
    return min(diff, 2.0 * math.pi - diff)


def _estimate_affine(model_t0, logits1, samples, config):
    d = samples.shape[1]
    if d > 10:
        raise ConfigError("affine search supported for d <= 10")
    rng = np.random.default_rng(config.seed)

    def objective_vec(theta):
        mat = theta[:d * d].reshape(d, d)
        if np.linalg.cond(mat) >= _MAX_CONDITION:
            return np.inf
        t = Transform("affine", matrix=mat, offset=theta[d * d:])
        return _field_gap_tasks(model_t0, logits1, t, samples)

    best_theta, best_obj = None, np.inf
    for start in range(config.n_starts):
        theta = np.concatenate([np.eye(d).ravel(), np.zeros(d)])
        if start > 0:
            theta = theta + rng.normal(0.0, 0.3, theta.size)
        f = objective_vec(theta)
        span = 1.0
        for _ in range(config.n_sweeps):
            for j in range(theta.size):
                def fn(v, j=j):
                    cand = theta.copy()
                    cand[j] = v
                    return objective_vec(cand)
                v = _golden_section(fn, theta[j] - span, theta[j] + span, 1e-5)
                fv = fn(v)
                if fv < f:
                    theta[j], f = v, fv
            span *= 0.7
        if f < best_obj:
            best_theta, best_obj = theta.copy(), f
    best = Transform("affine", matrix=best_theta[:d * d].reshape(d, d),
                     offset=best_theta[d * d:])
    return TransformEstimate(best, best_obj, [])


def estimate_transform(family, model_t0: QuantileModel, data_t1,
                       fit_config: FitConfig | None = None,
                       search_config: SearchConfig | None = None,
                       grid: QuantileGrid | None = None):
    """Fit a quantile model on the newer labeled epoch, then minimize the
    matching objective over the chosen family.

    Returns a :class:`TransformEstimate` whose ``near_ties`` lists grid
    members indistinguishable from the optimum; a nonempty list signals a
    non-identifiable (symmetric) construction rather than a unique answer.
    """
    fit_config = fit_config or FitConfig()
    search_config = search_config or SearchConfig()
    grid = grid or model_t0.grid

    bases1 = fit_base_classifiers(data_t1, fit_config)
    model_t1 = fit_quantile_model(data_t1, bases1, grid=grid, fit_config=fit_config)

    samples = data_t1.features
    logits1 = _task_logit_stack(model_t1, samples)
    if family == "orthogonal-2d":
        if samples.shape[1] != 2:
            raise ConfigError("orthogonal-2d requires 2-d features")
        est = _estimate_orthogonal(model_t0, logits1, samples, search_config)
    elif family == "affine":
        est = _estimate_affine(model_t0, logits1, samples, search_config)
    else:
        raise ConfigError(f"unknown transform family: {family!r}")
    return est
