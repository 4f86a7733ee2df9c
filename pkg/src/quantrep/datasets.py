"""Dataset containers, file I/O, and synthetic generators.

CSV schema: header ``f0,...,f{d-1},label[,weight][,posterior]``.
JSONL schema: one object per row with keys ``features`` (array),
``label`` (int), optional ``weight`` and ``posterior``.

All generators are pure functions of (parameters, seed).
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, ParseError, ValidationError

# Features are serialized with 17 significant digits so that a float64
# save/load round trip is bit exact.
_FLOAT_FMT = "%.17g"

# Posteriors live in the open interval (0,1); saturated normal CDF values
# are nudged inside.
_P_LO = 1e-300
_P_HI = 1.0 - 1e-16


@dataclass
class Dataset:
    """Feature matrix with integer class labels.

    ``weights`` are optional per-sample positive reals. ``posterior`` is the
    true P(y=1|x) when the data came from a synthetic latent model.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    weights: np.ndarray | None = None
    posterior: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValidationError("features must be a 2-d matrix")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.features.shape[0],):
            raise ValidationError("labels length must match feature rows")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain non-finite values")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be at least 2")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValidationError(
                f"labels must lie in [0, {self.num_classes})"
            )
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != self.labels.shape:
                raise ValidationError("weights length must match labels")
            if np.any(self.weights <= 0):
                raise ValidationError("weights must be strictly positive")
        if self.posterior is not None:
            self.posterior = np.asarray(self.posterior, dtype=np.float64)
            if self.posterior.shape != self.labels.shape:
                raise ValidationError("posterior length must match labels")
            if np.any(self.posterior <= 0) or np.any(self.posterior >= 1):
                raise ValidationError("posterior must lie in the open interval (0,1)")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def k(self):
        return self.num_classes


@dataclass
class LatentModelSpec:
    """Linear latent-score model z = g(x) + eps(x), y = I[z >= 0].

    ``g_coefficients`` is the d-vector of g's slopes, ``g_intercept`` its
    offset. ``noise_kind`` selects homoskedastic Gaussian noise with scale
    ``noise_scale`` or heteroskedastic Gaussian noise with scale
    a + b*||x|| where ``noise_scale`` = (a, b).
    """

    g_coefficients: np.ndarray
    g_intercept: float = 0.0
    noise_kind: str = "homoskedastic-gaussian"
    noise_scale: float | tuple = 1.0

    def __post_init__(self):
        self.g_coefficients = np.asarray(self.g_coefficients, dtype=np.float64)
        if self.noise_kind not in ("homoskedastic-gaussian", "heteroskedastic-gaussian"):
            raise ConfigError(f"unsupported noise_kind: {self.noise_kind!r}")
        if self.noise_kind == "homoskedastic-gaussian":
            if not np.isscalar(self.noise_scale) or self.noise_scale <= 0:
                raise ValidationError("homoskedastic noise_scale must be a positive scalar")
        else:
            a, b = self.noise_scale
            if a <= 0 or b < 0:
                raise ValidationError("heteroskedastic scale needs a > 0, b >= 0")

    def latent_mean(self, features):
        features = np.asarray(features, dtype=np.float64)
        return features @ self.g_coefficients + self.g_intercept

    def noise_sigma(self, features):
        features = np.asarray(features, dtype=np.float64)
        if self.noise_kind == "homoskedastic-gaussian":
            return np.full(features.shape[0], float(self.noise_scale))
        a, b = self.noise_scale
        return a + b * np.linalg.norm(features, axis=1)

    def posterior(self, features):
        """Analytic P(g(x) + eps(x) >= 0) for Gaussian noise."""
        p = norm.cdf(self.latent_mean(features) / self.noise_sigma(features))
        return np.clip(p, _P_LO, _P_HI)


class LatentOracle:
    """Base classifier that knows the generating latent model exactly."""

    def __init__(self, spec: LatentModelSpec):
        self.spec = spec

    def predict_proba(self, features):
        return self.spec.posterior(features)


def one_hot(labels, k):
    """Encode integer labels as an n x k binary indicator matrix."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValidationError(f"labels must lie in [0, {k})")
    out = np.zeros((labels.shape[0], k), dtype=np.int64)
    out[np.arange(labels.shape[0]), labels] = 1
    return out


def save_dataset(dataset: Dataset, path, format="csv"):
    if format == "csv":
        _save_csv(dataset, path)
    elif format == "jsonl":
        _save_jsonl(dataset, path)
    else:
        raise ConfigError(f"unsupported format: {format!r}")


def load_dataset(path, format="csv", num_classes=None):
    """Load a dataset file; ``num_classes`` caps the allowed label range.

    Without ``num_classes`` the class count is inferred as max(label)+1
    (at least 2).
    """
    if format == "csv":
        features, labels, weights, posterior = _load_csv(path)
    elif format == "jsonl":
        features, labels, weights, posterior = _load_jsonl(path)
    else:
        raise ConfigError(f"unsupported format: {format!r}")
    if num_classes is None:
        num_classes = max(int(labels.max(initial=1)) + 1, 2)
    return Dataset(features, labels, num_classes, weights=weights, posterior=posterior)


def _save_csv(dataset, path):
    cols = [f"f{j}" for j in range(dataset.d)] + ["label"]
    if dataset.weights is not None:
        cols.append("weight")
    if dataset.posterior is not None:
        cols.append("posterior")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(dataset.n):
            row = [_FLOAT_FMT % v for v in dataset.features[i]]
            row.append(str(int(dataset.labels[i])))
            if dataset.weights is not None:
                row.append(_FLOAT_FMT % dataset.weights[i])
            if dataset.posterior is not None:
                row.append(_FLOAT_FMT % dataset.posterior[i])
            fh.write(",".join(row) + "\n")


def _load_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise ParseError("empty file", line=1)
        cols = header.split(",")
        feat_cols = [c for c in cols if c.startswith("f") and c[1:].isdigit()]
        d = len(feat_cols)
        if d == 0 or cols[:d] != [f"f{j}" for j in range(d)] or "label" not in cols:
            raise ParseError(f"bad header {header!r}", line=1)
        label_idx = cols.index("label")
        weight_idx = cols.index("weight") if "weight" in cols else None
        post_idx = cols.index("posterior") if "posterior" in cols else None

        feats, labels, weights, posts = [], [], [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(cols):
                raise ParseError(f"expected {len(cols)} fields, got {len(parts)}", line=lineno)
            try:
                feats.append([float(parts[j]) for j in range(d)])
                labels.append(int(parts[label_idx]))
                if weight_idx is not None:
                    weights.append(float(parts[weight_idx]))
                if post_idx is not None:
                    posts.append(float(parts[post_idx]))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
    features = np.asarray(feats, dtype=np.float64).reshape(len(labels), d)
    return (
        features,
        np.asarray(labels, dtype=np.int64),
        np.asarray(weights) if weights else None,
        np.asarray(posts) if posts else None,
    )


def _save_jsonl(dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(dataset.n):
            obj = {
                "features": [float(_FLOAT_FMT % v) for v in dataset.features[i]],
                "label": int(dataset.labels[i]),
            }
            if dataset.weights is not None:
                obj["weight"] = float(_FLOAT_FMT % dataset.weights[i])
            if dataset.posterior is not None:
                obj["posterior"] = float(_FLOAT_FMT % dataset.posterior[i])
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def _load_jsonl(path):
    feats, labels, weights, posts = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                feats.append([float(v) for v in obj["features"]])
                labels.append(int(obj["label"]))
                if "weight" in obj:
                    weights.append(float(obj["weight"]))
                if "posterior" in obj:
                    posts.append(float(obj["posterior"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(str(exc), line=lineno) from exc
    if weights and len(weights) != len(labels):
        raise ParseError("weight present on some rows only")
    if posts and len(posts) != len(labels):
        raise ParseError("posterior present on some rows only")
    features = np.asarray(feats, dtype=np.float64)
    return (
        features,
        np.asarray(labels, dtype=np.int64),
        np.asarray(weights) if weights else None,
        np.asarray(posts) if posts else None,
    )


def gen_two_moons(n_per_class=200, noise=0.1, ood_n=100, ood_center=(5.0, 5.0), seed=0):
    """Two interleaved half-circles (in-distribution, labels 0/1) plus a
    separate out-of-distribution cluster.

    Returns ``(id_dataset, ood_dataset)``. With noise 0 the ID points lie
    exactly on the two unit arcs.
    """
    if n_per_class < 2:
        raise ValidationError("n_per_class must be at least 2")
    if noise < 0:
        raise ValidationError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    t0 = rng.uniform(0.0, np.pi, n_per_class)
    t1 = rng.uniform(0.0, np.pi, n_per_class)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    feats = np.vstack([upper, lower])
    feats = feats + rng.normal(0.0, 1.0, feats.shape) * noise
    labels = np.concatenate([np.zeros(n_per_class, dtype=np.int64),
                             np.ones(n_per_class, dtype=np.int64)])
    id_ds = Dataset(feats, labels, 2)

    center = np.asarray(ood_center, dtype=np.float64)
    ood_feats = center + rng.normal(0.0, 1.0, (ood_n, 2)) * noise
    ood_ds = Dataset(ood_feats, np.zeros(ood_n, dtype=np.int64), 2)
    return id_ds, ood_ds


def gen_gaussian_pair(centers, stds, n_per_class=500, seed=0):
    """Two axis-aligned Gaussian clusters, one label per center."""
    centers = np.asarray(centers, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    if centers.shape != (2, 2) or stds.shape != (2, 2):
        raise ValidationError("centers and stds must be 2x2")
    if np.any(stds <= 0):
        raise ValidationError("stds must be strictly positive")
    rng = np.random.default_rng(seed)
    feats = np.vstack([
        centers[0] + rng.normal(0.0, 1.0, (n_per_class, 2)) * stds[0],
        centers[1] + rng.normal(0.0, 1.0, (n_per_class, 2)) * stds[1],
    ])
    labels = np.concatenate([np.zeros(n_per_class, dtype=np.int64),
                             np.ones(n_per_class, dtype=np.int64)])
    return Dataset(feats, labels, 2)


_DEFAULT_SAMPLER = {"kind": "uniform", "low": -3.0, "high": 3.0}


def gen_latent_binary(spec: LatentModelSpec, n, feature_sampler=None, seed=0):
    """Draw (x, y) from the latent model z = g(x) + eps(x), y = I[z >= 0].

    The returned dataset carries the analytic posterior P(y=1|x) so the
    generating model can serve as an oracle base classifier. Features
    default to uniform draws on [-3, 3]^d.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    sampler = dict(_DEFAULT_SAMPLER if feature_sampler is None else feature_sampler)
    d = spec.g_coefficients.shape[0]
    rng = np.random.default_rng(seed)
    kind = sampler.get("kind", "uniform")
    if kind == "uniform":
        feats = rng.uniform(sampler.get("low", -3.0), sampler.get("high", 3.0), (n, d))
    elif kind == "gaussian":
        feats = rng.normal(sampler.get("mean", 0.0), sampler.get("std", 1.0), (n, d))
    else:
        raise ConfigError(f"unsupported feature sampler: {kind!r}")
    eps = rng.normal(0.0, 1.0, n) * spec.noise_sigma(feats)
    z = spec.latent_mean(feats) + eps
    labels = (z >= 0).astype(np.int64)
    return Dataset(feats, labels, 2, posterior=spec.posterior(feats))
