"""Localization error metrics: planar and great-circle distances, their
means, empirical CDFs, and the environment-classification accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ShapeError

EARTH_RADIUS_KM = 6371.01


def _paired(pred, true):
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ShapeError(f"pred {pred.shape} vs true {true.shape}")
    if pred.ndim != 2 or pred.shape[1] != 2:
        raise ShapeError(f"expected (N, 2) coordinate arrays, got {pred.shape}")
    if pred.shape[0] == 0:
        raise DataError("no samples to evaluate")
    return pred, true


def euclidean_errors(pred, true) -> np.ndarray:
    """Per-sample planar distance between predicted and true positions."""
    pred, true = _paired(pred, true)
    diff = pred - true
    return np.sqrt((diff * diff).sum(axis=1))


def mde(pred, true) -> float:
    """Mean Euclidean distance error in the coordinates' own units."""
    return float(euclidean_errors(pred, true).mean())


def rmse(pred, true) -> float:
    """Root mean squared error over all coordinate components."""
    pred, true = _paired(pred, true)
    diff = pred - true
    return float(np.sqrt(np.mean(diff * diff)))


def haversine(lat1, lon1, lat2, lon2) -> np.ndarray | float:
    """Great-circle distance in kilometers between degree coordinates.

    d = 2 R asin( sqrt( sin^2(dphi/2) + cos(phi1) cos(phi2) sin^2(dlam/2) ) )

    The asin argument is clamped into [0, 1] so antipodal points cannot
    produce a domain error from rounding.
    """
    phi1, lam1, phi2, lam2 = (
        np.radians(np.asarray(v, dtype=np.float64)) for v in (lat1, lon1, lat2, lon2)
    )
    gamma = np.sin((phi2 - phi1) / 2.0) ** 2
    arg = gamma + np.cos(phi1) * np.cos(phi2) * np.sin((lam2 - lam1) / 2.0) ** 2
    dist = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(arg, 0.0, 1.0)))
    return dist if dist.ndim else float(dist)


def haversine_errors(pred, true) -> np.ndarray:
    """Per-sample great-circle distance in meters for (lon, lat) rows."""
    pred, true = _paired(pred, true)
    km = haversine(pred[:, 1], pred[:, 0], true[:, 1], true[:, 0])
    return np.asarray(km) * 1000.0


def haversine_mde(pred, true) -> float:
    """Mean great-circle distance error in meters for (lon, lat) rows."""
    return float(haversine_errors(pred, true).mean())


def env_accuracy(logits, env_true) -> float:
    """Fraction of samples whose environment bit is classified correctly.

    A positive logit predicts environment 1 (outdoor).
    """
    logits = np.asarray(logits, dtype=np.float64).ravel()
    env_true = np.asarray(env_true).ravel()
    if logits.shape != env_true.shape:
        raise ShapeError(f"logits {logits.shape} vs env {env_true.shape}")
    if logits.size == 0:
        raise DataError("no samples to evaluate")
    if not np.all((env_true == 0) | (env_true == 1)):
        raise DataError("environment labels must be 0 or 1")
    return float(np.mean((logits > 0.0) == (env_true == 1)))


def build_cdf(errors) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF of an error sample.

    Returns (sorted errors, probabilities) where the k-th sorted error
    (1-indexed) carries probability k/N.
    """
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise DataError("cannot build a CDF from zero errors")
    e = np.sort(e)
    probs = np.arange(1, e.size + 1, dtype=np.float64) / e.size
    return e, probs


def _cdf_quantile(sorted_errors: np.ndarray, q: float) -> float:
    # smallest error whose CDF probability reaches q, matching build_cdf
    n = sorted_errors.size
    k = max(1, int(np.ceil(q * n)))
    return float(sorted_errors[k - 1])


@dataclass(frozen=True)
class EvalReport:
    """Summary statistics of one evaluation run."""

    metric: str
    unit: str
    mean_error: float
    median_error: float
    p90_error: float
    n_samples: int
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "unit": self.unit,
            "mean_error": self.mean_error,
            "median_error": self.median_error,
            "p90_error": self.p90_error,
            "n_samples": self.n_samples,
            **self.extras,
        }


def evaluate_positions(pred, true, metric: str = "mde", extras: dict | None = None) -> EvalReport:
    """Score predicted against true positions with the chosen distance.

    ``mde`` treats rows as planar coordinates; ``haversine`` treats them
    as (lon, lat) degrees and reports meters.
    """
    if metric == "mde":
        errors, unit = euclidean_errors(pred, true), "native"
    elif metric == "haversine":
        errors, unit = haversine_errors(pred, true), "m"
    else:
        raise ConfigError(f"metric must be 'mde' or 'haversine', got {metric!r}")
    sorted_e, _ = build_cdf(errors)
    return EvalReport(
        metric=metric,
        unit=unit,
        mean_error=float(errors.mean()),
        median_error=_cdf_quantile(sorted_e, 0.5),
        p90_error=_cdf_quantile(sorted_e, 0.9),
        n_samples=int(errors.size),
        extras=dict(extras or {}),
    )
