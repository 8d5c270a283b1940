"""Least-squares rate fits ``log y = a log t + b log Phi(1/t) + c``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_POINTS = 5


@dataclass(frozen=True)
class RateFit:
    a: float
    b: float
    intercept: float
    residual: float
    with_log: bool = False
    n_points: int = 0

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(self.intercept + self.a * np.log(t) + self.b * np.log(np.log(np.e + 1 / t)))


def is_geometric(t: np.ndarray, rtol: float = 1e-9) -> bool:
    t = np.asarray(t, dtype=float)
    if len(t) < 2 or np.any(t <= 0):
        return False
    ratios = t[1:] / t[:-1]
    return bool(np.all(np.abs(ratios / ratios[0] - 1.0) <= rtol) and ratios[0] != 1.0)


def fit_rate(t, y, with_log_regressor: bool = False) -> RateFit:
    """Fit ``y ~ t^a Phi(1/t)^b`` (``b = 0`` unless ``with_log_regressor``).

    Refuses fewer than five points, non-positive data and degenerate designs.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-d arrays of equal length")
    if len(t) < MIN_POINTS:
        raise ValueError(f"rate fit needs at least {MIN_POINTS} points, got {len(t)}")
    if np.any(t <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("rate fit needs positive t and finite positive y")
    d = np.diff(t)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("t must be strictly monotone")
    cols = [np.log(t)]
    if with_log_regressor:
        cols.append(np.log(np.log(math.e + 1.0 / t)))
    cols.append(np.ones_like(t))
    X = np.column_stack(cols)
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise ValueError("degenerate design matrix")
    ly = np.log(y)
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    res = ly - X @ coef
    rms = float(np.sqrt(np.mean(res**2)))
    a = float(coef[0])
    b = float(coef[1]) if with_log_regressor else 0.0
    return RateFit(a, b, float(coef[-1]), rms, with_log_regressor, len(t))
