"""The fractional heat semigroup ``S(t) = exp(-t (-Delta)^(theta/2))`` on the torus.

``S(t)`` multiplies Fourier coefficients by ``exp(-t |xi|^theta)`` with the
exact torus frequencies ``xi = pi k / L``.  On the approximating torus this is
the semigroup exactly; the link to the whole-space problem is monitored by the
kernel mass that the whole-space kernel places beyond ``L/2``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .gridfn import GridFunction, GridSpec
from .harness.fitting import RateFit, fit_rate, is_geometric
from .zygmund import NormSpec, norm

#: default leakage thresholds; algebraic tails (theta < 2) cannot reach 1e-8
GAUSSIAN_MAX_LEAKAGE = 1e-8
ALGEBRAIC_MAX_LEAKAGE = 0.5
POSITIVITY_RTOL = 1e-12


class InadmissibleTime(ValueError):
    def __init__(self, t: float, leakage: float, limit: float):
        super().__init__(
            f"t={t:g} places {leakage:.3g} of the kernel mass beyond L/2 (limit {limit:.3g})"
        )
        self.t, self.leakage, self.limit = t, leakage, limit


@dataclass(frozen=True)
class SemigroupParams:
    theta: float
    t: float

    def __post_init__(self) -> None:
        if not (0 < self.theta <= 2):
            raise ValueError(f"theta must lie in (0, 2], got {self.theta}")
        if not (self.t > 0 and math.isfinite(self.t)):
            raise ValueError(f"t must be positive, got {self.t}")


def default_max_leakage(theta: float) -> float:
    return GAUSSIAN_MAX_LEAKAGE if theta == 2 else ALGEBRAIC_MAX_LEAKAGE


def leakage(spec: GridSpec, theta: float, t: float) -> float:
    """Fraction of whole-space kernel mass outside the ball of radius ``L/2``.

    Gaussian tail for ``theta = 2``; otherwise the tail of the normalised
    comparison profile ``h_t(x) = t^(-N/theta) (1 + t^(-1/theta)|x|)^(-N-theta)``,
    which is a regularised incomplete beta function.
    """
    N, R = spec.dim, 0.5 * spec.half_width
    if theta == 2:
        return float(special.gammaincc(N / 2.0, R * R / (4.0 * t)))
    u = R / t ** (1.0 / theta)
    return float(special.betaincc(N, theta, u / (1.0 + u)))


def check_admissible(spec: GridSpec, params: SemigroupParams,
                     max_leakage: float | None = None) -> float:
    limit = default_max_leakage(params.theta) if max_leakage is None else max_leakage
    lk = leakage(spec, params.theta, params.t)
    if lk > limit:
        raise InadmissibleTime(params.t, lk, limit)
    return lk


def max_admissible_time(spec: GridSpec, theta: float, max_leakage: float | None = None) -> float:
    """Largest ``t`` passing the leakage contract (leakage grows with ``t``)."""
    limit = default_max_leakage(theta) if max_leakage is None else max_leakage
    lo, hi = 1e-12, 1.0
    while leakage(spec, theta, hi) <= limit:
        lo, hi = hi, hi * 2
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if leakage(spec, theta, mid) <= limit:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-12:
            break
    return lo


@lru_cache(maxsize=16)
def frequency_magnitude(spec: GridSpec) -> np.ndarray:
    """``|xi|`` on the ``rfftn`` layout."""
    m, L = spec.points_per_axis, spec.half_width
    k = np.fft.fftfreq(m, d=1.0 / m) * (math.pi / L)
    kr = np.fft.rfftfreq(m, d=1.0 / m) * (math.pi / L)
    axes = [k] * (spec.dim - 1) + [kr]
    grids = np.meshgrid(*axes, indexing="ij")
    out = np.sqrt(sum(g * g for g in grids))
    out.setflags(write=False)
    return out


_symbol_lock = threading.Lock()


@lru_cache(maxsize=64)
def _symbol_cached(spec: GridSpec, theta: float, t: float) -> np.ndarray:
    out = np.exp(-t * frequency_magnitude(spec) ** theta)
    out.setflags(write=False)
    return out


def symbol(spec: GridSpec, theta: float, t: float) -> np.ndarray:
    """``exp(-t |xi|^theta)``; exactly 1 at ``xi = 0``."""
    with _symbol_lock:
        return _symbol_cached(spec, float(theta), float(t))


def _fft(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    return np.fft.rfftn(values, axes=tuple(range(spec.dim)))


def _ifft(coeffs: np.ndarray, spec: GridSpec) -> np.ndarray:
    return np.fft.irfftn(coeffs, s=spec.shape, axes=tuple(range(spec.dim)))


def apply(f: GridFunction, params: SemigroupParams, max_leakage: float | None = None,
          check: bool = True) -> GridFunction:
    """``S(t) f``; rejects times whose kernel leaks past the admissible radius."""
    if check:
        check_admissible(f.spec, params, max_leakage)
    out = _ifft(_fft(f.values, f.spec) * symbol(f.spec, params.theta, params.t), f.spec)
    return GridFunction(f.spec, out, label=f.label)


@dataclass(frozen=True, eq=False)
class KernelSnapshot:
    """Discrete kernel ``G(x, t)`` on the displacement lattice ``x = (m - M/2) h``."""

    grid: GridSpec
    theta: float
    t: float
    values: np.ndarray

    def displacement(self) -> np.ndarray:
        m, h = self.grid.points_per_axis, self.grid.h
        return (np.arange(m) - m // 2) * h

    def radius(self) -> np.ndarray:
        x = self.displacement()
        grids = np.meshgrid(*([x] * self.grid.dim), indexing="ij")
        return np.sqrt(sum(g * g for g in grids))

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_measure)

    def origin_line(self) -> np.ndarray:
        """Values along the first axis through the origin."""
        c = self.grid.points_per_axis // 2
        idx = (slice(None),) + (c,) * (self.grid.dim - 1)
        return self.values[idx]


def kernel(params: SemigroupParams, grid: GridSpec, max_leakage: float | None = None,
           check: bool = True) -> KernelSnapshot:
    if check:
        check_admissible(grid, params, max_leakage)
    vals = _ifft(symbol(grid, params.theta, params.t), grid) / grid.cell_measure
    vals = np.fft.fftshift(vals)
    vals.setflags(write=False)
    return KernelSnapshot(grid, params.theta, params.t, vals)


def comparison_profile(x: np.ndarray, t: float, theta: float, dim: int) -> np.ndarray:
    """``h_t(x) = t^(-N/theta) (1 + t^(-1/theta)|x|)^(-N-theta)``."""
    return t ** (-dim / theta) * (1.0 + t ** (-1.0 / theta) * np.abs(x)) ** (-dim - theta)


@dataclass(frozen=True)
class KernelBoundReport:
    c_lower: float
    c_upper: float
    theta: float
    t: float
    points_per_axis: int


def kernel_bound_fit(params: SemigroupParams, grid: GridSpec,
                     max_leakage: float | None = None) -> KernelBoundReport:
    """Extremes of ``G / h_t`` over lattice points within ``L/2`` of the origin.

    Beyond ``L/2`` the torus kernel is dominated by its periodic images and no
    longer represents the whole-space one.
    """
    snap = kernel(params, grid, max_leakage)
    r = snap.radius()
    inside = r <= 0.5 * grid.half_width
    ratio = snap.values[inside] / comparison_profile(r[inside], params.t, params.theta, grid.dim)
    return KernelBoundReport(float(ratio.min()), float(ratio.max()), params.theta, params.t,
                             grid.points_per_axis)


_tmin_cache: dict[tuple[GridSpec, float], float] = {}
_tmin_lock = threading.Lock()


def _kernel_positive(grid: GridSpec, theta: float, t: float) -> bool:
    v = _ifft(symbol(grid, theta, t), grid)
    return bool(v.min() >= -POSITIVITY_RTOL * v.max())


def t_min(grid: GridSpec, theta: float) -> float:
    """Smallest time (to 1%) above which the discrete kernel is non-negative.

    Calibrated once per ``(grid, theta)`` by bisection in ``log t`` and cached;
    ``inf`` if even the largest admissible time gives a signed kernel.
    """
    key = (grid, float(theta))
    with _tmin_lock:
        if key in _tmin_cache:
            return _tmin_cache[key]
    hi = max_admissible_time(grid, theta, max_leakage=1.0 - 1e-12)
    hi = min(hi, 1e6)
    if not _kernel_positive(grid, theta, hi):
        result = math.inf
    else:
        lo = 1e-6 * grid.h**theta
        if _kernel_positive(grid, theta, lo):
            result = lo
        else:
            while hi / lo > 1.01:
                mid = math.sqrt(lo * hi)
                if _kernel_positive(grid, theta, mid):
                    hi = mid
                else:
                    lo = mid
            result = hi
    with _tmin_lock:
        _tmin_cache[key] = result
    return result


# --------------------------------------------------------------------------
# decay-rate probes


def predicted_exponents(dim: int, theta: float, r: float, q: float, alpha: float,
                        beta: float) -> tuple[float, float]:
    """``(-(N/theta)(1/r - 1/q), -alpha/r + beta/q)``."""
    iq = 0.0 if math.isinf(q) else 1.0 / q
    return -(dim / theta) * (1.0 / r - iq), -alpha / r + beta * iq


@dataclass(frozen=True)
class RateProbeReport:
    fit: RateFit
    predicted_a: float
    predicted_b: float
    times: np.ndarray
    values: np.ndarray
    #: residual above the probe's limit: the power law does not describe the data
    flagged: bool = False


def smoothing_rate_probe(f: GridFunction, theta: float, r: float, q: float, alpha: float,
                         beta: float, flavor: str, t_grid, rho: float = math.inf,
                         stride: int = 4, max_leakage: float | None = None,
                         residual_limit: float = 0.05) -> RateProbeReport:
    """Fit the decay of ``t -> ||S(t) f||`` in the ``(q, beta, flavor)`` norm.

    ``(r, alpha)`` describe the class of the source and only enter the
    predicted exponents.  A log regressor is used only when the predicted log
    exponent is non-zero.
    """
    t = np.asarray(t_grid, dtype=float)
    if not is_geometric(t):
        raise ValueError("t_grid must be a geometric sequence")
    if r < 1 or q < r:
        raise ValueError("need 1 <= r <= q")
    if r == q and alpha > beta:
        raise ValueError("same-exponent probes need alpha <= beta")
    spec = NormSpec(q, beta, flavor, rho)
    ys = np.array([norm(apply(f, SemigroupParams(theta, float(ti)), max_leakage), spec, stride)
                   for ti in t])
    a_pred, b_pred = predicted_exponents(f.spec.dim, theta, r, q, alpha, beta)
    fit = fit_rate(t, ys, with_log_regressor=abs(b_pred) > 0)
    return RateProbeReport(fit, a_pred, b_pred, t, ys, fit.residual > residual_limit)
