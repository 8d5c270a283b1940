"""Duhamel integrals and the Picard iteration for ``u_t + (-Delta)^(theta/2) u = |u|^(p-1) u + mu``.

Time integrals are computed in Fourier space, where ``S(t)`` is diagonal.  The
forcing term uses a graded midpoint rule refined until each slice settles; the
nonlinear term is marched slice to slice with a product midpoint rule (the
semigroup factor is integrated exactly over each sub-panel, the nonlinearity is
frozen at the sub-panel midpoint with ``u`` interpolated linearly in time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np

from . import semigroup as sg
from ._parallel import pmap
from .gridfn import GridFunction, GridSpec, critical_profile, sample_profile, supercritical_profile
from .harness.fitting import RateFit, fit_rate
from .zygmund import NormSpec, norm

Regime = Literal["critical", "supercritical"]
Verdict = Literal["converged", "diverged", "max_iter"]

SOURCE_RTOL = 1e-6
MAX_SOURCE_DOUBLINGS = 14


@dataclass(frozen=True)
class SolveConfig:
    theta: float
    p: float
    T: float
    n_time: int = 24
    grading: float = 1.2
    epsilon: float = 1.0
    max_iter: int = 200
    divergence_cap: float = 1e6
    regime: Regime = "critical"
    #: sub-panels per time step in the nonlinear quadrature
    n_sub: int = 2
    #: centre lattice stride of the uniformly local metric
    stride: int = 8
    tol: float = 1e-8
    nonlinear: bool = True

    def __post_init__(self) -> None:
        if not (0 < self.theta <= 2):
            raise ValueError("theta must lie in (0, 2]")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("T must be positive and finite")
        if self.n_time < 16:
            raise ValueError("n_time must be at least 16")
        if self.grading < 1:
            raise ValueError("grading must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1 or self.n_sub < 1 or self.stride < 1:
            raise ValueError("max_iter, n_sub and stride must be positive")
        if self.regime not in ("critical", "supercritical"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.divergence_cap > 1:
            raise ValueError("divergence_cap must exceed 1")

    @property
    def rho(self) -> float:
        return self.T ** (1.0 / self.theta)

    def p_star(self, dim: int) -> float:
        return dim / (dim - self.theta)

    def r_star(self, dim: int) -> float:
        """``N (p - 1) / (theta p)``."""
        return dim * (self.p - 1.0) / (self.theta * self.p)

    def validate_for(self, spec: GridSpec) -> None:
        N = spec.dim
        if not self.theta < N:
            raise ValueError("need theta < N")
        ps = self.p_star(N)
        if self.regime == "critical" and abs(self.p - ps) > 1e-10:
            raise ValueError(f"critical regime needs p = N/(N-theta) = {ps:g}")
        if self.regime == "supercritical" and not self.p > ps + 1e-10:
            raise ValueError(f"supercritical regime needs p > {ps:g}")
        sg.check_admissible(spec, sg.SemigroupParams(self.theta, self.T))

    def metric_spec(self, dim: int) -> NormSpec:
        """The ``d_X`` (critical) or ``d_Y`` (supercritical) slice norm."""
        if self.regime == "critical":
            gamma = (dim - self.theta) / self.theta
            return NormSpec(self.p, self.p * gamma, "weak_primed", self.rho)
        return NormSpec(self.p * self.r_star(dim), 0.0, "weak_primed", self.rho)

    def forcing_gauge_spec(self, dim: int) -> NormSpec:
        """Smallness gauge of the forcing."""
        if self.regime == "critical":
            return NormSpec(1.0, (dim - self.theta) / self.theta, "frak", self.rho)
        return NormSpec(self.r_star(dim), 0.0, "weak", self.rho)

    def solution_bound_spec(self, dim: int) -> NormSpec:
        """Norm in which the solution is bounded by the forcing gauge."""
        if self.regime == "critical":
            return NormSpec(self.p, dim / self.theta, "weak", self.rho)
        return NormSpec(self.p * self.r_star(dim), 0.0, "weak", self.rho)

    def base_profile(self, dim: int):
        if self.regime == "critical":
            return critical_profile(self.theta, dim)
        return supercritical_profile(self.theta, self.p)


def time_grid(T: float, n: int, grading: float) -> np.ndarray:
    """``t_k = T (g^k - 1) / (g^n - 1)``, ``k = 1..n``; uniform for ``g = 1``."""
    k = np.arange(1, n + 1, dtype=float)
    if grading == 1:
        return T * k / n
    return T * np.expm1(k * math.log(grading)) / math.expm1(n * math.log(grading))


@dataclass(frozen=True, eq=False)
class SpaceTimeFunction:
    """Slices ``u(t_k)`` on one grid; ``u(0) = 0`` is implicit."""

    times: np.ndarray
    slices: tuple[GridFunction, ...]
    #: per-slice quadrature convergence flags
    quadrature_ok: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.slices) or len(t) == 0:
            raise ValueError("one slice per time is required")
        if np.any(np.diff(t) <= 0) or t[0] <= 0:
            raise ValueError("times must be positive and strictly increasing")
        spec = self.slices[0].spec
        if any(s.spec != spec for s in self.slices):
            raise ValueError("all slices must share one grid")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "slices", tuple(self.slices))
        if not self.quadrature_ok:
            object.__setattr__(self, "quadrature_ok", (True,) * len(t))

    @property
    def spec(self) -> GridSpec:
        return self.slices[0].spec

    def stack(self) -> np.ndarray:
        return np.stack([s.values for s in self.slices])

    @classmethod
    def from_stack(cls, times, values: np.ndarray, spec: GridSpec, **kw) -> SpaceTimeFunction:
        return cls(np.asarray(times), tuple(GridFunction(spec, v) for v in values), **kw)

    def at(self, t: float) -> GridFunction:
        """Linear interpolation in time, with ``u(0) = 0``."""
        if not 0 <= t <= self.times[-1] * (1 + 1e-12):
            raise ValueError("t outside (0, T]")
        tt = np.r_[0.0, self.times]
        k = int(np.clip(np.searchsorted(tt, t, side="right") - 1, 0, len(tt) - 2))
        w = (t - tt[k]) / (tt[k + 1] - tt[k])
        lo = np.zeros(self.spec.shape) if k == 0 else self.slices[k - 1].values
        return GridFunction(self.spec, (1 - w) * lo + w * self.slices[k].values)

    def sup_abs(self) -> float:
        return float(max(np.max(np.abs(s.values)) for s in self.slices))

    def __sub__(self, other: SpaceTimeFunction) -> SpaceTimeFunction:
        return SpaceTimeFunction(self.times, tuple(a - b for a, b in zip(self.slices, other.slices)))


def sup_norm(u: SpaceTimeFunction, spec: NormSpec, stride: int = 8,
             threads: int | None = None) -> float:
    """``sup_k ||u(t_k)||`` in the given slice norm."""
    vals = pmap(lambda s: norm(s, spec, stride), list(u.slices), threads)
    return float(max(vals))


def _unique_lambda(spec: GridSpec, theta: float) -> tuple[np.ndarray, np.ndarray]:
    lam = sg.frequency_magnitude(spec) ** theta
    u, inv = np.unique(np.round(lam, 12), return_inverse=True)
    return u, inv.reshape(lam.shape)


def graded_panels(t: float, n: int, grading: float) -> np.ndarray:
    """Breakpoints on ``[0, t]``, graded geometrically toward both ends."""
    half = n // 2
    left = 0.5 * t * time_grid(1.0, half, grading)
    right = t - left[::-1][1:]
    return np.r_[0.0, left, right, t]


def _midpoint_weights(lam: np.ndarray, breaks: np.ndarray) -> np.ndarray:
    mids = 0.5 * (breaks[1:] + breaks[:-1])
    w = np.diff(breaks)
    out = np.zeros(len(lam))
    for chunk in range(0, len(mids), 512):
        m, ww = mids[chunk : chunk + 512], w[chunk : chunk + 512]
        out += ww @ np.exp(-np.outer(m, lam))
    return out


def source_symbol(lam: np.ndarray, t: float) -> np.ndarray:
    """Exact ``int_0^t exp(-s lam) ds``."""
    lam = np.asarray(lam, dtype=float)
    out = np.full(lam.shape, float(t))
    nz = lam > 0
    out[nz] = -np.expm1(-t * lam[nz]) / lam[nz]
    return out


def duhamel_source(mu: GridFunction, cfg: SolveConfig, rtol: float = SOURCE_RTOL,
                   threads: int | None = None) -> SpaceTimeFunction:
    """``int_0^t S(s) mu ds`` at every grid time.

    Graded midpoint rule on ``[0, t]`` starting from ``n_time`` panels and
    splitting every panel until the slice changes by less than ``rtol``
    (relative sup norm).  A slice that fails to settle is flagged.
    """
    if not np.all(np.isfinite(mu.values)):
        raise ValueError("mu must be finite on the grid")
    spec = mu.spec
    times = time_grid(cfg.T, cfg.n_time, cfg.grading)
    lam, inv = _unique_lambda(spec, cfg.theta)
    mu_hat = sg._fft(mu.values, spec)

    def one(t: float):
        breaks = graded_panels(t, cfg.n_time, cfg.grading)
        prev = sg._ifft(mu_hat * _midpoint_weights(lam, breaks)[inv], spec)
        for _ in range(MAX_SOURCE_DOUBLINGS):
            breaks = np.sort(np.r_[breaks, 0.5 * (breaks[1:] + breaks[:-1])])
            cur = sg._ifft(mu_hat * _midpoint_weights(lam, breaks)[inv], spec)
            scale = np.max(np.abs(cur))
            if np.max(np.abs(cur - prev)) <= rtol * scale or scale == 0:
                return cur, True
            prev = cur
        return prev, False

    res = pmap(one, list(times), threads)
    return SpaceTimeFunction(times, tuple(GridFunction(spec, v) for v, _ in res),
                             tuple(ok for _, ok in res))


def duhamel_source_exact(mu: GridFunction, cfg: SolveConfig) -> SpaceTimeFunction:
    """Closed-form Fourier version of :func:`duhamel_source` (reference only)."""
    spec = mu.spec
    times = time_grid(cfg.T, cfg.n_time, cfg.grading)
    lam = sg.frequency_magnitude(spec) ** cfg.theta
    mu_hat = sg._fft(mu.values, spec)
    return SpaceTimeFunction(times, tuple(GridFunction(spec, sg._ifft(mu_hat * source_symbol(lam, t), spec))
                                          for t in times))


def f_p(u: np.ndarray, p: float) -> np.ndarray:
    """``|u|^(p-1) u``."""
    return np.abs(u) ** (p - 1.0) * u


def nonlinear_term(u: SpaceTimeFunction, cfg: SolveConfig) -> np.ndarray:
    """``int_0^t S(t-s) F_p(u(s)) ds`` at every slice time, stacked.

    Marches ``I(t_k) = S(t_k - t_(k-1)) I(t_(k-1)) + int_(t_(k-1))^(t_k) ...``;
    on each of ``n_sub`` sub-panels the semigroup factor is integrated exactly
    and ``F_p(u)`` is taken at the sub-panel midpoint.
    """
    spec = u.spec
    lam = sg.frequency_magnitude(spec) ** cfg.theta
    vals = u.stack()
    tt = np.r_[0.0, u.times]
    acc = np.zeros_like(sg._fft(vals[0], spec))
    out = np.empty_like(vals)
    prev = np.zeros(spec.shape)
    for k in range(1, len(tt)):
        t0, t1 = tt[k - 1], tt[k]
        dt = t1 - t0
        acc = acc * np.exp(-dt * lam)
        cur = vals[k - 1]
        edges = np.linspace(0.0, 1.0, cfg.n_sub + 1)
        for a, b in zip(edges[:-1], edges[1:]):
            w = 0.5 * (a + b)
            g = sg._fft(f_p((1 - w) * prev + w * cur, cfg.p), spec)
            # int_{t0 + a dt}^{t0 + b dt} exp(-(t1 - s) lam) ds
            acc = acc + g * (source_symbol(lam, (1 - a) * dt) - source_symbol(lam, (1 - b) * dt))
        out[k - 1] = sg._ifft(acc, spec)
        prev = cur
    return out


@dataclass(frozen=True)
class IterationReport:
    #: ``d(u_(k+1), u_k)`` for ``k = 0, 1, ...``
    distances: tuple[float, ...]
    #: ``d(u_k, 0)`` for ``k = 1, 2, ...``
    norms: tuple[float, ...]
    verdict: Verdict
    forcing_gauge: float
    source_norm: float
    global_fallback: bool = False
    note: str = ""

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def ratios(self) -> tuple[float, ...]:
        """``d_k / d_(k-1)``, defined from the second iteration on."""
        d = self.distances
        return tuple(d[k] / d[k - 1] if d[k - 1] > 0 else 0.0 for k in range(1, len(d)))

    @property
    def final_ratio(self) -> float:
        r = self.ratios
        return r[-1] if r else 0.0


@dataclass(frozen=True)
class PicardResult:
    solution: SpaceTimeFunction
    report: IterationReport
    source: SpaceTimeFunction


def _metric(u: SpaceTimeFunction, cfg: SolveConfig, threads: int | None) -> float:
    return sup_norm(u, cfg.metric_spec(u.spec.dim), cfg.stride, threads)


def picard_map(u: SpaceTimeFunction, source: SpaceTimeFunction, cfg: SolveConfig) -> SpaceTimeFunction:
    """``F(u) = int_0^t S(t-s) mu ds + int_0^t S(t-s) F_p(u(s)) ds``."""
    vals = source.stack()
    if cfg.nonlinear:
        with np.errstate(over="ignore", invalid="ignore"):
            vals = vals + nonlinear_term(u, cfg)
    if not np.all(np.isfinite(vals)):
        return SpaceTimeFunction(source.times, tuple(GridFunction(u.spec, v, diverged=True)
                                                     for v in vals))
    return SpaceTimeFunction.from_stack(source.times, vals, u.spec)


def picard_iterate(mu: GridFunction, cfg: SolveConfig, threads: int | None = None,
                   source: SpaceTimeFunction | None = None) -> PicardResult:
    """Iterate ``u_(k+1) = F(u_k)`` from ``u_0 = 0`` in the ``d_X`` / ``d_Y`` metric."""
    cfg.validate_for(mu.spec)
    dim = mu.spec.dim
    gauge = norm(mu, cfg.forcing_gauge_spec(dim), cfg.stride)
    src = duhamel_source(mu, cfg, threads=threads) if source is None else source
    d0 = _metric(src, cfg, threads)
    fallback = cfg.rho >= mu.spec.max_distance
    zero = SpaceTimeFunction.from_stack(src.times, np.zeros((len(src.times),) + mu.spec.shape),
                                        mu.spec)
    if d0 == 0:
        return PicardResult(zero, IterationReport((0.0,), (0.0,), "converged", gauge, 0.0,
                                                  fallback), src)
    cap = cfg.divergence_cap * d0
    u, dists, norms = src, [d0], [d0]
    verdict: Verdict = "max_iter"
    note = ""
    for _ in range(cfg.max_iter - 1):
        nxt = picard_map(u, src, cfg)
        if any(s.diverged for s in nxt.slices):
            verdict, note = "diverged", "non-finite values in the iterate"
            break
        n = _metric(nxt, cfg, threads)
        norms.append(n)
        dists.append(_metric(nxt - u, cfg, threads))
        u = nxt
        if n > cap:
            verdict, note = "diverged", "iterate norm exceeded the divergence cap"
            break
        if dists[-1] < cfg.tol * d0:
            verdict = "converged"
            break
    return PicardResult(u, IterationReport(tuple(dists), tuple(norms), verdict, gauge, d0,
                                           fallback, note), src)


@dataclass(frozen=True)
class BoundReport:
    solution_norm: float
    forcing_gauge: float

    @property
    def constant(self) -> float:
        return self.solution_norm / self.forcing_gauge if self.forcing_gauge > 0 else math.nan


def solution_bound(result: PicardResult, cfg: SolveConfig, threads: int | None = None) -> BoundReport:
    """``sup_t ||u(t)||`` against the forcing gauge; their ratio is the recorded ``C``."""
    spec = cfg.solution_bound_spec(result.solution.spec.dim)
    return BoundReport(sup_norm(result.solution, spec, cfg.stride, threads),
                       result.report.forcing_gauge)


@dataclass(frozen=True)
class InhomogeneousReport:
    source_norm: float
    forcing_gauge: float

    @property
    def constant(self) -> float:
        return self.source_norm / self.forcing_gauge


def inhomogeneous_estimate(mu: GridFunction, cfg: SolveConfig,
                           threads: int | None = None) -> InhomogeneousReport:
    """``sup_t ||int_0^t S(s) mu ds||'`` against the forcing gauge of ``mu``."""
    cfg.validate_for(mu.spec)
    src = duhamel_source(mu, cfg, threads=threads)
    gauge = norm(mu, cfg.forcing_gauge_spec(mu.spec.dim), cfg.stride)
    return InhomogeneousReport(_metric(src, cfg, threads), gauge)


@dataclass(frozen=True)
class ContractionReport:
    epsilons: np.ndarray
    max_ratios: np.ndarray
    fit: RateFit
    predicted: float

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.max_ratios))

    @property
    def epsilon_power(self) -> float:
        return self.fit.a


def contraction_probe(mu: GridFunction, cfg: SolveConfig, n_pairs: int = 4,
                      epsilons: Sequence[float] | None = None, seed: int = 0,
                      threads: int | None = None) -> ContractionReport:
    """Largest ``d(F u, F v) / d(u, v)`` over random pairs in the ball, per ``epsilon``.

    For each ``epsilon`` the forcing is ``epsilon mu`` and ``u, v`` are
    ``epsilon w S`` with ``S`` the forcing's Duhamel integral for ``mu`` and
    ``w`` independent uniform ``[0, 1]`` fields, so both lie in the ball of
    radius ``epsilon d(S, 0)``.  The fields are drawn once and reused on every
    rung.  The exponent of ``epsilon`` in the maximal ratio is fitted by least
    squares.
    """
    cfg.validate_for(mu.spec)
    eps = np.asarray(epsilons if epsilons is not None
                     else cfg.epsilon * np.geomspace(1.0, 16.0, 5), dtype=float)
    base = duhamel_source(mu, cfg, threads=threads)
    bstack = base.stack()
    rng = np.random.default_rng(seed)
    # the same pair fields at every rung, so the ladder isolates the epsilon dependence
    fields = []
    while len(fields) < n_pairs:
        wu, wv = rng.uniform(size=bstack.shape), rng.uniform(size=bstack.shape)
        if np.any(wu != wv):
            fields.append((wu, wv))
    out = []
    for e in eps:
        src = SpaceTimeFunction.from_stack(base.times, e * bstack, mu.spec)
        best = 0.0
        for wu, wv in fields:
            u = SpaceTimeFunction.from_stack(base.times, e * wu * bstack, mu.spec)
            v = SpaceTimeFunction.from_stack(base.times, e * wv * bstack, mu.spec)
            d = _metric(u - v, cfg, threads)
            if d == 0:
                continue
            best = max(best, _metric(picard_map(u, src, cfg) - picard_map(v, src, cfg), cfg,
                                     threads) / d)
        out.append(best)
    ratios = np.array(out)
    return ContractionReport(eps, ratios, fit_rate(eps, ratios), cfg.p - 1.0)


@dataclass(frozen=True)
class ThresholdReport:
    lambda_star_interval: tuple[float, float]
    evaluations: tuple[tuple[float, str], ...]
    widenings: int


class NonMonotoneVerdicts(RuntimeError):
    pass


def _converges(lam: float, mu_c: GridFunction, cfg: SolveConfig, source: SpaceTimeFunction,
               threads: int | None) -> bool:
    """``max_iter`` counts as not converged."""
    if lam == 0:
        return True
    src = SpaceTimeFunction.from_stack(source.times, lam * source.stack(), mu_c.spec)
    return picard_iterate(lam * mu_c, cfg, threads, source=src).report.verdict == "converged"


def _check_monotone(evals: list[tuple[float, bool]]) -> None:
    evals = sorted(evals)
    seen_div = None
    for lam, ok in evals:
        if not ok:
            seen_div = lam if seen_div is None else seen_div
        elif seen_div is not None:
            raise NonMonotoneVerdicts(
                f"converged at lambda={lam:g} above a divergent lambda={seen_div:g}")


def threshold_sweep(cfg: SolveConfig, mu_c: GridFunction, lambdas: Sequence[float],
                    threads: int | None = None) -> list[tuple[float, bool]]:
    """Verdict (``True`` = converged) for each ``lambda`` on ``mu = lambda mu_c``."""
    src = duhamel_source(mu_c, cfg, threads=threads)
    return [(float(l), _converges(float(l), mu_c, cfg, src, threads)) for l in lambdas]


def threshold_bisect(cfg: SolveConfig, lambda_lo: float, lambda_hi: float, mu_c: GridFunction,
                     shrink: float = 2.0**-10, max_widen: int = 8,
                     threads: int | None = None) -> ThresholdReport:
    """Bracket the largest ``lambda`` for which the iteration converges.

    Widens the bracket (halving ``lambda_lo``, doubling ``lambda_hi``) up to
    ``max_widen`` times, then bisects until the width has shrunk by ``shrink``.
    """
    if not (0 <= lambda_lo < lambda_hi):
        raise ValueError("need 0 <= lambda_lo < lambda_hi")
    src = duhamel_source(mu_c, cfg, threads=threads)
    evals: list[tuple[float, bool]] = []

    def verdict(l: float) -> bool:
        ok = _converges(l, mu_c, cfg, src, threads)
        evals.append((l, ok))
        return ok

    widen = 0
    lo_ok, hi_ok = verdict(lambda_lo), verdict(lambda_hi)
    while (not lo_ok or hi_ok) and widen < max_widen:
        widen += 1
        if not lo_ok:
            lambda_lo *= 0.5
            lo_ok = verdict(lambda_lo)
        if hi_ok:
            lambda_hi *= 2.0
            hi_ok = verdict(lambda_hi)
    if not lo_ok or hi_ok:
        raise RuntimeError("could not bracket the threshold")
    _check_monotone(evals)
    width = (lambda_hi - lambda_lo) * shrink
    while lambda_hi - lambda_lo > width:
        mid = 0.5 * (lambda_lo + lambda_hi)
        if verdict(mid):
            lambda_lo = mid
        else:
            lambda_hi = mid
    _check_monotone(evals)
    return ThresholdReport((lambda_lo, lambda_hi),
                           tuple((l, "converged" if ok else "diverged") for l, ok in evals), widen)


def forcing(spec: GridSpec, cfg: SolveConfig, scale: float = 1.0) -> GridFunction:
    """``scale * mu_c`` for the configured regime, sampled on ``spec``."""
    prof = replace(cfg.base_profile(spec.dim), scale=scale)
    return sample_profile(spec, prof)
