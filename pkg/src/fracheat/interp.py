"""K-functionals, the weak-type interpolation embedding, Hardy inequalities and
the log-weight integral bounds used by the decay estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import integrate

from .gridfn import GridFunction, phi
from .rearrange import StepProfile, rearrangement
from .zygmund import NormSpec, profile_norm, sup_with_argmax, weight_power

SpaceFamily = Literal["frak_log", "plain_lebesgue"]

N_TAU = 128
N_LAMBDA = 64


@dataclass(frozen=True)
class InterpPairSpec:
    """``X_i = frak(q_i, alpha q_i / q)`` or ``X_i = L^(q_i)`` with ``1/q = (1-k)/q0 + k/q1``."""

    q0: float
    q1: float
    q: float
    kappa: float
    alpha: float = 0.0
    space_family: SpaceFamily = "frak_log"

    def __post_init__(self) -> None:
        if not (1 <= self.q0 < self.q < self.q1 < math.inf):
            raise ValueError("need 1 <= q0 < q < q1 < inf")
        if not (0 < self.kappa < 1):
            raise ValueError("kappa must lie in (0, 1)")
        if abs(1 / self.q - (1 - self.kappa) / self.q0 - self.kappa / self.q1) > 1e-12:
            raise ValueError("exponents violate 1/q = (1-kappa)/q0 + kappa/q1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.space_family not in ("frak_log", "plain_lebesgue"):
            raise ValueError(f"unknown space family {self.space_family!r}")

    @classmethod
    def from_endpoints(cls, q0: float, q1: float, kappa: float, alpha: float = 0.0,
                       space_family: SpaceFamily = "frak_log") -> InterpPairSpec:
        q = 1.0 / ((1 - kappa) / q0 + kappa / q1)
        return cls(q0, q1, q, kappa, alpha, space_family)

    def endpoint_specs(self) -> tuple[NormSpec, NormSpec]:
        if self.space_family == "plain_lebesgue":
            return NormSpec(self.q0, 0.0, "strong"), NormSpec(self.q1, 0.0, "strong")
        return (NormSpec(self.q0, self.alpha * self.q0 / self.q, "frak"),
                NormSpec(self.q1, self.alpha * self.q1 / self.q, "frak"))


def critical_pair(dim: int, theta: float, q0: float) -> InterpPairSpec:
    """``q = N/(N-theta)``, ``kappa = 1/2``, ``X_i = frak(q_i, q_i gamma)``."""
    p_star = dim / (dim - theta)
    gamma = (dim - theta) / theta
    q1 = 1.0 / (2.0 / p_star - 1.0 / q0)
    return InterpPairSpec(q0, q1, p_star, 0.5, p_star * gamma, "frak_log")


def supercritical_pair(p: float, r: float, q0: float) -> InterpPairSpec:
    """``q = p r``, ``kappa = 1/2``, ``X_i = L^(q_i)`` (the frak family at ``alpha = 0``)."""
    q = p * r
    q1 = 1.0 / (2.0 / q - 1.0 / q0)
    return InterpPairSpec(q0, q1, q, 0.5, 0.0, "frak_log")


def _as_profile(f: GridFunction | StepProfile) -> StepProfile:
    return f if isinstance(f, StepProfile) else rearrangement(f)


def _split(prof: StepProfile, j: int) -> tuple[StepProfile, StepProfile]:
    """Height truncation at the ``j``-th step: ``f chi_{|f| > tau}`` and the rest."""
    b, v = prof.breakpoints, prof.values
    top = StepProfile(b[: j + 1], v[:j], prof.total_measure)
    rest = StepProfile(b[j:] - b[j], v[j:], prof.total_measure)
    return top, rest


@dataclass(frozen=True)
class TruncationTable:
    """Endpoint norms of every height truncation on the tau grid."""

    taus: np.ndarray
    n0: np.ndarray
    n1: np.ndarray

    def k_upper(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return np.min(self.n0[None, :] + lam[:, None] * self.n1[None, :], axis=1)


def truncation_table(f: GridFunction | StepProfile, pair: InterpPairSpec, n_tau: int = N_TAU,
                     extra_s: np.ndarray | None = None) -> TruncationTable:
    """``||f chi_{|f|>tau}||_X0`` and ``||f chi_{|f|<=tau}||_X1`` on a log grid of tau.

    The grid spans ``[min |f| > 0, max |f|]`` and both trivial splittings are
    included.
    """
    prof = _as_profile(f)
    s0, s1 = pair.endpoint_specs()
    if len(prof) == 0:
        return TruncationTable(np.zeros(1), np.zeros(1), np.zeros(1))
    v = prof.values
    taus = np.geomspace(v[-1], v[0], n_tau) if v[0] > v[-1] else np.array([v[0]])
    taus = np.r_[0.0, taus]
    # f0 keeps the values > tau: the first j steps
    js = len(v) - np.searchsorted(v[::-1], taus, side="right")
    n0 = np.empty(len(js))
    n1 = np.empty(len(js))
    cache: dict[int, tuple[float, float]] = {}
    for i, j in enumerate(js):
        if j not in cache:
            top, rest = _split(prof, int(j))
            cache[j] = (profile_norm(top, s0, extra_s=extra_s),
                        profile_norm(rest, s1, extra_s=extra_s))
        n0[i], n1[i] = cache[j]
    return TruncationTable(taus, n0, n1)


def k_functional_upper(f: GridFunction | StepProfile, lam: float, pair: InterpPairSpec,
                       n_tau: int = N_TAU) -> float:
    """Upper bound for ``K(f, lam; X0, X1)`` from height truncations."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return float(truncation_table(f, pair, n_tau).k_upper(lam)[0])


@dataclass(frozen=True)
class EmbeddingReport:
    lhs: float
    rhs: float
    s_star: float
    lambdas: np.ndarray

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-9) + 1e-300


def interp_embedding_check(f: GridFunction | StepProfile, pair: InterpPairSpec,
                           n_lambda: int = N_LAMBDA, n_tau: int = N_TAU) -> EmbeddingReport:
    """``||f||_(L^(q,inf) log^alpha) <= 2^(1/q0) sup_lam lam^-kappa K(f, lam)``.

    ``K`` is bounded from above, so the right side only grows.  The lambda grid
    is log-spaced over the range ``s^(1/q0 - 1/q1)`` for ``s`` in the support,
    and contains ``lam* = s*^(1/q0 - 1/q1)`` for the maximiser ``s*`` of the
    left side, the value at which the inequality is derived.
    """
    if pair.space_family != "frak_log":
        raise ValueError("the embedding check needs the frak_log family")
    prof = _as_profile(f)
    if len(prof) == 0:
        return EmbeddingReport(0.0, 0.0, math.nan, np.zeros(0))
    lhs, s_star = sup_with_argmax(prof, pair.q, pair.alpha, "weak")
    d = 1.0 / pair.q0 - 1.0 / pair.q1
    b = prof.breakpoints
    lams = np.geomspace(b[1] ** d, b[-1] ** d, n_lambda) if len(b) > 2 else np.array([b[-1] ** d])
    lams = np.union1d(lams, [s_star**d])
    table = truncation_table(prof, pair, n_tau, extra_s=np.array([s_star]))
    rhs = 2.0 ** (1.0 / pair.q0) * float(np.max(lams ** (-pair.kappa) * table.k_upper(lams)))
    return EmbeddingReport(lhs, rhs, s_star, lams)


@dataclass(frozen=True)
class LebesgueInterpReport:
    interpolation_norm: float
    weak_norm: float

    @property
    def ratio(self) -> float:
        return self.interpolation_norm / self.weak_norm if self.weak_norm > 0 else math.nan


def lebesgue_interp_sanity(f: GridFunction | StepProfile, pair: InterpPairSpec,
                           n_lambda: int = N_LAMBDA, n_tau: int = N_TAU) -> LebesgueInterpReport:
    """``sup_lam lam^-kappa K(f, lam; L^q0, L^q1)`` next to ``||f||_(L^(q,inf))``."""
    plain = InterpPairSpec(pair.q0, pair.q1, pair.q, pair.kappa, 0.0, "plain_lebesgue")
    prof = _as_profile(f)
    weak = profile_norm(prof, NormSpec(pair.q, 0.0, "weak")) if len(prof) else 0.0
    if len(prof) == 0:
        return LebesgueInterpReport(0.0, 0.0)
    d = 1.0 / pair.q0 - 1.0 / pair.q1
    b = prof.breakpoints
    lams = np.geomspace(b[1] ** d / 16, b[-1] ** d * 16, n_lambda)
    table = truncation_table(prof, plain, n_tau)
    interp = float(np.max(lams ** (-pair.kappa) * table.k_upper(lams)))
    return LebesgueInterpReport(interp, weak)


# --------------------------------------------------------------------------
# Hardy inequalities

Weight = Callable[[np.ndarray], np.ndarray] | np.ndarray


@dataclass(frozen=True, eq=False)
class HardyWeights:
    """Weights ``U, V`` for ``||U F||_q <= c ||V f||_q`` on ``(a, b)``.

    ``lower_limit`` uses ``F(s) = int_a^s f``, ``upper_limit`` uses
    ``F(s) = int_s^b f``.  ``grid`` is the tabulation grid (its ends stand in
    for ``a`` and ``b``); ``U`` and ``V`` are callables or arrays on the grid.
    """

    direction: Literal["lower_limit", "upper_limit"]
    interval: tuple[float, float]
    U: Weight
    V: Weight
    q: float
    grid: np.ndarray

    def __post_init__(self) -> None:
        if self.direction not in ("lower_limit", "upper_limit"):
            raise ValueError(f"unknown direction {self.direction!r}")
        a, b = self.interval
        if not (0 <= a < b <= math.inf):
            raise ValueError("need 0 <= a < b <= inf")
        if not (1 <= self.q <= math.inf):
            raise ValueError("q must lie in [1, inf]")
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or len(g) < 3 or np.any(np.diff(g) <= 0) or g[0] < a or g[-1] > b:
            raise ValueError("grid must be increasing, inside the interval, with >= 3 points")
        object.__setattr__(self, "grid", g)
        for w in (self.U, self.V):
            if not callable(w) and np.shape(w) != g.shape:
                raise ValueError("tabulated weights must match the grid")

    def tabulate(self, grid: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g = self.grid if grid is None else grid
        out = []
        for w in (self.U, self.V):
            if callable(w):
                out.append(np.asarray(w(g), dtype=float))
            else:
                out.append(np.interp(g, self.grid, np.asarray(w, dtype=float)))
        u, v = out
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("weights must be finite on the tabulation grid")
        return g, u, v


def conjugate(q: float) -> float:
    if q == 1:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


def hardy_constant_factor(q: float) -> float:
    """``q^(1/q) q'^(1/q')`` for ``1 < q < inf``, else 1."""
    if q == 1 or math.isinf(q):
        return 1.0
    qp = conjugate(q)
    return q ** (1.0 / q) * qp ** (1.0 / qp)


def _cumtrapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.r_[0.0, np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))]


def _lq(y: np.ndarray, x: np.ndarray, q: float) -> float:
    if math.isinf(q):
        return float(np.max(np.abs(y)))
    return float(np.trapezoid(np.abs(y) ** q, x) ** (1.0 / q))


def _partial_lq(y: np.ndarray, x: np.ndarray, q: float, from_left: bool) -> np.ndarray:
    """``||y||_(L^q(x_0, x_i))`` (``from_left``) or ``||y||_(L^q(x_i, x_n))`` for each ``i``."""
    a = np.abs(y)
    if not from_left:
        r = _partial_lq(a[::-1], -x[::-1], q, True)
        return r[::-1]
    if math.isinf(q):
        return np.maximum.accumulate(a)
    return _cumtrapz(a**q, x) ** (1.0 / q)


def hardy_b(weights: HardyWeights, grid: np.ndarray | None = None) -> float:
    """Grid value of ``B_1`` (lower limit) or ``B_2`` (upper limit)."""
    g, u, v = weights.tabulate(grid)
    q, qp = weights.q, conjugate(weights.q)
    with np.errstate(divide="ignore"):
        inv_v = 1.0 / v
    if weights.direction == "lower_limit":
        prod = _partial_lq(u, g, q, from_left=False) * _partial_lq(inv_v, g, qp, from_left=True)
    else:
        prod = _partial_lq(u, g, q, from_left=True) * _partial_lq(inv_v, g, qp, from_left=False)
    return float(np.max(prod))


def _refine(grid: np.ndarray, interval: tuple[float, float]) -> np.ndarray:
    """Midpoints, plus one more decade toward any interval end the grid stops short of.

    The extension is what exposes a ``B`` that diverges at an end point.
    """
    geometric = grid[0] > 0
    mids = np.sqrt(grid[1:] * grid[:-1]) if geometric else 0.5 * (grid[1:] + grid[:-1])
    parts = [grid, mids]
    a, b = interval
    if grid[0] > a:
        lo = max(a, grid[0] / 10.0)
        ext = np.geomspace(lo, grid[0], 17) if lo > 0 else np.linspace(lo, grid[0], 17)
        parts.append(ext[1:-1] if lo == a else ext[:-1])
    if grid[-1] < b:
        hi = min(b, grid[-1] * 10.0)
        ext = np.geomspace(grid[-1], hi, 17)
        parts.append(ext[1:-1] if hi == b else ext[1:])
    return np.unique(np.concatenate(parts))


@dataclass(frozen=True)
class HardyReport:
    lhs: float
    rhs: float
    B: float
    B_refined: float
    constant: float
    verifiable: bool
    bound_ok: bool | None


def hardy_check(weights: HardyWeights, f: Weight, stability: float = 0.10) -> HardyReport:
    """Check ``||U F||_q <= q^(1/q) q'^(1/q') B ||V f||_q`` on the tabulation grid.

    ``B`` is a grid sup and hence a lower bound; it is accepted only if one
    refinement (midpoints plus a decade toward open ends) changes it by at
    most ``stability`` (relative).
    Otherwise the verdict is ``None`` (unverifiable).
    """
    g, u, v = weights.tabulate()
    fv = np.asarray(f(g) if callable(f) else f, dtype=float)
    if fv.shape != g.shape or np.any(fv < 0) or not np.all(np.isfinite(fv)):
        raise ValueError("f must be finite, non-negative and tabulated on the grid")
    if weights.direction == "lower_limit":
        F = _cumtrapz(fv, g)
    else:
        F = _cumtrapz(fv[::-1], -g[::-1])[::-1]
    lhs = _lq(u * F, g, weights.q)
    rhs = _lq(v * fv, g, weights.q)
    B = hardy_b(weights)
    tabulated = not (callable(weights.U) and callable(weights.V))
    B_ref = B if tabulated else hardy_b(weights, _refine(g, weights.interval))
    verifiable = bool(math.isfinite(B) and math.isfinite(B_ref)
                      and abs(B_ref - B) <= stability * max(B, 1e-300))
    c = hardy_constant_factor(weights.q) * max(B, B_ref)
    ok = None
    if verifiable:
        slack = 1e-6 if 1 < weights.q < math.inf else 1e-12
        ok = bool(lhs <= c * rhs * (1 + slack) + 1e-300)
    return HardyReport(lhs, rhs, B, B_ref, c, verifiable, ok)


def primed_norm_weights(q: float, alpha: float, pair: int, grid: np.ndarray,
                        interval: tuple[float, float] = (0.0, math.inf)) -> HardyWeights:
    """The two weight pairs behind the equivalence of the primed norms.

    Pair 1 is ``(tau^-1 Phi^(alpha/q), Phi^(alpha/q))`` with Hardy exponent ``q``;
    pair 2 is ``(tau^(1/q-1) Phi^(alpha/q), tau^(1/q) Phi^(alpha/q))`` with Hardy
    exponent ``inf``.  Both act on ``F(s) = int_0^s f``.
    """
    w = lambda t: weight_power(t, alpha / q)  # noqa: E731
    if pair == 1:
        return HardyWeights("lower_limit", interval, lambda t: w(t) / t, w, q, grid)
    if pair == 2:
        return HardyWeights("lower_limit", interval, lambda t: t ** (1 / q - 1) * w(t),
                            lambda t: t ** (1 / q) * w(t), math.inf, grid)
    raise ValueError("pair must be 1 or 2")


# --------------------------------------------------------------------------
# log-weight integral bounds


@dataclass(frozen=True)
class LogIntegralReport:
    s: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    fitted_C: float
    fitted_C_refined: float

    @property
    def stable(self) -> bool:
        return (math.isfinite(self.fitted_C)
                and abs(self.fitted_C_refined - self.fitted_C) <= 0.10 * self.fitted_C)


def _phi_log(u: float) -> float:
    """``log Phi(e^u) = log log(e + e^u)`` without overflow."""
    return math.log(np.logaddexp(1.0, u))


def _log_integrand(q: float, alpha: float) -> Callable[[float], float]:
    # tau = e^v: tau^q Phi(1/tau)^alpha dtau = exp((q+1) v + alpha log Phi(e^-v)) dv
    return lambda v: math.exp((q + 1.0) * v + alpha * _phi_log(-v))


def _lem31_sides(case: str, q: float, alpha: float, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lhs = np.empty(len(s))
    if case == "lem31_2":
        g = _log_integrand(-1.0, alpha)
    else:
        g = _log_integrand(q, alpha)
    for i, si in enumerate(s):
        v = math.log(si)
        if case == "lem31_3":
            val, *_ = integrate.quad(g, v, math.inf, epsabs=0.0, epsrel=1e-11, limit=400,
                                     full_output=1)
        else:
            val, *_ = integrate.quad(g, -math.inf, v, epsabs=0.0, epsrel=1e-11, limit=400,
                                     full_output=1)
        lhs[i] = val
    if case == "lem31_2":
        rhs = weight_power(s, alpha + 1.0)
    else:
        rhs = s ** (q + 1.0) * weight_power(s, alpha) if alpha >= 0 else (
            s ** (q + 1.0) * phi(1.0 / s) ** alpha)
    return lhs, rhs


def log_integral_estimates_check(case: str, q: float = 0.0, alpha: float = 0.0,
                                 S: float = 1.0, s_min: float = 1e-8, s_max: float = 1e8,
                                 n: int = 49) -> LogIntegralReport:
    """``fitted_C = max lhs/rhs`` on a log grid of ``s``, and again on the doubled grid.

    ``lem31_1``: ``int_0^s tau^q Phi^alpha <= C s^(q+1) Phi(1/s)^alpha``, ``q > -1``;
    ``lem31_2``: ``int_0^s tau^-1 Phi^alpha <= C Phi(1/s)^(alpha+1)``, ``alpha < -1``, ``s < S``;
    ``lem31_3``: ``int_s^inf tau^q Phi^alpha <= C s^(q+1) Phi(1/s)^alpha``, ``q < -1``.
    """
    if case == "lem31_1" and not q > -1:
        raise ValueError("case lem31_1 needs q > -1")
    if case == "lem31_2":
        if not alpha < -1:
            raise ValueError("case lem31_2 needs alpha < -1")
        if not (0 < S < math.inf):
            raise ValueError("case lem31_2 needs finite S > 0")
        s_max = min(s_max, S)
    if case == "lem31_3" and not q < -1:
        raise ValueError("case lem31_3 needs q < -1")
    if case not in ("lem31_1", "lem31_2", "lem31_3"):
        raise ValueError(f"unknown case {case!r}")
    s = np.geomspace(s_min, s_max, n)
    if case == "lem31_2":
        s = s[s < S] if s[-1] >= S else s
    lhs, rhs = _lem31_sides(case, q, alpha, s)
    s2 = np.geomspace(s[0], s[-1], 2 * len(s) - 1)
    lhs2, rhs2 = _lem31_sides(case, q, alpha, s2)
    return LogIntegralReport(s, lhs, rhs, float(np.max(lhs / rhs)), float(np.max(lhs2 / rhs2)))


# --------------------------------------------------------------------------
# maximal-function bounds


@dataclass(frozen=True)
class MaximalBoundReport:
    case: str
    lhs: float
    rhs: float
    fitted_C: float
    frak_lhs: float | None = None
    frak_C: float | None = None

    @property
    def holds(self) -> bool:
        if self.case == "lem33_1":
            return self.fitted_C <= 1 + 1e-9
        return math.isfinite(self.fitted_C)


def maximal_sup(f: GridFunction | StepProfile, r: float, alpha: float) -> float:
    """``sup_s (s Phi(1/s)^alpha f**(s)^r)^(1/r)``."""
    prof = _as_profile(f)
    return sup_with_argmax(prof, r, alpha, "weak_primed")[0]


def maximal_bound_check(case: str, f: GridFunction | StepProfile, r: float, alpha: float,
                        E_measure: float | None = None) -> MaximalBoundReport:
    """Bounds on ``sup_s (s Phi^alpha (f**)^r)^(1/r)``.

    ``lem33_1``: by the frak norm ``(r, alpha)``, constant exactly 1;
    ``lem33_2``: by ``C`` times the weak norm ``(r, alpha)``, ``r > 1``;
    ``lem33_3``: ``r = 1``, ``f`` supported in a set of measure ``E_measure``,
    by ``C`` times the weak norm ``(1, alpha + 1)``; the frak norm ``(1, alpha)``
    is reported against the same right side.
    """
    prof = _as_profile(f)
    if case == "lem33_1":
        if not (r >= 1 and alpha >= 0):
            raise ValueError("case lem33_1 needs r >= 1, alpha >= 0")
        rhs = profile_norm(prof, NormSpec(r, alpha, "frak"))
    elif case == "lem33_2":
        if not (r > 1 and alpha >= 0):
            raise ValueError("case lem33_2 needs r > 1, alpha >= 0")
        rhs = profile_norm(prof, NormSpec(r, alpha, "weak"))
    elif case == "lem33_3":
        if r != 1 or not alpha > 0:
            raise ValueError("case lem33_3 needs r = 1 and alpha > 0")
        if E_measure is None or prof.support > E_measure * (1 + 1e-12):
            raise ValueError("case lem33_3 needs f supported in a set of measure E_measure")
        rhs = profile_norm(prof, NormSpec(1.0, alpha + 1.0, "weak"))
    else:
        raise ValueError(f"unknown case {case!r}")
    lhs = maximal_sup(prof, r, alpha) if len(prof) else 0.0
    c = lhs / rhs if rhs > 0 else 0.0
    if case == "lem33_3":
        fr = profile_norm(prof, NormSpec(1.0, alpha, "frak"))
        return MaximalBoundReport(case, lhs, rhs, c, fr, fr / rhs if rhs > 0 else 0.0)
    return MaximalBoundReport(case, lhs, rhs, c)
