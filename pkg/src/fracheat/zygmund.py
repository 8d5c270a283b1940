"""Zygmund-type norms of rearrangements.

Five flavours are supported, all built from ``f*`` and the weight
``Phi(1/s)^alpha``:

* ``strong``         ``(int Phi^a f*^q ds)^(1/q)``
* ``frak``           ``sup_s (Phi(1/s)^a int_0^s f*^q)^(1/q)``
* ``weak``           ``sup_s (s Phi(1/s)^a f*(s)^q)^(1/q)``
* ``strong_primed``  ``(int Phi^a f**^q ds)^(1/q)``
* ``weak_primed``    ``sup_s s^(1/q) Phi(1/s)^(a/q) f**(s)``

A finite ``rho`` takes the sup of the norm of ``f chi_B(z, rho)`` over ball
centres ``z`` on a sub-lattice of cell centres, which bounds the true
uniformly-local norm from below.

Sups over ``s`` are taken over every breakpoint (left limits included) and the
log grid ``{2^(j/64)}``; with shared breakpoints this candidate set is the same
for every function on a grid, so pointwise inequalities between profiles carry
over to the computed norms exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import integrate

from ._parallel import pmap
from .gridfn import BallStencil, GridFunction, phi
from .rearrange import StepProfile, sorted_magnitudes

Flavor = Literal["strong", "frak", "weak", "strong_primed", "weak_primed"]
FLAVORS = ("strong", "frak", "weak", "strong_primed", "weak_primed")

LOG_GRID_PER_OCTAVE = 64
#: largest log-width of a Gauss panel in the strong-norm quadrature
PANEL_LOG_WIDTH = 0.25
DEFAULT_STRIDE = 4

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class NormSpec:
    q: float
    alpha: float = 0.0
    flavor: Flavor = "weak"
    rho: float = math.inf

    def __post_init__(self) -> None:
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if not self.q >= 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.flavor.endswith("primed") and self.q == 1:
            raise ValueError("primed norms need q > 1")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def local(self) -> bool:
        return math.isfinite(self.rho)

    def with_rho(self, rho: float) -> NormSpec:
        return NormSpec(self.q, self.alpha, self.flavor, rho)


def weight_power(s: np.ndarray, alpha: float) -> np.ndarray:
    """``Phi(1/s)^alpha``."""
    if alpha == 0:
        return np.ones_like(np.asarray(s, dtype=float))
    with np.errstate(divide="ignore"):
        return phi(1.0 / np.asarray(s, dtype=float)) ** alpha


def phi2_constants(k: float, s_min: float = 1e-300, s_max: float = 1e300,
                   n: int = 20001) -> tuple[float, float]:
    """``(sup Phi(1/s)/Phi(s^-k), sup Phi(s^-k)/Phi(1/s))`` on a log grid of ``s``."""
    s = np.geomspace(s_min, s_max, n)
    with np.errstate(over="ignore"):
        logs = -np.log(s)
        # Phi(s^-k) = log(e + exp(-k log s)) computed without overflow
        a = np.logaddexp(1.0, k * logs)
        b = np.logaddexp(1.0, logs)
    return float(np.max(b / a)), float(np.max(a / b))


def phi_doubling_constant(k: float = 2.0) -> float:
    """``sup_s Phi(1/s) / Phi(k/s)``; at most one for ``k >= 1``."""
    s = np.geomspace(1e-300, 1e300, 20001)
    return float(max(1.0, np.max(phi(1.0 / s) / phi(k / s))))


# --------------------------------------------------------------------------
# quadrature of the weight


def _head_integral(b1: float, alpha: float) -> float:
    """``int_0^b1 Phi(1/s)^alpha ds`` in the variable ``u = log(1/s)``."""
    if alpha == 0:
        return b1
    u0 = -math.log(b1)

    def f(u):
        return math.exp(-u) * math.log(math.e + math.exp(u)) ** alpha if u < 700 else (
            math.exp(-u) * (u + math.log1p(math.e * math.exp(-u))) ** alpha)

    val, *_ = integrate.quad(f, u0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200,
                             full_output=1)
    return val


def _panels(breaks: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss nodes in ``s`` for every interval ``[b_k, b_k+1]``, ``k >= 1``.

    Returns ``(s, w, owner)``: nodes, weights in ``ds``, and the interval index
    ``k`` (1-based, the interval ``[b_k, b_k+1]`` carries ``values[k]``).
    """
    lo, hi = breaks[1:-1], breaks[2:]
    if len(lo) == 0:
        return np.zeros(0), np.zeros(0), np.zeros(0, dtype=int)
    width = np.log(hi / lo)
    n = np.maximum(1, np.ceil(width / PANEL_LOG_WIDTH).astype(int))
    owner = np.repeat(np.arange(1, len(lo) + 1), n)
    start = np.repeat(np.cumsum(n) - n, n)
    sub = np.arange(len(owner)) - start
    step = np.repeat(width / n, n)
    a = np.log(np.repeat(lo, n)) + sub * step
    v = a[:, None] + 0.5 * step[:, None] * (_GL_X[None, :] + 1.0)
    s = np.exp(v)
    w = 0.5 * step[:, None] * _GL_W[None, :] * s
    own = np.repeat(owner[:, None], len(_GL_X), axis=1)
    return s.ravel(), w.ravel(), own.ravel()


def weight_integral(breaks: np.ndarray, alpha: float) -> np.ndarray:
    """``W(b_k) = int_0^b_k Phi(1/s)^alpha ds`` for every breakpoint."""
    breaks = np.asarray(breaks, dtype=float)
    if alpha == 0:
        return breaks.copy()
    out = np.zeros(len(breaks))
    if len(breaks) < 2:
        return out
    s, w, own = _panels(breaks)
    inc = np.bincount(own, weights=w * weight_power(s, alpha), minlength=len(breaks) - 1)
    out[1] = _head_integral(breaks[1], alpha)
    out[2:] = out[1] + np.cumsum(inc[1:])
    return out


@lru_cache(maxsize=32)
def _lattice_weight_integral(cell: float, count: int, alpha: float) -> np.ndarray:
    w = weight_integral(cell * np.arange(count + 1), alpha)
    w.setflags(write=False)
    return w


def _tail_integral(b: float, alpha: float, q: float) -> float:
    """``int_b^inf Phi(1/s)^alpha s^-q ds`` for ``q > 1``."""

    def f(v):  # s = b e^v
        if v > 700:
            return 0.0
        s = b * math.exp(v)
        return float(weight_power(np.array(s), alpha)) * s ** (1.0 - q)

    val, *_ = integrate.quad(f, 0.0, math.inf, epsabs=0.0, epsrel=1e-12, limit=200,
                             full_output=1)
    return val


# --------------------------------------------------------------------------
# batched evaluation on shared breakpoints


def _log_grid(lo: float, hi: float) -> np.ndarray:
    """Points ``2^(j/64)`` in ``[lo, hi]``, anchored at 1 so grids nest."""
    if not (hi > 0 and lo > 0) or lo > hi:
        return np.zeros(0)
    j0 = math.ceil(LOG_GRID_PER_OCTAVE * math.log2(lo))
    j1 = math.floor(LOG_GRID_PER_OCTAVE * math.log2(hi))
    return np.exp2(np.arange(j0, j1 + 1) / LOG_GRID_PER_OCTAVE)


def _upper_right_hull(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the points that maximise ``A x + B y`` for some ``A, B >= 0``.

    Collinear points are kept, so ties are never dropped.
    """
    order = np.lexsort((y, x))
    hull: list[int] = []
    for i in order:
        while len(hull) >= 2:
            o, m = hull[-2], hull[-1]
            cross = (x[m] - x[o]) * (y[i] - y[o]) - (y[m] - y[o]) * (x[i] - x[o])
            scale = abs((x[m] - x[o]) * (y[i] - y[o])) + abs((y[m] - y[o]) * (x[i] - x[o]))
            if cross > 1e-12 * scale:
                hull.pop()
            else:
                break
        hull.append(int(i))
    top = int(np.argmax(y))
    ymax = y[top]
    xs = x[hull]
    keep = [h for h, xv in zip(hull, xs) if xv >= x[top] or y[h] >= ymax]
    return np.array(sorted(set(keep)), dtype=int)


def _candidate_coords(s: np.ndarray, q: float, a: float, flavor: str):
    ws = weight_power(s, a)
    if flavor == "frak":
        return ws, s * ws
    if flavor == "weak":
        return np.zeros_like(s), s * ws
    w = (s * ws) ** (1.0 / q)
    return w / s, w


@lru_cache(maxsize=256)
def _lattice_candidates(cell: float, K: int, q: float, a: float, flavor: str,
                        lo: float, hi: float) -> np.ndarray:
    """Log-grid candidates beyond the first step that can win for some row.

    On step ``j`` every candidate is ``A_j x(s) + B_j y(s)`` with row
    coefficients ``A_j, B_j >= 0``, so only the upper-right hull of the points
    ``(x(s), y(s))`` of that step matters.
    """
    breaks = cell * np.arange(K + 1)
    s = _log_grid(max(breaks[1] / 1024.0, lo), min(breaks[-1], hi))
    s = s[s >= breaks[1]]
    if len(s) == 0:
        return s
    j = np.clip(np.searchsorted(breaks, s, side="right") - 1, 0, K - 1)
    x, y = _candidate_coords(s, q, a, flavor)
    keep = []
    for step in np.unique(j):
        idx = np.flatnonzero(j == step)
        keep.extend(idx[_upper_right_hull(x[idx], y[idx])])
    out = s[np.sort(np.array(keep, dtype=int))]
    out.setflags(write=False)
    return out


def _sup_values(breaks: np.ndarray, V: np.ndarray, q: float, a: float, flavor: str,
                s_range: tuple[float, float] | None = None,
                extra_s: np.ndarray | None = None,
                want_arg: bool = False,
                lattice_cell: float | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-row sup (and, on request, its location) for ``frak``, ``weak`` and ``weak_primed``.

    The value returned is the sup of ``Phi^a int_0^s f*^q``, ``s Phi^a f*^q``
    or ``s^(1/q) Phi^(a/q) f**`` respectively (no outer root).  Left limits at
    breakpoints stand in for the sup over each step.
    """
    B, K = V.shape
    widths = np.diff(breaks)
    r = 1.0 if flavor == "weak_primed" else q
    Vr = V**r
    P = np.zeros((B, K + 1))
    np.cumsum(Vr * widths, axis=1, out=P[:, 1:])

    lo, hi = (0.0, math.inf) if s_range is None else s_range
    keep = (breaks[1:] >= lo) & (breaks[1:] <= hi)
    bk = breaks[1:][keep]
    wk = weight_power(bk, a)
    if flavor == "frak":
        cand = wk * P[:, 1:][:, keep]
    elif flavor == "weak":
        cand = bk * wk * Vr[:, keep]
    else:
        cand = (bk * wk) ** (1.0 / q) * P[:, 1:][:, keep] / bk
    arg = None
    if cand.shape[1]:
        best = cand.max(axis=1)
        if want_arg:
            arg = bk[cand.argmax(axis=1)]
    else:
        best = np.zeros(B)
        if want_arg:
            arg = np.full(B, np.nan)

    s = _log_grid(max(breaks[1] / 1024.0, lo), min(breaks[-1], hi))
    if extra_s is not None:
        ex = np.asarray(extra_s, dtype=float)
        s = np.union1d(s, ex[(ex > 0) & (ex >= lo) & (ex <= hi) & (ex <= breaks[-1])])
    # inside the first step f* = f** = V[:, 0]: the s-dependence factors out
    first = s < breaks[1]
    if lattice_cell is not None and extra_s is None:
        rest = _lattice_candidates(lattice_cell, K, q, a, flavor, lo, hi)
    else:
        rest = s[~first]
    parts = []
    if np.any(first):
        s0 = s[first]
        ws0 = weight_power(s0, a)
        k0 = (s0 * ws0) ** (1.0 / q) if flavor == "weak_primed" else s0 * ws0
        i0 = int(np.argmax(k0))
        parts.append((k0[i0] * Vr[:, 0], None if not want_arg else np.full(B, s0[i0])))
    s = rest
    if len(s):
        j = np.clip(np.searchsorted(breaks, s, side="right") - 1, 0, K - 1)
        ws = weight_power(s, a)
        if flavor == "frak":
            c = ws * (P[:, j] + Vr[:, j] * (s - breaks[j]))
        elif flavor == "weak":
            c = s * ws * Vr[:, j]
        else:
            c = (s * ws) ** (1.0 / q) * (P[:, j] + V[:, j] * (s - breaks[j])) / s
        parts.append((c.max(axis=1), s[c.argmax(axis=1)] if want_arg else None))
    for cm, at in parts:
        if want_arg:
            arg = np.where(cm > best, at, arg)
        best = np.maximum(best, cm)
    return best, arg


def _profile_norms(breaks: np.ndarray, V: np.ndarray, spec: NormSpec,
                   weights: np.ndarray | None = None,
                   s_range: tuple[float, float] | None = None,
                   extra_s: np.ndarray | None = None,
                   lattice_cell: float | None = None) -> np.ndarray:
    """Global norms of the step profiles ``V[i]`` on the shared ``breaks``.

    ``V`` has shape ``(B, K)`` with non-increasing non-negative rows.  For the
    sup flavours ``s_range`` restricts the candidate ``s`` to a closed window
    and ``extra_s`` adds candidates.
    """
    q, a, fl = spec.q, spec.alpha, spec.flavor
    B, K = V.shape
    if K == 0:
        return np.zeros(B)
    if math.isinf(q):
        return V[:, 0].copy()
    if fl == "strong":
        if weights is None:
            weights = weight_integral(breaks, a)
        return (V**q @ np.diff(weights)) ** (1.0 / q)

    if fl == "strong_primed":
        P = np.zeros((B, K + 1))
        np.cumsum(V * np.diff(breaks), axis=1, out=P[:, 1:])
        if weights is None:
            weights = weight_integral(breaks[:2], a)
        total = V[:, 0] ** q * weights[1]
        s, w, own = _panels(breaks)
        if len(s):
            fss = (P[:, own] + V[:, own] * (s - breaks[own])) / s
            total = total + (fss**q) @ (w * weight_power(s, a))
        total = total + P[:, -1] ** q * _tail_integral(breaks[-1], a, q)
        return total ** (1.0 / q)

    best, _ = _sup_values(breaks, V, q, a, fl, s_range, extra_s, lattice_cell=lattice_cell)
    if fl == "weak_primed":
        return best
    return best ** (1.0 / q)


def sup_with_argmax(prof: StepProfile, q: float, alpha: float, flavor: str,
                    s_range: tuple[float, float] | None = None,
                    extra_s: np.ndarray | None = None) -> tuple[float, float]:
    """``(norm, s*)`` for a sup flavour; ``weak_primed`` here also allows ``q = 1``."""
    if flavor not in ("frak", "weak", "weak_primed"):
        raise ValueError("sup_with_argmax needs a sup flavour")
    if len(prof) == 0:
        return 0.0, math.nan
    best, arg = _sup_values(prof.breakpoints, prof.values[None, :], q, alpha, flavor,
                            s_range, extra_s, want_arg=True)
    val = float(best[0]) if flavor == "weak_primed" else float(best[0]) ** (1.0 / q)
    return val, float(arg[0])


def profile_norm(prof: StepProfile, spec: NormSpec,
                 s_range: tuple[float, float] | None = None,
                 extra_s: np.ndarray | None = None) -> float:
    if spec.local:
        raise ValueError("a StepProfile carries no geometry; use a GridFunction for rho < inf")
    if len(prof) == 0:
        return 0.0
    return float(_profile_norms(prof.breakpoints, prof.values[None, :], spec,
                                s_range=s_range, extra_s=extra_s)[0])


def _lattice_norms(sorted_rows: np.ndarray, cell: float, spec: NormSpec,
                   s_range: tuple[float, float] | None = None) -> np.ndarray:
    K = sorted_rows.shape[1]
    breaks = cell * np.arange(K + 1)
    weights = None
    if spec.flavor in ("strong", "strong_primed") and math.isfinite(spec.q):
        weights = _lattice_weight_integral(cell, K if spec.flavor == "strong" else 1,
                                           spec.alpha)
    return _profile_norms(breaks, sorted_rows, spec, weights, s_range, lattice_cell=cell)


def global_norm(f: GridFunction, spec: NormSpec,
                s_range: tuple[float, float] | None = None) -> float:
    rows = sorted_magnitudes(f.flat)[None, :]
    return float(_lattice_norms(rows, f.spec.cell_measure, spec, s_range)[0])


def local_norms(f: GridFunction, spec: NormSpec, stride: int = DEFAULT_STRIDE,
                threads: int | None = None, chunk_elems: int = 4_000_000) -> np.ndarray:
    """Norm of ``f chi_B(z, rho)`` for every centre ``z`` of the stride lattice.

    Returned with shape ``(M/stride,)*N`` (rounded up).
    """
    stencil = BallStencil(f.spec, spec.rho)
    centers = stencil.centers(stride)
    per = max(1, chunk_elems // max(1, stencil.size))
    chunks = [centers[i : i + per] for i in range(0, len(centers), per)]
    glob = spec.with_rho(math.inf)

    def work(c):
        rows = sorted_magnitudes(stencil.gather(f.values, c))
        return _lattice_norms(rows, f.spec.cell_measure, glob)

    out = np.concatenate(pmap(work, chunks, threads)) if chunks else np.zeros(0)
    side = len(np.arange(0, f.spec.points_per_axis, max(1, int(stride))))
    return out.reshape((side,) * f.spec.dim)


def norm(f: GridFunction | StepProfile, spec: NormSpec, stride: int = DEFAULT_STRIDE,
         threads: int | None = None, s_range: tuple[float, float] | None = None) -> float:
    """The norm selected by ``spec``.

    For ``rho`` at least the torus diameter every ball is the whole box and the
    global norm is returned.  ``s_range`` (global sup flavours only) restricts
    the sup to ``lo <= s <= hi``; the full sup is sensitive to the first few
    cells, where no step function resolves a singular profile.
    """
    if s_range is not None and (spec.local or spec.flavor.startswith("strong")):
        raise ValueError("s_range applies to global sup flavours only")
    if isinstance(f, StepProfile):
        return profile_norm(f, spec, s_range)
    if not spec.local or spec.rho > f.spec.max_distance:
        return global_norm(f, spec.with_rho(math.inf), s_range)
    return float(local_norms(f, spec, stride, threads).max())


def uses_global_fallback(f: GridFunction, rho: float) -> bool:
    return not math.isfinite(rho) or rho > f.spec.max_distance


# --------------------------------------------------------------------------
# checks


@dataclass(frozen=True)
class OrderingReport:
    strong: float
    frak: float
    weak: float

    def holds(self, slack: float = 1e-9) -> bool:
        return (self.strong >= self.frak * (1 - slack)
                and self.frak >= self.weak * (1 - slack))


def norm_ordering_report(f: GridFunction | StepProfile, q: float, alpha: float) -> OrderingReport:
    if not (1 <= q < math.inf):
        raise ValueError("ordering report needs finite q >= 1")
    return OrderingReport(*(norm(f, NormSpec(q, alpha, fl)) for fl in ("strong", "frak", "weak")))


@dataclass(frozen=True)
class ProductReport:
    lhs: float
    rhs_factor: float
    constant: float
    phi_doubling: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.constant * self.rhs_factor * (1 + 1e-9) + 1e-300


def product_norm_check(f: GridFunction, g: GridFunction, q: float, q1: float, q2: float,
                       alpha: float, alpha1: float, alpha2: float,
                       rho: float = math.inf, stride: int = DEFAULT_STRIDE) -> ProductReport:
    """``||fg||_(q,alpha) <= 2^(1/q) c_Phi ||f||_(q1,alpha1) ||g||_(q2,alpha2)`` (weak flavour)."""
    inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x  # noqa: E731
    if abs(inv(q) - inv(q1) - inv(q2)) > 1e-12:
        raise ValueError("exponents must satisfy 1/q = 1/q1 + 1/q2")
    if abs(alpha * inv(q) - alpha1 * inv(q1) - alpha2 * inv(q2)) > 1e-12:
        raise ValueError("exponents must satisfy alpha/q = alpha1/q1 + alpha2/q2")
    lhs = norm(f * g, NormSpec(q, alpha, "weak", rho), stride)
    nf = norm(f, NormSpec(q1, alpha1, "weak", rho), stride)
    ng = norm(g, NormSpec(q2, alpha2, "weak", rho), stride)
    c_phi = phi_doubling_constant(2.0)
    return ProductReport(lhs, nf * ng, 2.0 ** (1.0 / q) * c_phi, c_phi)


@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.lhs), abs(self.rhs))
        return 0.0 if scale == 0 else abs(self.lhs - self.rhs) / scale

    @property
    def holds(self) -> bool:
        return self.rel_error <= 1e-10


def power_identity_check(f: GridFunction, r: float, q: float, alpha: float,
                         rho: float = math.inf, stride: int = DEFAULT_STRIDE) -> IdentityReport:
    """``|| |f|^r ||_(q,alpha) = ||f||_(rq,alpha)^r`` in the weak flavour."""
    if r * q < 1:
        raise ValueError("power identity needs r q >= 1")
    lhs = norm(abs(f) ** r, NormSpec(q, alpha, "weak", rho), stride)
    rhs = norm(f, NormSpec(r * q, alpha, "weak", rho), stride) ** r
    return IdentityReport(lhs, rhs)


@dataclass(frozen=True)
class DowngradeReport:
    lhs: float
    rhs: float
    factor: float
    constant: float


def log_downgrade_check(f: GridFunction, alpha: float, beta: float, rho: float,
                        stride: int = DEFAULT_STRIDE) -> DowngradeReport:
    """Fitted ``C`` in ``|||f|||_(1,alpha;rho) <= C Phi(1/rho)^(alpha-beta) |||f|||_(1,beta;rho)``."""
    if alpha > beta:
        raise ValueError("need alpha <= beta")
    if not (0 <= alpha and math.isfinite(rho)):
        raise ValueError("need alpha >= 0 and finite rho")
    lhs = norm(f, NormSpec(1.0, alpha, "frak", rho), stride)
    rhs = norm(f, NormSpec(1.0, beta, "frak", rho), stride)
    factor = float(phi(1.0 / rho)) ** (alpha - beta)
    c = 1.0 if alpha == beta else (lhs / (factor * rhs) if rhs > 0 else 0.0)
    return DowngradeReport(lhs, rhs, factor, c)
