"""Distribution functions, rearrangements ``f*`` and maximal averages ``f**``.

On a grid every cell carries measure ``h^N``, so ``f*`` is exactly a
right-continuous step function; nothing is resampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridfn import GridFunction


def distribution_function(f: GridFunction, lam: float) -> float:
    """``d_f(lam) = |{|f| > lam}|``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return float(np.count_nonzero(np.abs(f.values) > lam) * f.spec.cell_measure)


def sorted_magnitudes(values: np.ndarray) -> np.ndarray:
    """``|values|`` sorted descending along the last axis (ties keep index order)."""
    a = np.abs(np.asarray(values, dtype=float))
    return -np.sort(-a, axis=-1, kind="stable")


@dataclass(frozen=True, eq=False)
class StepProfile:
    """``f*(s) = values[i]`` on ``[breakpoints[i], breakpoints[i+1])``, zero past the last break."""

    breakpoints: np.ndarray
    values: np.ndarray
    total_measure: float = np.inf

    def __post_init__(self) -> None:
        b = np.array(self.breakpoints, dtype=float)
        v = np.array(self.values, dtype=float)
        if b.ndim != 1 or v.ndim != 1 or len(b) != len(v) + 1:
            raise ValueError("need len(breakpoints) == len(values) + 1")
        if b[0] != 0.0 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must start at 0 and increase strictly")
        if np.any(v < 0) or np.any(np.diff(v) > 0):
            raise ValueError("values must be non-negative and non-increasing")
        if b[-1] > self.total_measure * (1 + 1e-12):
            raise ValueError("profile support exceeds the total measure")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_sorted(cls, sorted_vals: np.ndarray, cell: float, total_measure: float = np.inf,
                    dedupe: bool = True) -> StepProfile:
        """Profile of descending magnitudes, each carrying measure ``cell``."""
        v = np.asarray(sorted_vals, dtype=float)
        v = v[v > 0]
        if not dedupe:
            return cls(cell * np.arange(len(v) + 1), v, total_measure)
        if len(v) == 0:
            return cls(np.zeros(1), v, total_measure)
        last = np.r_[np.flatnonzero(v[1:] != v[:-1]), len(v) - 1]
        return cls(np.r_[0.0, cell * (last + 1)], v[last], total_measure)

    @property
    def support(self) -> float:
        return float(self.breakpoints[-1])

    def __len__(self) -> int:
        return len(self.values)

    def __call__(self, s) -> np.ndarray:
        """``f*(s)``."""
        s = np.asarray(s, dtype=float)
        j = np.searchsorted(self.breakpoints, s, side="right") - 1
        vals = np.r_[self.values, 0.0]
        return np.where(s < 0, np.nan, vals[np.clip(j, 0, len(self.values))])

    def integral(self, s=None, q: float = 1.0) -> np.ndarray | float:
        """``int_0^s f*(tau)^q dtau`` (whole line when ``s`` is None)."""
        widths = np.diff(self.breakpoints)
        prefix = np.r_[0.0, np.cumsum(self.values**q * widths)]
        if s is None:
            return float(prefix[-1])
        s = np.asarray(s, dtype=float)
        j = np.clip(np.searchsorted(self.breakpoints, s, side="right") - 1, 0, len(self.values))
        vq = np.r_[self.values**q, 0.0]
        return prefix[j] + vq[j] * (s - self.breakpoints[j])

    def maximal(self, s) -> np.ndarray:
        """``f**(s) = (1/s) int_0^s f*``."""
        s = np.asarray(s, dtype=float)
        if np.any(s <= 0):
            raise ValueError("maximal average needs s > 0")
        return self.integral(s) / s

    def scaled(self, k: float) -> StepProfile:
        if k == 0:
            return StepProfile(np.zeros(1), np.zeros(0), self.total_measure)
        return StepProfile(self.breakpoints, abs(k) * self.values, self.total_measure)

    def power(self, r: float) -> StepProfile:
        if r <= 0:
            raise ValueError("power needs r > 0")
        return StepProfile(self.breakpoints, self.values**r, self.total_measure)

    def same_as(self, other: StepProfile, rtol: float = 0.0) -> bool:
        return (len(self) == len(other)
                and np.allclose(self.breakpoints, other.breakpoints, rtol=rtol, atol=0)
                and np.allclose(self.values, other.values, rtol=rtol, atol=0))


def rearrangement(f: GridFunction, dedupe: bool = True) -> StepProfile:
    """``f*`` of a grid function; zero cells form the tail."""
    return StepProfile.from_sorted(sorted_magnitudes(f.flat), f.spec.cell_measure,
                                   f.spec.total_measure, dedupe=dedupe)


def maximal_average(prof: StepProfile, s: float) -> float:
    if s <= 0:
        raise ValueError("s must be positive")
    return float(prof.maximal(s))


def product_average(f: StepProfile, g: StepProfile, s) -> np.ndarray:
    """``(1/s) int_0^s f*(tau) g*(tau) dtau``, exact on the merged breakpoints."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("s must be positive")
    b = np.union1d(f.breakpoints, g.breakpoints)
    if len(b) < 2:
        return np.zeros_like(s)
    mids = 0.5 * (b[1:] + b[:-1])
    v = f(mids) * g(mids)
    prefix = np.r_[0.0, np.cumsum(v * np.diff(b))]
    j = np.clip(np.searchsorted(b, s, side="right") - 1, 0, len(v))
    vv = np.r_[v, 0.0]
    return (prefix[j] + vv[j] * (s - b[j])) / s


@dataclass(frozen=True)
class OneilReport:
    lhs: float
    rhs: float
    wraps: bool

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-9) + 1e-300


def _support_extent(f: GridFunction) -> np.ndarray:
    """Per-axis length (in cells) of the smallest cyclic interval holding the support."""
    m = f.spec.points_per_axis
    nz = np.abs(f.values) > 0
    ext = np.zeros(f.spec.dim, dtype=int)
    for k in range(f.spec.dim):
        occ = np.any(nz, axis=tuple(i for i in range(f.spec.dim) if i != k))
        if not occ.any():
            continue
        idx = np.flatnonzero(occ)
        gaps = np.diff(np.r_[idx, idx[0] + m])
        ext[k] = m - (gaps.max() - 1)
    return ext


def torus_convolution(f: GridFunction, g: GridFunction) -> GridFunction:
    """Circular convolution ``sum_j f_(i-j) g_j h^N`` by FFT.

    The result lives on the lattice of cell differences; its values, hence its
    rearrangement, do not depend on that half-cell shift.
    """
    f._check(g)
    spec = f.spec
    axes = tuple(range(spec.dim))
    fh = np.fft.rfftn(f.values, axes=axes)
    gh = np.fft.rfftn(g.values, axes=axes)
    conv = np.fft.irfftn(fh * gh, s=spec.shape, axes=axes) * spec.cell_measure
    return GridFunction(spec, conv, label="convolution")


def oneil_bound_check(f: GridFunction, g: GridFunction, s: float) -> OneilReport:
    """Compare ``(f*g)**(s)`` with ``int_s^inf f**(t) g**(t) dt``.

    Past the total measure both ``f**`` and ``g**`` decay like ``||.||_1 / t``,
    so the tail of the right side is added in closed form; the inequality is a
    statement about the functions extended by zero to the whole space.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    f._check(g)
    ext = _support_extent(f) + _support_extent(g)
    wraps = bool(np.any(ext > f.spec.points_per_axis))
    conv = torus_convolution(f, g)
    lhs = maximal_average(rearrangement(conv), s)

    fp, gp = rearrangement(f), rearrangement(g)
    top = max(fp.support, gp.support)
    f1, g1 = fp.integral(), gp.integral()
    rhs = 0.0
    if s < top:
        knots = np.union1d(fp.breakpoints, gp.breakpoints)
        knots = np.union1d(knots[(knots > s) & (knots < top)], [s, top])
        # on each knot interval f** g** = (a + b/t)(c + d/t): integrate exactly
        mids = 0.5 * (knots[:-1] + knots[1:])
        a, c = fp(mids), gp(mids)
        bf = fp.integral(mids) - a * mids
        dg = gp.integral(mids) - c * mids
        lo, hi = knots[:-1], knots[1:]
        rhs = float(np.sum(a * c * (hi - lo) + (a * dg + bf * c) * np.log(hi / lo)
                           + bf * dg * (1.0 / lo - 1.0 / hi)))
    rhs += f1 * g1 / max(s, top)
    return OneilReport(lhs=lhs, rhs=rhs, wraps=wraps)
