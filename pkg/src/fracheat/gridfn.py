"""Uniform periodic grids and the functions sampled on them.

The box ``[-L, L)^N`` is treated as a torus standing in for ``R^N``.  Values
live at cell centres ``x_j = -L + (j + 1/2) h`` with ``h = 2L / M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal

import numpy as np
from scipy import integrate

ProfileKind = Literal[
    "critical", "supercritical", "power", "indicator", "constant", "custom-radial"
]

#: relative tolerance demanded from the singular-cell quadrature
CELL_QUAD_RTOL = 1e-6


def _is_power_of_two(m: int) -> bool:
    return m > 0 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Cell-centred grid on the torus ``[-L, L)^N`` with ``M`` points per axis."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        m = self.points_per_axis
        if int(m) != m or not _is_power_of_two(int(m)) or m < 16:
            raise ValueError(
                f"points_per_axis must be a power of two >= 16, got {self.points_per_axis}"
            )

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def cell_measure(self) -> float:
        return self.h**self.dim

    @property
    def total_measure(self) -> float:
        return (2.0 * self.half_width) ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def max_distance(self) -> float:
        """Largest torus distance between two points, ``L * sqrt(N)``."""
        return self.half_width * math.sqrt(self.dim)

    def axis(self) -> np.ndarray:
        m = self.points_per_axis
        return -self.half_width + (np.arange(m) + 0.5) * self.h

    def coords(self) -> tuple[np.ndarray, ...]:
        ax = self.axis()
        return tuple(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    def radius(self, center: np.ndarray | tuple[float, ...] | None = None) -> np.ndarray:
        """Torus distance from ``center`` (default origin) to every cell centre."""
        c = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        L = self.half_width
        r2 = np.zeros(self.shape)
        for k, x in enumerate(self.coords()):
            d = np.mod(x - c[k] + L, 2 * L) - L
            r2 += d * d
        return np.sqrt(r2)


def make_grid(dim: int, half_width: float, points_per_axis: int) -> GridSpec:
    return GridSpec(int(dim), float(half_width), int(points_per_axis))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples on a :class:`GridSpec`.

    ``values`` has shape ``spec.shape`` and is stored read-only.  Arithmetic is
    only defined between functions on identical grids.
    """

    spec: GridSpec
    values: np.ndarray
    label: str | None = None
    diverged: bool = False
    #: estimated |quadrature(profile) - sum(values) h^N|, set by sample_profile
    error_bound: float | None = None

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != self.spec.shape:
            if v.size != self.spec.size:
                raise ValueError(f"values of size {v.size} do not fit grid {self.spec.shape}")
            v = v.reshape(self.spec.shape)
        if not self.diverged and not np.all(np.isfinite(v)):
            raise ValueError("GridFunction values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def integral(self) -> float:
        return float(self.values.sum() * self.spec.cell_measure)

    def mean(self) -> float:
        return float(self.values.mean())

    def with_values(self, values: np.ndarray, label: str | None = None) -> GridFunction:
        return GridFunction(self.spec, values, label=label if label is not None else self.label)

    def _check(self, other: GridFunction) -> None:
        if other.spec != self.spec:
            raise ValueError("GridFunctions live on different grids")

    def _binary(self, other, op) -> GridFunction:
        if isinstance(other, GridFunction):
            self._check(other)
            return GridFunction(self.spec, op(self.values, other.values))
        return GridFunction(self.spec, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return GridFunction(self.spec, -self.values, label=self.label)

    def __abs__(self):
        return GridFunction(self.spec, np.abs(self.values), label=self.label)

    def __pow__(self, r: float):
        return GridFunction(self.spec, np.abs(self.values) ** r)


def phi(s):
    """``log(e + s)``."""
    return np.log(np.e + np.asarray(s, dtype=float))


@dataclass(frozen=True)
class SingularProfileSpec:
    """A radial profile ``scale * g(|x|)`` optionally truncated to ``|x| <= radius``.

    ``critical`` is ``|x|^-N Phi(1/|x|)^(-N/theta)`` (needs ``p = N/(N-theta)``),
    ``supercritical`` is ``|x|^(-theta p/(p-1))`` (needs ``p > N/(N-theta)``),
    ``power`` is ``|x|^exponent``, ``indicator`` is the open ball of ``radius``.
    """

    kind: ProfileKind
    theta: float = 1.0
    p: float = 2.0
    scale: float = 1.0
    exponent: float = 0.0
    radius: float = math.inf
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("critical", "supercritical", "power", "indicator",
                             "constant", "custom-radial"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not (0 < self.theta <= 2):
            raise ValueError(f"theta must lie in (0, 2], got {self.theta}")
        if self.scale < 0:
            raise ValueError("scale must be non-negative")
        if self.kind == "custom-radial" and self.func is None:
            raise ValueError("custom-radial profile needs func")
        if self.kind == "indicator" and not math.isfinite(self.radius):
            raise ValueError("indicator profile needs a finite radius")

    def validate_for(self, dim: int) -> None:
        if self.kind not in ("critical", "supercritical"):
            return
        if dim <= self.theta:
            raise ValueError(f"{self.kind} profile needs N > theta (N={dim}, theta={self.theta})")
        p_star = dim / (dim - self.theta)
        if self.kind == "critical" and abs(self.p - p_star) > 1e-10:
            raise ValueError(f"critical profile needs p = N/(N-theta) = {p_star}, got {self.p}")
        if self.kind == "supercritical" and not self.p > p_star:
            raise ValueError(f"supercritical profile needs p > {p_star}, got {self.p}")

    @property
    def is_singular(self) -> bool:
        if self.kind in ("critical", "supercritical", "custom-radial"):
            return True
        return self.kind == "power" and self.exponent < 0

    def radial(self, r: np.ndarray, dim: int) -> np.ndarray:
        """Unscaled, untruncated profile ``g(r)``."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "critical":
                g = r ** (-dim) * phi(1.0 / r) ** (-dim / self.theta)
            elif self.kind == "supercritical":
                g = r ** (-self.theta * self.p / (self.p - 1.0))
            elif self.kind == "power":
                g = r**self.exponent
            elif self.kind == "indicator":
                g = np.ones_like(r)
            elif self.kind == "constant":
                g = np.ones_like(r)
            else:
                g = np.asarray(self.func(r), dtype=float)
        return g

    def __call__(self, r: np.ndarray, dim: int) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        g = self.scale * self.radial(r, dim)
        if self.kind == "indicator":
            return np.where(r < self.radius, g, 0.0)
        if math.isfinite(self.radius):
            g = np.where(r <= self.radius, g, 0.0)
        return g


def critical_profile(theta: float, dim: int, scale: float = 1.0,
                     radius: float = math.inf) -> SingularProfileSpec:
    return SingularProfileSpec("critical", theta=theta, p=dim / (dim - theta),
                               scale=scale, radius=radius)


def supercritical_profile(theta: float, p: float, scale: float = 1.0,
                          radius: float = math.inf) -> SingularProfileSpec:
    return SingularProfileSpec("supercritical", theta=theta, p=p, scale=scale, radius=radius)


def _quad(func, a, b, **kw) -> tuple[float, float]:
    val, err, *_ = integrate.quad(func, a, b, full_output=1, limit=200, epsabs=0.0, **kw)
    return val, err


def _radial_moment(profile: SingularProfileSpec, rho: float, dim: int) -> tuple[float, float]:
    """``int_0^min(rho, radius) scale g(r) r^(N-1) dr`` and an error estimate."""
    top = min(rho, profile.radius)
    if profile.kind in ("power", "supercritical"):
        a = profile.exponent if profile.kind == "power" else (
            -profile.theta * profile.p / (profile.p - 1.0))
        if a + dim <= 0:
            return math.inf, math.inf
        return profile.scale * top ** (a + dim) / (a + dim), 0.0
    if profile.kind == "critical":
        # with w = log(e + 1/r) the integrand becomes w^-k e^w / (e^w - e)
        k = dim / profile.theta
        w0 = math.log(math.e + 1.0 / top)
        main = w0 ** (1.0 - k) / (k - 1.0)
        corr, err = _quad(lambda w: 0.0 if w > 700 else w**-k / math.expm1(w - 1.0),
                          w0, math.inf, epsrel=1e-12)
        return profile.scale * (main + corr), profile.scale * err
    if profile.kind in ("indicator", "constant"):
        return profile.scale * top**dim / dim, 0.0

    # generic radial profile: u = log(rho / r)
    def integrand(u):
        r = top * math.exp(-u)
        if r == 0.0:
            return 0.0
        with np.errstate(all="ignore"):
            return float(profile.radial(np.array(r), dim)) * r**dim

    val, err = _quad(integrand, 0.0, math.inf, epsrel=1e-10)
    return profile.scale * val, profile.scale * err


def singular_cell_average(profile: SingularProfileSpec, spec: GridSpec) -> float:
    """Mean of the profile over the cube ``[0, h]^N`` (one of the cells touching 0).

    Polar coordinates: the radial moment up to the cube boundary is integrated
    over the directions of the positive orthant.
    """
    N, h = spec.dim, spec.h
    errs: list[float] = []

    def moment(rho):
        v, e = _radial_moment(profile, rho, N)
        errs.append(e)
        return v

    if N == 1:
        total, total_err = moment(h), 0.0
    elif N == 2:
        total, total_err = _quad(lambda ang: moment(h / math.cos(ang)), 0.0, math.pi / 4,
                                 epsrel=1e-10)
        total, total_err = 2 * total, 2 * total_err
    else:
        # six congruent pyramids; in the one where z is largest and y <= x the
        # boundary is z = h, i.e. rho = h / cos(theta)
        def inner(th, ph):
            return moment(h / math.cos(th)) * math.sin(th)

        total, total_err, *_ = integrate.nquad(
            inner,
            [lambda ph: (0.0, math.atan(1.0 / math.cos(ph))), (0.0, math.pi / 4)],
            opts={"epsabs": 0.0, "epsrel": 1e-9, "limit": 200},
            full_output=True,
        )
        total, total_err = 6 * total, 6 * total_err
    total_err += max(errs, default=0.0) * (2 * math.pi)
    if not math.isfinite(total) or total_err > CELL_QUAD_RTOL * abs(total) + 1e-300:
        raise ValueError(
            f"cell-average quadrature did not converge (value={total}, err={total_err})"
        )
    return total / h**N


def _singular_mask(spec: GridSpec) -> np.ndarray:
    """Cells whose closure contains the origin."""
    m = spec.points_per_axis
    mask1 = np.zeros(m, dtype=bool)
    mask1[m // 2 - 1 : m // 2 + 1] = True
    mask = mask1
    for _ in range(spec.dim - 1):
        mask = np.multiply.outer(mask, mask1)
    return mask


def _sample_values(profile: SingularProfileSpec, spec: GridSpec, sub: int) -> np.ndarray:
    """Centre samples, each cell averaged over ``sub^N`` sub-cell centres."""
    if sub == 1:
        return profile(spec.radius(), spec.dim)
    fine = GridSpec(spec.dim, spec.half_width, spec.points_per_axis * sub)
    vals = profile(fine.radius(), spec.dim)
    shape = []
    for _ in range(spec.dim):
        shape += [spec.points_per_axis, sub]
    vals = vals.reshape(shape)
    return vals.mean(axis=tuple(range(1, 2 * spec.dim, 2)))


def sample_profile(spec: GridSpec, profile: SingularProfileSpec) -> GridFunction:
    """Sample a radial profile; cells touching a singular origin get exact averages.

    The returned function carries ``error_bound``, a Richardson-style estimate
    of the error in ``sum(values) h^N`` relative to the integral of the profile.
    """
    profile.validate_for(spec.dim)
    with np.errstate(divide="ignore", invalid="ignore"):
        coarse = _sample_values(profile, spec, 1)
        fine = _sample_values(profile, spec, 2)
    if profile.is_singular:
        mask = _singular_mask(spec)
        avg = singular_cell_average(profile, spec)
        coarse = np.where(mask, avg, coarse)
        fine = np.where(mask, avg, fine)
    if not np.all(np.isfinite(coarse)):
        raise ValueError("profile produced non-finite samples away from the origin")
    w = spec.cell_measure
    err = 2.0 * abs(float(fine.sum() - coarse.sum())) * w
    label = f"{profile.kind}(theta={profile.theta}, p={profile.p}, scale={profile.scale})"
    return GridFunction(spec, coarse, label=label, error_bound=err)


def constant(spec: GridSpec, c: float = 1.0) -> GridFunction:
    return GridFunction(spec, np.full(spec.shape, float(c)), label=f"constant({c})")


def delta_like(spec: GridSpec, mass: float = 1.0) -> GridFunction:
    """Unit mass spread evenly over the ``2^N`` cells touching the origin."""
    mask = _singular_mask(spec)
    vals = np.where(mask, mass / (mask.sum() * spec.cell_measure), 0.0)
    return GridFunction(spec, vals, label="delta")


def ball_mask(spec: GridSpec, center, radius: float) -> np.ndarray:
    return spec.radius(center) < radius


def restrict_to_ball(f: GridFunction, center, radius: float) -> GridFunction:
    """``f * chi_B(center, radius)`` with membership decided by cell centre."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    if radius > f.spec.max_distance:
        return f
    mask = ball_mask(f.spec, center, radius)
    return GridFunction(f.spec, np.where(mask, f.values, 0.0), label=f.label)


class BallStencil:
    """Index offsets of the cells whose centres lie within ``radius`` of a cell centre.

    Used to gather ``f * chi_B(z, radius)`` for every centre ``z`` of a lattice
    of cell centres at once.
    """

    def __init__(self, spec: GridSpec, radius: float):
        self.spec = spec
        self.radius = float(radius)
        h, m = spec.h, spec.points_per_axis
        k = int(math.ceil(self.radius / h))
        rng = np.arange(-k, k + 1)
        grids = np.meshgrid(*([rng] * spec.dim), indexing="ij")
        d2 = sum(g.astype(float) ** 2 for g in grids) * h * h
        keep = d2 < self.radius**2
        self.offsets = np.stack([g[keep] for g in grids], axis=1)
        if np.any(2 * k + 1 > m):
            # ball wraps the torus: keep each cell once
            self.offsets = np.unique(np.mod(self.offsets, m), axis=0)

    @cached_property
    def size(self) -> int:
        return len(self.offsets)

    def centers(self, stride: int) -> np.ndarray:
        """Multi-indices of the centre lattice (every ``stride``-th cell per axis)."""
        m = self.spec.points_per_axis
        idx = np.arange(0, m, max(1, int(stride)))
        grids = np.meshgrid(*([idx] * self.spec.dim), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def gather(self, values: np.ndarray, centers: np.ndarray) -> np.ndarray:
        """Array of shape ``(len(centers), size)`` of ball values around each centre."""
        m = self.spec.points_per_axis
        flat = values.reshape(-1)
        idx = np.zeros((len(centers), self.size), dtype=np.int64)
        for k in range(self.spec.dim):
            idx = idx * m + np.mod(centers[:, k : k + 1] + self.offsets[None, :, k], m)
        return flat[idx]
