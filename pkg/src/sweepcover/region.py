"""Region geometry, workload density and midpoint quadrature.

The coverage region is the set ``{(x, y): 0 <= y <= l, g_a(y) <= x <= g_b(y)}``.
All quadrature uses the midpoint rule on a uniform y-grid; each row carries
its own uniform x-grid between the row's left and right limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from . import exprlang

DEFAULT_SLOPE_STEP = 1e-5
DENSITY_MARGIN = 0.01
_CHUNK_ROWS = 512


class GeometryError(ValueError):
    pass


class AssumptionViolation(ValueError):
    """Density is not bounded away from zero on the region."""


@dataclass(frozen=True)
class BoundaryCurve:
    """A boundary x = g(y) on ``[0, length]``."""

    expr: exprlang.Expr
    length: float
    source: str = ""
    check_samples: int = 1001

    def __post_init__(self):
        if not self.length > 0:
            raise GeometryError("curve domain length must be positive")
        unknown = exprlang.variables(self.expr) - {"y"}
        if unknown:
            raise GeometryError(f"curve may only use 'y', got {sorted(unknown)}")
        ys = np.linspace(0.0, self.length, self.check_samples)
        try:
            exprlang.evaluate(self.expr, {"y": ys})
        except exprlang.EvalError as exc:
            raise GeometryError(f"curve {self.source!r} is not finite on [0, l]") from exc

    @classmethod
    def from_source(cls, source: str, length: float) -> "BoundaryCurve":
        return cls(exprlang.parse(source, {"y"}), float(length), source)

    def _check_domain(self, y):
        tol = 1e-12 * max(1.0, self.length)
        lo, hi = np.min(y), np.max(y)
        if lo < -tol or hi > self.length + tol:
            raise GeometryError(f"y outside curve domain [0, {self.length}]")

    def __call__(self, y):
        self._check_domain(y)
        val = exprlang.evaluate(self.expr, {"y": np.broadcast_to(y, np.shape(y))})
        if np.ndim(val) == 0 and np.ndim(y) != 0:
            val = np.full(np.shape(y), val)
        return val


def eval_curve(c: BoundaryCurve, y: float) -> float:
    return float(c(float(y)))


def curve_slope(c: BoundaryCurve, y: float, h: float = DEFAULT_SLOPE_STEP) -> float:
    """Numeric g'(y): central difference, second-order one-sided at the ends."""
    if h <= 0:
        raise ValueError("h must be positive")
    c._check_domain(y)
    y = min(max(float(y), 0.0), c.length)
    if y - h >= 0.0 and y + h <= c.length:
        return (c(y + h) - c(y - h)) / (2 * h)
    if y - h < 0.0:
        return (-3 * c(y) + 4 * c(y + h) - c(y + 2 * h)) / (2 * h)
    return (3 * c(y) - 4 * c(y - h) + c(y - 2 * h)) / (2 * h)


@dataclass(frozen=True)
class RegionSpec:
    left: BoundaryCurve
    right: BoundaryCurve
    length_l: float
    check_samples: int = 1001

    def __post_init__(self):
        if not self.length_l > 0:
            raise GeometryError("region length l must be positive")
        ys = np.linspace(0.0, self.length_l, self.check_samples)
        if np.any(self.left(ys) >= self.right(ys)):
            raise GeometryError("left boundary must stay strictly left of right boundary")

    @classmethod
    def from_sources(cls, g_a: str, g_b: str, length: float) -> "RegionSpec":
        length = float(length)
        return cls(BoundaryCurve.from_source(g_a, length),
                   BoundaryCurve.from_source(g_b, length), length)

    def max_width(self, samples: int = 1001) -> float:
        ys = np.linspace(0.0, self.length_l, samples)
        return float(np.max(self.right(ys) - self.left(ys)))


@dataclass(frozen=True)
class DensityField:
    expr: exprlang.Expr
    rho_lower: float
    rho_upper: float
    source: str = ""

    def __post_init__(self):
        unknown = exprlang.variables(self.expr) - {"x", "y"}
        if unknown:
            raise ValueError(f"density may only use 'x' and 'y', got {sorted(unknown)}")
        if not 0 < self.rho_lower <= self.rho_upper:
            raise AssumptionViolation(
                f"need 0 < rho_lower <= rho_upper, got ({self.rho_lower}, {self.rho_upper})")

    def __call__(self, x, y):
        val = exprlang.evaluate(self.expr, {"x": x, "y": y})
        if np.ndim(val) == 0 and np.shape(np.broadcast(x, y)) != ():
            val = np.full(np.broadcast(x, y).shape, val)
        return val


def _sample_region(region: RegionSpec, grid: int):
    ys = np.linspace(0.0, region.length_l, grid)
    xl, xr = region.left(ys), region.right(ys)
    frac = np.linspace(0.0, 1.0, grid)
    xs = xl[:, None] + frac[None, :] * (xr - xl)[:, None]
    return xs, np.broadcast_to(ys[:, None], xs.shape)


def estimate_density_bounds(rho_expr: exprlang.Expr, region: RegionSpec, grid: int = 201):
    """Sampled (min, max) of rho over the region, widened by a 1% margin."""
    if grid < 2:
        raise ValueError("grid must be at least 2")
    xs, ys = _sample_region(region, grid)
    vals = exprlang.evaluate(rho_expr, {"x": xs, "y": ys})
    vals = np.broadcast_to(vals, xs.shape)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if lo <= 0:
        raise AssumptionViolation(f"density is not positive on the region (min {lo:g})")
    return lo * (1 - DENSITY_MARGIN), hi * (1 + DENSITY_MARGIN)


def check_density_bounds(density: DensityField, region: RegionSpec, grid: int = 201):
    """Raise AssumptionViolation if sampled rho leaves [rho_lower, rho_upper]."""
    xs, ys = _sample_region(region, grid)
    vals = density(xs, ys)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if lo < density.rho_lower or hi > density.rho_upper:
        raise AssumptionViolation(
            f"sampled density range [{lo:g}, {hi:g}] not within declared bounds "
            f"[{density.rho_lower:g}, {density.rho_upper:g}]")


@dataclass
class Trace:
    """Append-only record of a bar's lower end, interpolated linearly in y."""

    ys: list = field(default_factory=list)
    xs: list = field(default_factory=list)

    def append(self, y: float, x: float):
        if self.ys and not y > self.ys[-1]:
            raise GeometryError("trace samples must have strictly increasing y")
        if not self.ys and y != 0.0:
            raise GeometryError("first trace sample must be at y = 0")
        self.ys.append(float(y))
        self.xs.append(float(x))

    def __len__(self):
        return len(self.ys)

    @property
    def top(self) -> float:
        return self.ys[-1]

    def __call__(self, y):
        if not self.ys:
            raise GeometryError("empty trace")
        y = np.asarray(y, dtype=float)
        if np.any(y < 0.0) or np.any(y > self.ys[-1]):
            raise GeometryError(f"trace queried outside [0, {self.ys[-1]}]")
        if len(self.ys) == 1:
            out = np.full(y.shape, self.xs[0])
        else:
            out = np.interp(y, self.ys, self.xs)
        return float(out) if out.ndim == 0 else out


Boundary = Union[float, BoundaryCurve, Trace, Callable]


def _boundary_at(b: Boundary, ys: np.ndarray) -> np.ndarray:
    if isinstance(b, (int, float)):
        return np.full(ys.shape, float(b))
    return np.asarray(b(ys), dtype=float) * np.ones(ys.shape)


def midpoints(a: float, b: float, k: int) -> np.ndarray:
    return a + (np.arange(k) + 0.5) * ((b - a) / k)


def strip_masses(density: DensityField, boundaries: Sequence[Boundary],
                 y0: float, y1: float, ny: int, nx: int) -> np.ndarray:
    """Midpoint masses of the strips between consecutive boundaries.

    Every strip gets ``ny`` rows on the shared y-grid and its own uniform
    ``nx``-point grid per row, so strips of identical shape over a constant
    density produce bit-identical masses.
    """
    k = len(boundaries) - 1
    if k < 1:
        raise ValueError("need at least two boundaries")
    if ny < 1 or nx < 1:
        raise ValueError("resolutions must be >= 1")
    if y1 < y0:
        raise GeometryError("need y0 <= y1")
    if y1 == y0:
        return np.zeros(k)
    hy = (y1 - y0) / ny
    ys = midpoints(y0, y1, ny)
    xb = np.stack([_boundary_at(b, ys) for b in boundaries])  # (k+1, ny)
    crossed = np.nonzero(np.diff(xb, axis=0) < 0)
    if crossed[0].size:
        i, r = crossed[0][0], crossed[1][0]
        raise GeometryError(f"boundaries {i} and {i + 1} cross at y = {ys[r]:.6g}")
    frac = (np.arange(nx) + 0.5) / nx
    row_sums = np.empty((k, ny))
    step = max(1, _CHUNK_ROWS * 512 // (k * nx))
    for s in range(0, ny, step):
        sl = slice(s, s + step)
        xl, xr = xb[:-1, sl], xb[1:, sl]
        w = xr - xl
        xs = xl[..., None] + frac * w[..., None]
        vals = density(xs, ys[sl, None])
        row_sums[:, sl] = vals.sum(axis=-1) * (w / nx)
    return row_sums.sum(axis=1) * hy


def strip_mass(density: DensityField, x_left: Boundary, x_right: Boundary,
               y0: float, y1: float, ny: int, nx: int) -> float:
    """Midpoint-rule integral of rho over ``y0 <= y <= y1, x_left(y) <= x <= x_right(y)``.

    ``ny`` rows on a uniform y-grid, ``nx`` points per row.
    """
    if y1 < y0:
        raise GeometryError("need y0 <= y1")
    try:
        return float(strip_masses(density, [x_left, x_right], y0, y1, ny, nx)[0])
    except GeometryError as exc:
        raise GeometryError(f"crossed boundaries: {exc}") from None


def rows_for(y0: float, y1: float, per_unit: float) -> int:
    """Row count giving ``per_unit`` rows per unit length (at least one)."""
    return max(1, math.ceil(per_unit * (y1 - y0) - 1e-9))


def total_workload(region: RegionSpec, density: DensityField, ny: int, nx: int) -> float:
    return strip_mass(density, region.left, region.right, 0.0, region.length_l, ny, nx)


def row_masses(density: DensityField, xs_bounds: np.ndarray, y: float, nx: int) -> np.ndarray:
    """Integrals of rho(., y) between consecutive bar abscissae, ``nx`` midpoints each."""
    xs_bounds = np.asarray(xs_bounds, dtype=float)
    if np.any(np.diff(xs_bounds) < 0):
        raise GeometryError(f"bars crossed at y = {y:.6g}")
    xl, w = xs_bounds[:-1], np.diff(xs_bounds)
    frac = (np.arange(nx) + 0.5) / nx
    vals = density(xl[:, None] + frac * w[:, None], np.float64(y))
    return vals.sum(axis=-1) * (w / nx)


def line_mass(density: DensityField, x: Boundary, y0: float, y1: float, ny: int) -> float:
    """Midpoint integral of rho(x(y), y) dy over [y0, y1] along a vertical bar or curve."""
    if y1 <= y0:
        return 0.0
    ys = midpoints(y0, y1, ny)
    xs = _boundary_at(x, ys)
    return float(density(xs, ys).sum() * ((y1 - y0) / ny))
