"""Partition-bar dynamics with workload memory.

Bar ``i`` is the vertical segment ``{x_i(t)} x [vt, vt + eps]``.  Below
``y = vt`` the boundary between subregions ``i`` and ``i + 1`` is the frozen
trace of the bar's lower end.  The outer bars ``x_0`` and ``x_n`` are pinned
to the boundary curves at the bar top ``vt + eps``; interior bars follow
``dx_i/dt = kappa * (m_{i+1} - m_i)`` integrated with forward Euler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .analysis import energy
from .region import (DensityField, GeometryError, RegionSpec, Trace, curve_slope,
                     line_mass, row_masses, rows_for, strip_mass, strip_masses)

MASS_MODES = ("incremental", "full-quadrature")


class CollisionError(RuntimeError):
    """Two adjacent bars met or crossed."""

    def __init__(self, t: float, index: int, x: np.ndarray):
        self.t = t
        self.index = index
        self.x = np.array(x)
        super().__init__(f"bars {index - 1} and {index} collided at t = {t:.6g} "
                         f"(x_{index - 1} = {x[index - 1]:.6g}, x_{index} = {x[index]:.6g})")


@dataclass(frozen=True)
class PartitionConfig:
    n: int
    kappa: float
    epsilon: float
    v: float
    dt: float = 0.001
    mass_mode: str = "incremental"
    recompute_every: int = 100
    quad_resolution: float = 50.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n: need an integer >= 2")
        for name in ("kappa", "epsilon", "v", "dt", "quad_resolution"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}: must be positive")
        if self.mass_mode not in MASS_MODES:
            raise ValueError(f"mass_mode: expected one of {MASS_MODES}")
        if int(self.recompute_every) != self.recompute_every or self.recompute_every < 1:
            raise ValueError("recompute_every: need an integer >= 1")

    def partition_time(self, region: RegionSpec) -> float:
        return (region.length_l - self.epsilon) / self.v

    def validate_for(self, region: RegionSpec):
        if not self.epsilon < region.length_l:
            raise ValueError("epsilon: bar length must be shorter than the region length l")
        if self.partition_time(region) / self.dt < 100:
            raise ValueError("dt: need at least 100 Euler steps to traverse the region")


@dataclass
class PartitionState:
    t: float
    k: int
    x: np.ndarray
    traces: list
    m: np.ndarray
    mean_mass: float

    @property
    def n(self) -> int:
        return len(self.m)


@dataclass
class PartitionHistory:
    """Per-step record of a partition run (row ``k`` is the state after ``k`` steps)."""

    t: np.ndarray
    x: np.ndarray
    m: np.ndarray
    H: np.ndarray
    u: np.ndarray
    traces: list
    cfg: PartitionConfig
    T_p: float
    collision: Optional[CollisionError] = None

    @property
    def n(self) -> int:
        return self.m.shape[1]

    @property
    def steps(self) -> int:
        return len(self.t) - 1


def control_input(m: Sequence[float], i: int, kappa: float) -> float:
    """u_i = kappa * (m_{i+1} - m_i) with 1-based agent index ``i``."""
    n = len(m)
    if not 1 <= i <= n - 1:
        raise IndexError(f"control index {i} outside 1..{n - 1}")
    return kappa * (m[i] - m[i - 1])


def control_inputs(m: np.ndarray, kappa: float) -> np.ndarray:
    return kappa * np.diff(m)


def pinned_velocities(region: RegionSpec, t: float, v: float, epsilon: float):
    """Velocities of the outer bars, which ride the curves at height vt + eps."""
    y = v * t + epsilon
    if y > region.length_l * (1 + 1e-12):
        raise GeometryError(f"bar top {y:.6g} beyond region length {region.length_l:.6g}")
    y = min(y, region.length_l)
    return v * curve_slope(region.left, y), v * curve_slope(region.right, y)


def _x_resolution(cfg: PartitionConfig, width: float) -> int:
    return max(1, math.ceil(cfg.quad_resolution * width - 1e-9))


def strip_points(region: RegionSpec, cfg: PartitionConfig) -> int:
    """Fixed per-row point count for one subregion: the resolution applied to
    the mean subregion width of the widest row."""
    return _x_resolution(cfg, region.max_width() / cfg.n)


def mass_rates(state: PartitionState, region: RegionSpec, density: DensityField,
               cfg: PartitionConfig) -> np.ndarray:
    """dm_i/dt: the row entering at the bar top plus flux through the moving bars."""
    y_bot = cfg.v * state.t
    y_top = min(y_bot + cfg.epsilon, region.length_l)
    x = state.x
    row = row_masses(density, x, y_top, strip_points(region, cfg))
    xdot = np.empty(cfg.n + 1)
    xdot[0], xdot[-1] = pinned_velocities(region, state.t, cfg.v, cfg.epsilon)
    xdot[1:-1] = control_inputs(state.m, cfg.kappa)
    ny = rows_for(y_bot, y_top, cfg.quad_resolution)
    bars = [region.left] + [float(xi) for xi in x[1:-1]] + [region.right]
    flux = np.array([line_mass(density, b, y_bot, y_top, ny) for b in bars]) * xdot
    return cfg.v * row + flux[1:] - flux[:-1]


def _bar_boundary(trace: Trace, x_now: float, y_bot: float):
    def at(ys):
        ys = np.asarray(ys, dtype=float)
        below = trace(np.minimum(ys, y_bot))
        return np.where(ys <= y_bot, below, x_now)
    return at


def subregion_masses(state: PartitionState, region: RegionSpec, density: DensityField,
                     cfg: PartitionConfig) -> np.ndarray:
    """Full quadrature of every subregion up to the bar top."""
    y_bot = cfg.v * state.t
    y_top = min(y_bot + cfg.epsilon, region.length_l)
    bounds = [region.left]
    for i in range(1, cfg.n):
        bounds.append(_bar_boundary(state.traces[i], float(state.x[i]), y_bot))
    bounds.append(region.right)
    ny = rows_for(0.0, y_top, cfg.quad_resolution)
    return strip_masses(density, bounds, 0.0, y_top, ny, strip_points(region, cfg))


def region_mass_to(y_top: float, region: RegionSpec, density: DensityField,
                   cfg: PartitionConfig) -> float:
    """Mass of the whole region below ``y_top`` on the same grid the engine uses."""
    ny = rows_for(0.0, y_top, cfg.quad_resolution)
    nx = _x_resolution(cfg, region.max_width())
    return strip_mass(density, region.left, region.right, 0.0, y_top, ny, nx)


def default_initial_x(region: RegionSpec, cfg: PartitionConfig) -> np.ndarray:
    return np.linspace(float(region.left(cfg.epsilon)), float(region.right(cfg.epsilon)), cfg.n + 1)


def initial_state(cfg: PartitionConfig, region: RegionSpec, density: DensityField,
                  initial_x: Optional[Sequence[float]] = None) -> PartitionState:
    """State at t = 0.

    ``initial_x`` holds the ``n - 1`` interior abscissae (or all ``n + 1``
    with endpoints equal to the pinned values); equal spacing by default.
    """
    cfg.validate_for(region)
    x = default_initial_x(region, cfg)
    if initial_x is not None:
        given = np.asarray(initial_x, dtype=float)
        if given.shape == (cfg.n - 1,):
            x[1:-1] = given
        elif given.shape == (cfg.n + 1,):
            if not np.allclose(given[[0, -1]], x[[0, -1]], rtol=0, atol=1e-9):
                raise ValueError("initial_x: endpoints must equal g_a(eps) and g_b(eps)")
            x[1:-1] = given[1:-1]
        else:
            raise ValueError(f"initial_x: expected {cfg.n - 1} interior values")
    if np.any(np.diff(x) <= 0):
        raise ValueError("initial_x: positions must be strictly increasing inside the region")
    traces = []
    for xi in x:
        tr = Trace()
        tr.append(0.0, float(xi))
        traces.append(tr)
    state = PartitionState(0.0, 0, x, traces, np.zeros(cfg.n), 0.0)
    state.m = subregion_masses(state, region, density, cfg)
    state.mean_mass = float(state.m.sum() / cfg.n)
    return state


def _next_time(k: int, dt: float, T_p: float) -> float:
    t = (k + 1) * dt
    if t >= T_p - 1e-9 * dt:
        return T_p
    return t


def step(state: PartitionState, region: RegionSpec, density: DensityField,
         cfg: PartitionConfig) -> PartitionState:
    """One forward-Euler step.

    The last step before ``T_p`` is shortened so the run ends exactly at
    ``T_p``; incremental mode also recomputes masses by full quadrature there.
    """
    T_p = cfg.partition_time(region)
    if state.t >= T_p:
        raise ValueError("partition already complete")
    t_new = _next_time(state.k, cfg.dt, T_p)
    h = t_new - state.t
    rates = None
    if cfg.mass_mode == "incremental":
        rates = mass_rates(state, region, density, cfg)
    x = state.x.copy()
    x[1:-1] += control_inputs(state.m, cfg.kappa) * h
    y_top = cfg.v * t_new + cfg.epsilon
    x[0] = float(region.left(min(y_top, region.length_l)))
    x[-1] = float(region.right(min(y_top, region.length_l)))
    gaps = np.diff(x)
    if np.any(gaps <= 0):
        raise CollisionError(t_new, int(np.argmax(gaps <= 0)) + 1, x)
    for tr, xi in zip(state.traces, x):
        tr.append(cfg.v * t_new, float(xi))
    nxt = PartitionState(t_new, state.k + 1, x, state.traces, state.m, state.mean_mass)
    full = (rates is None or (state.k + 1) % cfg.recompute_every == 0 or t_new == T_p)
    if full:
        nxt.m = subregion_masses(nxt, region, density, cfg)
    else:
        nxt.m = state.m + rates * h
    nxt.mean_mass = float(nxt.m.sum() / cfg.n)
    return nxt


class _Recorder:
    def __init__(self, cfg):
        self.cfg = cfg
        self.t, self.x, self.m, self.H, self.u = [], [], [], [], []

    def add(self, s: PartitionState):
        self.t.append(s.t)
        self.x.append(s.x.copy())
        self.m.append(s.m.copy())
        self.H.append(energy(s.m))
        self.u.append(control_inputs(s.m, self.cfg.kappa))

    def history(self, traces, T_p, collision=None) -> PartitionHistory:
        return PartitionHistory(np.array(self.t), np.array(self.x), np.array(self.m),
                                np.array(self.H), np.array(self.u), traces, self.cfg, T_p,
                                collision)


def run_partition(cfg: PartitionConfig, region: RegionSpec, density: DensityField,
                  initial_x: Optional[Sequence[float]] = None) -> PartitionHistory:
    """Step from t = 0 until the bars reach the top at ``T_p = (l - eps)/v``.

    A collision propagates as :class:`CollisionError`.
    """
    state = initial_state(cfg, region, density, initial_x)
    T_p = cfg.partition_time(region)
    rec = _Recorder(cfg)
    rec.add(state)
    while state.t < T_p:
        state = step(state, region, density, cfg)
        rec.add(state)
    return rec.history(state.traces, T_p)
