"""Distributed sweep coverage loop: partition while sweeping at rate sigma."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .partition import (CollisionError, PartitionConfig, PartitionHistory, _Recorder,
                        initial_state, step)
from .region import DensityField, RegionSpec


@dataclass(frozen=True)
class SweepConfig:
    sigma: float
    partition: PartitionConfig
    region: RegionSpec
    density: DensityField
    initial_x: Optional[tuple] = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma: sweep rate must be positive")
        self.partition.validate_for(self.region)


@dataclass
class SweepOutcome:
    T_p: float
    T_star: float
    T_actual: float
    delta_T: float
    finish_times: np.ndarray
    residual_times: np.ndarray
    residual_series: np.ndarray
    masses_at_Tp: np.ndarray
    swept_at_Tp: np.ndarray
    H_series: np.ndarray
    assumption_violated: np.ndarray
    total_mass: float
    history: PartitionHistory


def residual(m_i: float, sigma: float, swept_i: float) -> float:
    """Workload still unswept in a subregion (``m_i - sigma*t`` for an agent that never idled)."""
    if swept_i < 0:
        raise ValueError("swept workload cannot be negative")
    return m_i - swept_i


def optimal_time(total_mass: float, n: int, sigma: float) -> float:
    return total_mass / (n * sigma)


def time_error(outcome: SweepOutcome) -> float:
    return outcome.T_actual - outcome.T_star


def run_dsca(cfg: SweepConfig) -> SweepOutcome:
    """Run partition and sweeping together, then finish the sweep after ``T_p``.

    Each agent removes ``sigma * h`` of workload per step while its residual
    is positive.  An agent that would overshoot its current mass idles and
    is flagged; it resumes as soon as its subregion grows again.  Finish
    times after ``T_p`` are exact crossings of the linear residual.
    """
    p = cfg.partition
    region, density, sigma = cfg.region, cfg.density, cfg.sigma
    state = initial_state(p, region, density, cfg.initial_x)
    T_p = p.partition_time(region)
    rec = _Recorder(p)
    rec.add(state)

    n = p.n
    swept = np.zeros(n)
    idle = np.zeros(n, dtype=bool)
    zero_time = np.full(n, np.nan)
    res_t = [state.t]
    res_e = [state.m.copy()]
    while state.t < T_p:
        t_prev = state.t
        try:
            state = step(state, region, density, p)
        except CollisionError as exc:
            exc.history = rec.history(state.traces, T_p, exc)
            raise
        rec.add(state)
        h = state.t - t_prev
        want = swept + sigma * h
        clamp = want >= state.m
        if clamp.any():
            idle |= clamp
            zero_time = np.where(clamp, t_prev + np.maximum(state.m - swept, 0.0) / sigma,
                                 zero_time)
        swept = np.where(clamp, state.m, want)
        res_t.append(state.t)
        res_e.append(np.array([residual(mi, sigma, si) for mi, si in zip(state.m, swept)]))

    m_final = state.m.copy()
    e_final = m_final - swept
    finish = np.where(e_final > 0, T_p + e_final / sigma, zero_time)
    # agents that idled at T_p with nothing left finished at their last zero crossing
    finish = np.where(np.isnan(finish), T_p, finish)
    T_actual = float(np.max(finish))

    k = 1
    while True:
        t = T_p + k * p.dt
        if t >= T_actual:
            break
        res_t.append(t)
        res_e.append(np.maximum(e_final - sigma * (t - T_p), 0.0))
        k += 1
    if T_actual > T_p:
        res_t.append(T_actual)
        res_e.append(np.zeros(n))

    total = float(m_final.sum())
    T_star = optimal_time(total, n, sigma)
    history = rec.history(state.traces, T_p)
    return SweepOutcome(
        T_p=T_p,
        T_star=T_star,
        T_actual=T_actual,
        delta_T=T_actual - T_star,
        finish_times=finish,
        residual_times=np.array(res_t),
        residual_series=np.array(res_e),
        masses_at_Tp=m_final,
        swept_at_Tp=swept,
        H_series=history.H,
        assumption_violated=idle,
        total_mass=total,
        history=history,
    )


def make_config(sigma: float, partition: PartitionConfig, region: RegionSpec,
                density: DensityField, initial_x: Optional[Sequence[float]] = None) -> SweepConfig:
    ix = None if initial_x is None else tuple(float(v) for v in initial_x)
    return SweepConfig(sigma, partition, region, density, ix)
