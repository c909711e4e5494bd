"""Theoretical quantities and bounds evaluated against configs and trajectories.

Covers the imbalance energy H, the path-graph spectral constants, the decay
rate xi and input gain zeta of the energy inequality, the envelope on
sqrt(H), the sweep-time error bound, the rectangle special case, the
collision-avoidance spacing threshold and the trajectory checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Union

import numpy as np

from .region import GeometryError, RegionSpec, curve_slope

if TYPE_CHECKING:
    from .partition import PartitionConfig, PartitionHistory
    from .sweep import SweepConfig

ZETA_SAMPLES_PER_INTERVAL = 101


def energy(m) -> float:
    """Sum of squared deviations of the masses from their mean."""
    m = np.asarray(m, dtype=float)
    return float(np.sum((m - m.mean()) ** 2))


@dataclass(frozen=True)
class SpectralConstants:
    lambda_min: float
    lambda_max: float
    n: int


def difference_form(n: int) -> np.ndarray:
    """Matrix of the quadratic form sum_{i<n} (z_{i+1} - z_i)^2 (path Laplacian)."""
    D = np.diff(np.eye(n), axis=0)
    return D.T @ D


def spectral_constants(n: int) -> SpectralConstants:
    if n < 2:
        raise ValueError("need n >= 2")
    eig = np.linalg.eigvalsh(difference_form(n))
    # eigvalsh sorts ascending; the path graph is connected so only eig[0] is zero
    return SpectralConstants(float(eig[1]), float(eig[-1]), n)


def xi_value(kappa: float, rho_lower: float, epsilon: float, lambda_min: float, n: int) -> float:
    return kappa * rho_lower * epsilon * lambda_min / n


def zeta_value(t: float, region: RegionSpec, cfg: "PartitionConfig", rho_upper: float,
               n: Optional[int] = None) -> float:
    n = cfg.n if n is None else n
    y = cfg.v * t + cfg.epsilon
    if y > region.length_l * (1 + 1e-12):
        raise GeometryError(f"zeta needs v*t + eps <= l, got {y:.6g}")
    y = min(y, region.length_l)
    slope = max(abs(curve_slope(region.left, y)), abs(curve_slope(region.right, y)))
    width = float(region.right(y) - region.left(y))
    return rho_upper * (2 * cfg.v * cfg.epsilon * slope + width) * math.sqrt((n - 1) / n)


def zeta_series(ts, region: RegionSpec, cfg: "PartitionConfig", rho_upper: float) -> np.ndarray:
    return np.array([zeta_value(t, region, cfg, rho_upper) for t in ts])


def _as_samples(f, ts: np.ndarray) -> np.ndarray:
    if callable(f):
        return np.array([f(t) for t in ts], dtype=float)
    arr = np.asarray(f, dtype=float)
    return np.full(ts.shape, float(arr)) if arr.ndim == 0 else arr


def iss_envelope(H0: float, ts, xi: Union[float, Callable, np.ndarray],
                 zeta: Union[float, Callable, np.ndarray]) -> np.ndarray:
    """Right-hand side of the sqrt(H) comparison bound on the grid ``ts``.

    E(t) = sqrt(H0) exp(-X(t)/2) + 1/2 int_0^t exp((X(tau) - X(t))/2) zeta(tau) dtau,
    X(t) = int_0^t xi.  Both integrals use the trapezoid rule on ``ts``; the
    recursion below is that rule written so the exponentials never overflow.
    """
    if H0 < 0:
        raise ValueError("H0 must be nonnegative")
    ts = np.asarray(ts, dtype=float)
    xs = _as_samples(xi, ts)
    zs = _as_samples(zeta, ts)
    env = np.empty(ts.shape)
    env[0] = math.sqrt(H0)
    for k in range(1, len(ts)):
        h = ts[k] - ts[k - 1]
        decay = math.exp(-0.25 * h * (xs[k] + xs[k - 1]))
        env[k] = env[k - 1] * decay + 0.25 * h * (zs[k - 1] * decay + zs[k])
    return env


def _interval_max_zeta(cfg: "SweepConfig", a: float, b: float, samples: int) -> float:
    ts = np.linspace(a, b, samples)
    return float(np.max(zeta_series(ts, cfg.region, cfg.partition, cfg.density.rho_upper)))


def delta_t_bound(cfg: "SweepConfig", spectral: SpectralConstants, H0: float, q: int,
                  samples: int = ZETA_SAMPLES_PER_INTERVAL) -> float:
    """Upper bound on T - T* from the q-interval discretisation of the envelope."""
    if q < 1:
        raise ValueError("q must be >= 1")
    p = cfg.partition
    n = p.n
    T_p = p.partition_time(cfg.region)
    a = p.kappa * cfg.density.rho_lower * p.epsilon * spectral.lambda_min / n
    acc = 0.0
    for i in range(1, q + 1):
        zmax = _interval_max_zeta(cfg, (i - 1) * T_p / q, i * T_p / q, samples)
        acc += math.exp(-a * (q - i) * T_p / (2 * q)) * zmax
    inner = math.sqrt(H0) * math.exp(-a * T_p / 2) + T_p / (2 * q) * acc
    return math.sqrt((n - 1) / n) * inner / cfg.sigma


def rect_delta_t_bound(l_a: float, l_b: float, cfg: "SweepConfig", spectral: SpectralConstants,
                       H0: float, q: int) -> float:
    """Closed-form bound for a rectangle of width ``l_a`` and length ``l_b``."""
    if q < 1:
        raise ValueError("q must be >= 1")
    p = cfg.partition
    n = p.n
    T_p = (l_b - p.epsilon) / p.v
    a = p.kappa * cfg.density.rho_lower * p.epsilon * spectral.lambda_min / n
    head = math.sqrt((n - 1) * H0 / n) * math.exp(-a * T_p / 2) / cfg.sigma
    tail = sum(math.exp(-a * (q - i) * T_p / (2 * q)) for i in range(1, q + 1))
    return head + cfg.density.rho_upper * (n - 1) * l_a * T_p / (2 * q * n * cfg.sigma) * tail


def collision_threshold(cfg: "SweepConfig", spectral: SpectralConstants, H0: float,
                        samples: int = 1001) -> float:
    """Initial bar spacing above which the bars provably never meet."""
    p = cfg.partition
    T_p = p.partition_time(cfg.region)
    zmax = _interval_max_zeta(cfg, 0.0, T_p, samples)
    return p.kappa * T_p * math.sqrt(spectral.lambda_max) * (2 * math.sqrt(H0) + T_p * zmax)


def rectangle_width(region: RegionSpec) -> Optional[float]:
    """Width if both boundaries are constant in y, else None."""
    from .exprlang import variables
    if variables(region.left.expr) or variables(region.right.expr):
        return None
    return float(region.right(0.0) - region.left(0.0))


@dataclass
class BoundReport:
    lambda_min: float
    lambda_max: float
    xi: float
    zeta_times: np.ndarray
    zeta_samples: np.ndarray
    delta_t_bound: float
    rect_bound: Optional[float]
    collision_threshold: float
    iss_times: np.ndarray
    iss_envelope: np.ndarray
    q: int
    H0: float
    T_p: float


def partition_times(cfg: "PartitionConfig", T_p: float) -> np.ndarray:
    k = math.ceil(T_p / cfg.dt - 1e-9)
    ts = np.arange(k + 1) * cfg.dt
    ts[-1] = T_p
    return ts


def build_report(cfg: "SweepConfig", q: int, H0: float, ts=None) -> BoundReport:
    """Evaluate every bound for ``cfg``; the envelope is sampled on ``ts``
    (the Euler time grid by default)."""
    p = cfg.partition
    T_p = p.partition_time(cfg.region)
    ts = partition_times(p, T_p) if ts is None else np.asarray(ts, dtype=float)
    spec = spectral_constants(p.n)
    xi = xi_value(p.kappa, cfg.density.rho_lower, p.epsilon, spec.lambda_min, p.n)
    zs = zeta_series(ts, cfg.region, p, cfg.density.rho_upper)
    width = rectangle_width(cfg.region)
    rect = None
    if width is not None:
        rect = rect_delta_t_bound(width, cfg.region.length_l, cfg, spec, H0, q)
    return BoundReport(
        lambda_min=spec.lambda_min,
        lambda_max=spec.lambda_max,
        xi=xi,
        zeta_times=ts,
        zeta_samples=zs,
        delta_t_bound=delta_t_bound(cfg, spec, H0, q),
        rect_bound=rect,
        collision_threshold=collision_threshold(cfg, spec, H0),
        iss_times=ts,
        iss_envelope=iss_envelope(H0, ts, xi, zs),
        q=q,
        H0=H0,
        T_p=T_p,
    )


@dataclass
class CheckResult:
    passed: bool
    first_violation_time: Optional[float] = None
    worst: float = 0.0


@dataclass
class Verdict:
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


def _check(ok: np.ndarray, ts: np.ndarray, worst: float) -> CheckResult:
    if ok.all():
        return CheckResult(True, None, worst)
    return CheckResult(False, float(ts[np.argmin(ok)]), worst)


def verify_trajectory(history: "PartitionHistory", report: BoundReport,
                      envelope_tol: Optional[float] = None) -> Verdict:
    """Check a recorded partition run against the proven inequalities.

    ``report.iss_envelope`` must be sampled on ``history.t``.  The envelope
    tolerance defaults to 5% in incremental mode and 1% with full quadrature.
    """
    ts = np.asarray(history.t, dtype=float)
    if len(report.iss_envelope) != len(ts) or not np.allclose(report.iss_times, ts):
        raise ValueError("report envelope is not sampled on the history time grid")
    if envelope_tol is None:
        envelope_tol = 0.01 if history.cfg.mass_mode == "full-quadrature" else 0.05
    m = np.asarray(history.m, dtype=float)
    n = m.shape[1]
    mbar = m.mean(axis=1)
    dev = m - mbar[:, None]
    H = np.sum(dev ** 2, axis=1)
    root_H = np.sqrt(H)
    d2 = np.sum(np.diff(m, axis=1) ** 2, axis=1)
    # floating-point slack for exact algebraic identities
    slack = 64 * np.finfo(float).eps * np.max(np.abs(m), axis=1) ** 2

    v = Verdict()
    env = report.iss_envelope * (1 + envelope_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(env > 0, root_H / env, np.where(root_H > 0, np.inf, 0.0))
    v.checks["iss_envelope"] = _check(root_H <= env + np.sqrt(slack), ts, float(np.max(ratio)))
    lo = report.lambda_min / n * H
    hi = report.lambda_max * H
    v.checks["spectral_sandwich"] = _check((lo <= d2 + slack) & (d2 <= hi + slack), ts,
                                         float(np.max(np.maximum(lo - d2, d2 - hi))))
    cap = math.sqrt(n * (n - 1)) * mbar
    v.checks["mean_bound"] = _check(root_H <= cap + np.sqrt(slack), ts,
                                           float(np.max(root_H - cap)))
    maxdev = np.max(np.abs(dev), axis=1)
    cap3 = math.sqrt((n - 1) / n) * root_H
    v.checks["max_deviation"] = _check(maxdev <= cap3 + np.sqrt(slack), ts,
                                              float(np.max(maxdev - cap3)))
    gaps = np.min(np.diff(np.asarray(history.x, dtype=float), axis=1), axis=1)
    v.checks["min_spacing"] = _check(gaps > 0, ts, float(np.min(gaps)))
    return v
