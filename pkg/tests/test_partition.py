import dataclasses
import math

import numpy as np
import pytest

from sweepcover.analysis import energy
from sweepcover.partition import (CollisionError, PartitionConfig, PartitionState,
                                  control_input, control_inputs, initial_state, mass_rates,
                                  pinned_velocities, region_mass_to, row_masses, run_partition,
                                  step, strip_points, subregion_masses)
from sweepcover.region import RegionSpec, Trace, line_mass, rows_for

from conftest import rectangle_sweep, demo_sweep

DEMO = demo_sweep()


def test_control_input_examples():
    assert control_input([2, 2, 2], 1, 1.0) == 0
    assert control_input([1, 3], 1, 2.0) == 4
    assert control_input([3, 1], 1, 1.0) == -2
    with pytest.raises(IndexError):
        control_input([1, 2, 3], 3, 1.0)
    with pytest.raises(IndexError):
        control_input([1, 2, 3], 0, 1.0)
    assert np.array_equal(control_inputs(np.array([1.0, 4.0, 2.0]), 0.5), [1.5, -1.0])


def test_pinned_velocities():
    rect = rectangle_sweep().region
    assert pinned_velocities(rect, 0.3, 8.0, 0.01) == (0.0, 0.0)
    t = (4.0 - 0.01) / 8.0
    a, b = pinned_velocities(DEMO.region, t, 8.0, 0.01)
    assert a == pytest.approx(8 * 0.2 * math.pi / 3, abs=1e-4)
    assert b == pytest.approx(1.6755, abs=1e-4)
    slanted = RegionSpec.from_sources("-1", "y", 10.0)
    assert pinned_velocities(slanted, 1.0, 2.0, 0.5)[1] == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(ValueError):
        pinned_velocities(DEMO.region, 2.0, 8.0, 0.01)


def test_config_validation():
    with pytest.raises(ValueError, match="n"):
        PartitionConfig(1, 1.0, 0.01, 8.0)
    with pytest.raises(ValueError, match="kappa"):
        PartitionConfig(3, 0.0, 0.01, 8.0)
    with pytest.raises(ValueError, match="mass_mode"):
        PartitionConfig(3, 1.0, 0.01, 8.0, mass_mode="fast")
    region = DEMO.region
    with pytest.raises(ValueError, match="epsilon"):
        PartitionConfig(3, 1.0, 10.0, 8.0).validate_for(region)
    with pytest.raises(ValueError, match="dt"):
        PartitionConfig(3, 1.0, 0.01, 8.0, dt=0.1).validate_for(region)


def _rect_state(x, m, cfg):
    traces = []
    for xi in x:
        tr = Trace()
        tr.append(0.0, xi)
        traces.append(tr)
    return PartitionState(0.0, 0, np.array(x, dtype=float), traces, np.array(m, dtype=float),
                          float(np.mean(m)))


def test_rates_uniform_static():
    sc = rectangle_sweep(n=4, width=4.0, rho=1.5)
    st = initial_state(sc.partition, sc.region, sc.density)
    rates = mass_rates(st, sc.region, sc.density, sc.partition)
    assert np.array_equal(rates, np.full(4, 8.0 * 1.5 * 1.0))


def test_rates_two_agent_symmetric():
    sc = rectangle_sweep(n=2, width=3.0, rho=2.0)
    st = initial_state(sc.partition, sc.region, sc.density)
    r = mass_rates(st, sc.region, sc.density, sc.partition)
    assert r[0] == r[1]


def test_rates_telescope():
    p = DEMO.partition
    st = initial_state(p, DEMO.region, DEMO.density, [1.8, 3.1, 3.9, 5.2])
    st.m = st.m + np.array([0.0, 0.01, -0.02, 0.005, 0.0])
    rates = mass_rates(st, DEMO.region, DEMO.density, p)
    y_top = p.epsilon
    rows = row_masses(DEMO.density, st.x, y_top, strip_points(DEMO.region, p))
    ny = rows_for(0.0, y_top, p.quad_resolution)
    a, b = pinned_velocities(DEMO.region, 0.0, p.v, p.epsilon)
    edge = (b * line_mass(DEMO.density, DEMO.region.right, 0.0, y_top, ny)
            - a * line_mass(DEMO.density, DEMO.region.left, 0.0, y_top, ny))
    # interior bar fluxes cancel in the sum
    assert abs(rates.sum() - (p.v * rows.sum() + edge)) <= 1e-9 * abs(rates.sum())
    # and the summed row pieces are a quadrature of the whole row
    whole = row_masses(DEMO.density, st.x[[0, -1]], y_top, 4000)[0]
    assert abs(rates.sum() - (p.v * whole + edge)) <= 1e-5 * abs(rates.sum())


def test_euler_arithmetic():
    sc = rectangle_sweep(n=2, width=4.0, rho=1.0)
    st = _rect_state([0.0, 2.0, 4.0], [1.0, 5.0], sc.partition)
    nxt = step(st, sc.region, sc.density, sc.partition)
    assert nxt.x[1] == pytest.approx(2.004, abs=1e-15)
    assert nxt.t == 0.001 and nxt.k == 1
    assert nxt.traces[1].ys[-1] == pytest.approx(0.008, abs=1e-15)


def test_symmetric_fixed_point():
    sc = rectangle_sweep(n=4, width=4.0, rho=1.5)
    h = run_partition(sc.partition, sc.region, sc.density)
    assert np.max(np.abs(h.u)) == 0.0
    assert np.all(h.x == h.x[0])
    assert np.all(h.m[-1] == h.m[-1][0])
    assert h.m[-1].sum() == pytest.approx(1.5 * 4 * 10, rel=1e-12)


def test_one_step_mass_growth():
    p = dataclasses.replace(DEMO.partition, mass_mode="full-quadrature")
    st0 = initial_state(p, DEMO.region, DEMO.density)
    st1 = step(st0, DEMO.region, DEMO.density, p)
    row = row_masses(DEMO.density, st0.x[[0, -1]], p.epsilon, strip_points(DEMO.region, p) * p.n)
    predicted = p.v * p.dt * row[0]
    grown = st1.m.sum() - st0.m.sum()
    assert abs(grown - predicted) / grown < 0.01


def test_partition_time_and_final_state():
    h = run_partition(DEMO.partition, DEMO.region, DEMO.density)
    assert h.T_p == pytest.approx((10 - 0.01) / 8)
    assert 1.24 <= h.T_p <= 1.25
    assert h.t[-1] == h.T_p and h.steps == math.ceil(h.T_p / 0.001)
    for tr in h.traces:
        assert tr.top == pytest.approx(10 - 0.01, abs=1e-12)


def _n2_reference(ts, x0, w, rho, kappa, v, eps):
    """Uniform density on a rectangle makes the two-agent system linear:
    x' = kappa*d, d' = v*rho*(w - 2x) - 2*kappa*rho*eps*d with d = m_2 - m_1."""
    from scipy.integrate import solve_ivp
    f = lambda t, z: [kappa * z[1], v * rho * (w - 2 * z[0]) - 2 * kappa * rho * eps * z[1]]
    d0 = rho * eps * (w - 2 * x0)
    sol = solve_ivp(f, (0, ts[-1]), [x0, d0], t_eval=ts, rtol=1e-11, atol=1e-12)
    return sol.y


def test_n2_skewed_matches_linear_oracle():
    sc = rectangle_sweep(n=2, width=4.0, rho=1.0)
    h = run_partition(sc.partition, sc.region, sc.density, initial_x=[1.3])
    x_ref, d_ref = _n2_reference(h.t, 1.3, 4.0, 1.0, 1.0, 8.0, 0.01)
    d = h.m[:, 1] - h.m[:, 0]
    scale = np.max(np.abs(d_ref))
    assert np.max(np.abs(d - d_ref)) < 0.01 * scale
    assert np.max(np.abs(h.x[:, 1] - x_ref)) < 0.005
    # the imbalance is fed by the incoming rows: it does not decay monotonically
    assert np.max(np.abs(d)) > 10 * abs(d[0])
    # but the bar restores toward the centre line and crosses it
    assert np.max(h.x[:, 1]) > 2.0


@pytest.mark.parametrize("mode,tol", [("incremental", 1e-3), ("full-quadrature", 1e-5)])
def test_conservation(mode, tol):
    p = dataclasses.replace(DEMO.partition, mass_mode=mode)
    h = run_partition(p, DEMO.region, DEMO.density, initial_x=[2.1, 2.9, 4.2, 5.0])
    for k in range(0, len(h.t), 7):
        y = min(p.v * h.t[k] + p.epsilon, 10.0)
        total = region_mass_to(y, DEMO.region, DEMO.density, p)
        assert abs(h.m[k].sum() - total) / total <= tol
    assert np.allclose(h.m.sum(axis=1) / p.n, h.m.mean(axis=1), rtol=1e-12)


def test_pinning_exact():
    h = run_partition(DEMO.partition, DEMO.region, DEMO.density)
    ys = np.minimum(8.0 * h.t + 0.01, 10.0)
    assert np.array_equal(h.x[:, 0], [float(DEMO.region.left(y)) for y in ys])
    assert np.array_equal(h.x[:, -1], [float(DEMO.region.right(y)) for y in ys])


def test_trace_spacing():
    h = run_partition(DEMO.partition, DEMO.region, DEMO.density)
    dy = np.diff(h.traces[2].ys)
    assert np.allclose(dy[:-1], 8 * 0.001, rtol=0, atol=1e-12)
    assert 0 < dy[-1] <= 8 * 0.001 + 1e-12


def test_determinism():
    a = run_partition(DEMO.partition, DEMO.region, DEMO.density)
    b = run_partition(DEMO.partition, DEMO.region, DEMO.density)
    for f in ("t", "x", "m", "H", "u"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert np.array_equal(a.H, [energy(m) for m in a.m])


def test_collision_detected():
    sc = rectangle_sweep(n=3, width=4.0, kappa=500.0)
    with pytest.raises(CollisionError) as ei:
        run_partition(sc.partition, sc.region, sc.density, initial_x=[0.5, 0.52])
    err = ei.value
    assert err.t > 0 and 1 <= err.index <= 3
    assert err.x[err.index] <= err.x[err.index - 1]


def test_initial_x_validation():
    p = DEMO.partition
    with pytest.raises(ValueError, match="initial_x"):
        initial_state(p, DEMO.region, DEMO.density, [3.0, 2.0, 4.0, 5.0])
    with pytest.raises(ValueError, match="initial_x"):
        initial_state(p, DEMO.region, DEMO.density, [2.0, 3.0])
    full = initial_state(p, DEMO.region, DEMO.density)
    again = initial_state(p, DEMO.region, DEMO.density, full.x)
    assert np.array_equal(full.m, again.m)


def test_initial_mass_is_bottom_strip():
    p = DEMO.partition
    st = initial_state(p, DEMO.region, DEMO.density)
    assert st.t == 0.0
    assert st.m.sum() == pytest.approx(region_mass_to(p.epsilon, DEMO.region, DEMO.density, p),
                                       rel=1e-6)
    assert np.array_equal(st.m, subregion_masses(st, DEMO.region, DEMO.density, p))
