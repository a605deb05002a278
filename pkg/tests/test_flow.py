"""Flow integration: fixed points, heat decay, monitors, refinement."""

import numpy as np
import pytest

from geflow.errors import FlowStalled
from geflow.fields import MetricField, random_admissible
from geflow.flow import FlowState, cfl_dt, read_monitor_csv, run, step, uniqueness_probe
from geflow.functionals import ge_defect
from geflow.geometry import unit_base_metric
from geflow.grid import GridSpec


def torus_grid(n=16, m=1):
    return GridSpec(base_dim=m, points=n)


def base_cosine(grid, eps, axis=0):
    return eps * np.cos(grid.mesh(axis) * np.ones(grid.shape))


def fiber_cosine(grid, eps):
    return eps * np.cos(grid.mesh(2) * np.ones(grid.shape))


def ge_product_field(grid, q=0.5, eps=0.15):
    return MetricField(grid, 2.0, fiber_cosine(grid, eps), base_curvature=[[q]])


def test_fixed_point_is_stationary():
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    field = ge_product_field(grid)
    state = FlowState(0.0, field, dt=0.02)
    after = step(state, omega, lam=0.5)
    assert np.max(np.abs(after.field.psi - field.psi)) < 1e-12


def test_product_heat_decay_rate():
    # p0 = 0.1 cos(x1), g = 1: the flow is dp/dt = Lap p / 4, so the
    # cos(x1) amplitude decays like exp(-t/4); measured rate 0.25 +- 0.005.
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    eps = 0.1
    field = MetricField(grid, 0.01, base_cosine(grid, eps))
    result = run(field, omega, time_span=2.0, monitors=False)
    amp0 = eps
    amp1 = float(np.max(np.abs(result.final.psi)))
    rate = -np.log(amp1 / amp0) / 2.0
    assert abs(rate - 0.25) < 0.005


def test_defect_reaches_threshold_by_t40():
    # Same scenario run to T = 40 must cross ge_defect < 1e-6.
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    field = MetricField(grid, 0.01, base_cosine(grid, 0.1))
    result = run(field, omega, time_span=40.0, monitors=False)
    assert ge_defect(result.final, omega, lam=0.0) < 1e-6


def test_zero_time_run():
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    field = ge_product_field(grid)
    result = run(field, omega, time_span=0.0)
    assert len(result.snapshots) == 1
    assert result.report.violations == []


def test_monitored_coupled_run_500_steps():
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    x1 = grid.mesh(0) * np.ones(grid.shape)
    y1 = grid.mesh(2) * np.ones(grid.shape)
    psi = 0.05 * np.cos(x1 + y1) + 0.05 * np.cos(x1)
    field = MetricField(grid, 2.0, psi, base_curvature=[[0.4]])
    dt = 1e-3
    result = run(field, omega, time_span=0.5, dt=dt, monitors=True)
    assert len(result.report.rows) == 501
    assert result.report.violations == []
    ell = result.report.series("L")
    dfct = result.report.series("defect")
    slack = 1e-8 + 4 * dt * dt
    assert np.all(np.diff(ell) <= slack)
    assert np.all(np.diff(dfct) <= np.sqrt(slack))
    # Prop-2.3-style bounds with the constant frozen at t = 0
    sup0 = result.report.series("sup_trc_minus_lambda")[0]
    c_bound = (sup0 + 0.4) * 1.01
    assert np.all(result.report.series("sup_trc_minus_lambda") + 0.4 <= c_bound + 1e-12)
    drift = result.report.series("sup_phi_drift")
    t = result.report.series("t")
    assert np.all(drift <= c_bound * t + 1e-10)
    # heat identity residual stays at the discretization scale
    assert np.max(result.report.series("heat_residual")[1:]) < 5e-2


def test_csv_roundtrip(tmp_path):
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    field = ge_product_field(grid)
    result = run(field, omega, time_span=0.05, dt=0.01)
    path = tmp_path / "monitors.csv"
    result.report.to_csv(path)
    rows = read_monitor_csv(path)
    assert len(rows) == len(result.report.rows)
    assert rows[0]["t"] == 0.0

    from geflow.errors import ConfigurationError

    text = path.read_text().splitlines()
    bad = tmp_path / "truncated.csv"
    bad.write_text("\n".join(text[:2])[:-8] + "\n")
    with pytest.raises(ConfigurationError):
        read_monitor_csv(bad)


def test_uniqueness_probe_first_order_ratio():
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    field = MetricField(grid, 2.0, base_cosine(grid, 0.1))
    probe = uniqueness_probe(field, omega, time_span=1.0, dt=0.02, lam=0.0)
    assert 1.7 <= probe["refinement_ratio"] <= 2.3

    ge = ge_product_field(grid)
    quiet = uniqueness_probe(ge, omega, time_span=0.5, dt=0.02, lam=0.5)
    assert quiet["max_divergence"] <= 1e-12


def test_determinism_bit_identical():
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    field = random_admissible(grid, seed=33, base_curvature=[[0.3]])
    r1 = run(field, omega, time_span=0.2, dt=0.01, monitors=True)
    r2 = run(field, omega, time_span=0.2, dt=0.01, monitors=True)
    assert np.array_equal(r1.final.psi, r2.final.psi)
    assert r1.report.rows == r2.report.rows


def test_flow_stalls_on_hopeless_guard():
    # force admissibility failure: huge dt on a field near the positivity edge
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    x1 = grid.mesh(0) * np.ones(grid.shape)
    y1 = grid.mesh(2) * np.ones(grid.shape)
    # coupled perturbation: the rhs bends the fiber Hessian, so an absurd
    # dt violates positivity no matter how often it is halved
    field = MetricField(grid, 0.1, 0.01 * np.cos(x1 + y1))
    state = FlowState(0.0, field, dt=1e9)
    with pytest.raises(FlowStalled) as err:
        step(state, omega, lam=0.0)
    assert "sup_rhs" in err.value.diagnostics


def test_cfl_default():
    grid = torus_grid(16)
    omega = unit_base_metric(1)
    dt = cfl_dt(grid, omega)
    h = 2 * np.pi / 16
    assert abs(dt - 0.2 * h * h) < 1e-15
