"""Projective-bundle bridge: induced weights, HYM flow, equivalence."""

import numpy as np
import pytest

from geflow.errors import ConfigurationError
from geflow.fields import MetricField
from geflow.flow import run
from geflow.geometry import trace_c, unit_base_metric
from geflow.grid import GridSpec
from geflow.hym import (
    HermitianBundleState,
    InducedJets,
    chart_weight_values,
    constant_bundle,
    curvature_contraction,
    curvature_pairing_residual,
    det_h_curvature,
    diagonal_bundle,
    dump_bundle,
    equivalence_check,
    fiber_s0,
    he_trace_check,
    hym_comparison_hook,
    induced_weight,
    lambda_f_norm,
    load_bundle,
    run_hym,
    s1_coefficient,
    segre_crosscheck,
    static_identity_residual,
)


def pe_grid(n=16, fiber=(32, 32), derivative="stencil4"):
    return GridSpec(base_dim=1, points=n, fiber_kind="projective",
                    fiber_points=fiber, derivative=derivative)


def cos_bundle(grid, eps, second=0.0):
    x1 = grid.mesh(0)[..., 0, 0] * np.ones(grid.base_shape)
    return diagonal_bundle(grid, eps * np.cos(x1), second)


def test_bundle_validation():
    grid = pe_grid(8)
    h = np.zeros((2, 2) + grid.base_shape, dtype=complex)
    h[0, 0] = 1.0
    h[1, 1] = -1.0
    with pytest.raises(ConfigurationError):
        HermitianBundleState(grid, h)  # not positive
    h[1, 1] = 1.0
    h[0, 1] = 0.5j
    with pytest.raises(ConfigurationError):
        HermitianBundleState(grid, h)  # not Hermitian
    torus = GridSpec(base_dim=1, points=8)
    with pytest.raises(ConfigurationError):
        HermitianBundleState(torus, np.zeros((2, 2, 8, 8)))


def test_flat_bundle_everything_vanishes():
    grid = pe_grid(8)
    omega = unit_base_metric(1)
    flat = constant_bundle(grid)
    field = induced_weight(flat)
    # phi = log(1 + |w|^2): stored perturbation vanishes identically
    assert np.max(np.abs(field.psi)) < 1e-12
    # fiber restriction is Fubini-Study: phi_ww = (1+|w|^2)^{-2}
    jets = InducedJets(flat)
    t = grid.fiber_tan()
    assert np.max(np.abs(jets.pff - 1.0 / (1.0 + t * t) ** 2)) < 1e-12
    assert np.max(np.abs(jets.trace_c(omega))) < 1e-12
    assert he_trace_check(flat, omega) < 1e-12
    # Hermitian-Einstein at lambda = 0: constant nontrivial h too
    const = constant_bundle(grid, [[2.0, 0.3 + 0.1j], [0.3 - 0.1j, 1.0]])
    assert np.max(np.abs(InducedJets(const).trace_c(omega))) < 1e-8


def test_chart_cocycle():
    grid = pe_grid(8)
    state = cos_bundle(grid, 0.3)
    phi0 = chart_weight_values(state, 0)
    phi1 = chart_weight_values(state, 1)
    w = grid.fiber_w()
    resid = phi0 - phi1 - np.log(np.abs(w) ** 2)
    assert np.max(np.abs(resid)) < 1e-10


def test_diagonal_trace_formula():
    # h = diag(e^u, 1): tr_omega c = u_zz e^u / (e^u + |w|^2); at [1:0] it is
    # Lap u / 4 (g = 1).  Spectral mode makes the comparison near-exact.
    grid = pe_grid(16, derivative="spectral")
    omega = unit_base_metric(1)
    eps = 0.3
    state = cos_bundle(grid, eps)
    x1 = grid.mesh(0)[..., 0, 0] * np.ones(grid.base_shape)
    u = eps * np.cos(x1)
    uzz = -0.25 * eps * np.cos(x1)
    w = grid.fiber_w()
    g_fun = np.exp(u)[..., None, None] + np.abs(w) ** 2
    predicted = uzz[..., None, None] * np.exp(u)[..., None, None] / g_fun
    trc = InducedJets(state).trace_c(omega)
    assert np.max(np.abs(trc - predicted)) < 1e-9


def test_curvature_pairing_and_trace_correspondence():
    grid = pe_grid(16)
    omega = unit_base_metric(1)
    state = cos_bundle(grid, 0.25, 0.1)
    assert curvature_pairing_residual(state, omega) < 1e-11
    assert he_trace_check(state, omega, samples=40) < 1e-8
    assert static_identity_residual(state, omega, samples=20) < 1e-9


def test_fiber_s0_normalization():
    grid = pe_grid(8)
    for state in (constant_bundle(grid), cos_bundle(grid, 0.4)):
        assert np.max(np.abs(fiber_s0(state) - 1.0)) < 1e-8


def test_hym_flow_stationary_and_convergent():
    grid = pe_grid(16)
    omega = unit_base_metric(1)
    flat = constant_bundle(grid)
    _, after = run_hym(flat, omega, 0.0, 0.5, 0.05)
    assert np.max(np.abs(after.h - flat.h)) < 1e-14

    # deg-0 torus scenario relaxes to a constant metric
    state = cos_bundle(grid, 0.05)
    _, final = run_hym(state, omega, 0.0, 40.0, 0.05)
    assert lambda_f_norm(final, omega) < 1e-6
    spread = np.max(np.abs(final.h - final.h[:, :, :1, :1]))
    assert spread < 1e-5


def test_trace_flow_determinant_identity():
    # d/dt log det G integrates tr(H^{-1} dH/dt) = -tr(LambdaF) + r lambda
    grid = pe_grid(16)
    omega = unit_base_metric(1)
    state = cos_bundle(grid, 0.2)
    dt, steps = 0.02, 100
    acc = np.zeros(grid.base_shape)
    current = state
    for _ in range(steps):
        m = curvature_contraction(current, omega)
        rhs = m  # lambda = 0
        hinv = current.inverse()
        acc = acc + dt * np.real(np.einsum("ab...,ba...->...", hinv, rhs))
        from geflow.hym import hym_step

        current = hym_step(current, omega, 0.0, dt)
    def logdet(s):
        return np.log(np.real(s.h[0, 0] * s.h[1, 1] - s.h[0, 1] * s.h[1, 0]))
    change = logdet(current) - logdet(state)
    assert np.max(np.abs(change - acc)) < 2e-3 * max(1.0, np.max(np.abs(change)))


def test_equivalence_flat_and_first_order():
    omega = unit_base_metric(1)
    # flat data: both flows stay put
    grid = pe_grid(8)
    flat = constant_bundle(grid)
    snaps_h, _ = run_hym(flat, omega, 0.0, 0.1, 0.02, snapshot_every=1)
    scalar = run(induced_weight(flat), omega, 0.1, dt=0.02, lam=0.0,
                 monitors=False, snapshot_every=1)
    eq = equivalence_check(snaps_h, scalar.snapshots)
    assert eq["max_residual"] < 1e-12

    # dynamic case: residual halves when dt halves (spectral grid keeps the
    # spatial floor far below the time-stepping error)
    sgrid = pe_grid(16, derivative="spectral")
    state = cos_bundle(sgrid, 0.1)
    phi0 = induced_weight(state)
    res = []
    for dt in (0.04, 0.02):
        every = max(1, int(round(0.2 / dt)))
        snaps, _ = run_hym(state, omega, 0.0, 0.4, dt, snapshot_every=every)
        sc = run(phi0, omega, 0.4, dt=dt, lam=0.0, monitors=False,
                 snapshot_every=every)
        res.append(equivalence_check(snaps, sc.snapshots)["max_residual"])
    assert 1.7 <= res[0] / res[1] <= 2.3


def test_segre_crosscheck_and_convention_lock():
    omega = unit_base_metric(1)
    grid = pe_grid(16)
    trivial = constant_bundle(grid)
    out = segre_crosscheck(trivial)
    assert abs(out["numeric"]) < 1e-12 and out["exact"] == 0.0

    state = cos_bundle(grid, 0.1)
    out = segre_crosscheck(state)
    assert abs(out["numeric"]) <= 1e-6  # exact-form integral on the torus

    # Convention lock: pi_*(c1(O(1))^2) equals + c1(det E, det h) pointwise
    # for diagonal h (quotient convention); the opposite sign is far off.
    sgrid = pe_grid(16, derivative="spectral")
    sstate = cos_bundle(sgrid, 0.3, 0.15)
    s1 = s1_coefficient(sstate)
    oracle = det_h_curvature(sstate)
    scale = np.max(np.abs(oracle))
    assert np.max(np.abs(s1 - oracle)) < 1e-6 * max(1.0, scale)
    assert np.max(np.abs(s1 + oracle)) > 0.5 * scale


def test_bundle_dump_roundtrip(tmp_path):
    grid = pe_grid(8)
    state = cos_bundle(grid, 0.2, 0.05)
    path = tmp_path / "bundle.gefld"
    dump_bundle(state, path)
    back = load_bundle(grid, path)
    assert np.array_equal(back.h, state.h)


def test_comparison_hook_scenario_guard():
    torus = GridSpec(base_dim=1, points=8)
    field = MetricField(torus, 2.0)
    grid = pe_grid(8)
    state = constant_bundle(grid)
    with pytest.raises(ConfigurationError):
        hym_comparison_hook(field, state, unit_base_metric(1))
    ok = hym_comparison_hook(induced_weight(state), state, unit_base_metric(1))
    assert ok < 1e-12
