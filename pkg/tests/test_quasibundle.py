"""Contracted-curvature operator, HE verdicts, Poisson normalization."""

import numpy as np
import pytest

from geflow.errors import ConfigurationError
from geflow.fields import MetricField, random_admissible
from geflow.functionals import ge_defect
from geflow.geometry import BaseMetric, trace_c, unit_base_metric
from geflow.grid import GridSpec
from geflow.quasibundle import (
    bracket_field,
    base_laplacian_inverse,
    fiber_mode_battery,
    he_equivalence_test,
    he_operator,
    normalize,
)


def torus_grid(n=16, m=1):
    return GridSpec(base_dim=m, points=n)


def base_cosine(grid, eps, axis=0):
    return eps * np.cos(grid.mesh(axis) * np.ones(grid.shape))


def coupled_cosine(grid, eps):
    x1 = grid.mesh(0) * np.ones(grid.shape)
    y1 = grid.mesh(2 * grid.base_dim) * np.ones(grid.shape)
    return eps * np.cos(x1 + y1)


def test_battery_structure():
    grid = torus_grid(16)
    battery = fiber_mode_battery(grid)
    assert len(battery.labels) == 8
    assert np.max(np.abs(battery.functions[0] - 1.0)) == 0.0  # contains u = 1
    assert battery.cutoff == 2


def test_bracket_vanishes_for_products():
    grid = torus_grid(16)
    omega_b = unit_base_metric(1)
    product = MetricField(grid, 2.0, base_cosine(grid, 0.3), base_curvature=[[0.2]])
    a, b = bracket_field(product, omega_b)
    assert np.max(np.abs(a)) < 1e-13
    assert np.max(np.abs(b)) < 1e-13


def test_bracket_matches_symbolic_third_derivatives():
    # coefficients (d/dvbar c)/pff for psi = eps cos(x1+y1), via sympy
    import sympy as sp

    eps = 0.15
    grid = GridSpec(base_dim=1, points=16, derivative="spectral")
    omega_b = unit_base_metric(1)
    field = MetricField(grid, 2.0, coupled_cosine(grid, eps))
    a, b = bracket_field(field, omega_b)

    x1, x2, y1, y2 = sp.symbols("x1 x2 y1 y2", real=True)
    psi = eps * sp.cos(x1 + y1)
    d_z = lambda f: (sp.diff(f, x1) - sp.I * sp.diff(f, x2)) / 2
    d_zb = lambda f: (sp.diff(f, x1) + sp.I * sp.diff(f, x2)) / 2
    d_v = lambda f: (sp.diff(f, y1) - sp.I * sp.diff(f, y2)) / 2
    d_vb = lambda f: (sp.diff(f, y1) + sp.I * sp.diff(f, y2)) / 2
    pvv = 1 + d_v(d_vb(psi))
    c_sym = d_z(d_zb(psi)) - d_z(d_vb(psi)) * d_v(d_zb(psi)) / pvv
    a_sym = sp.lambdify((x1, x2, y1, y2), d_vb(c_sym) / pvv, "numpy")
    rng = np.random.RandomState(3)
    for _ in range(10):
        idx = tuple(rng.randint(0, 16, size=4))
        pt = tuple(grid.axis_values(ax)[i] for ax, i in enumerate(idx))
        assert abs(a[(0, 0) + idx] - complex(a_sym(*pt))) < 1e-8


def test_he_operator_kills_constants_and_detects_modes():
    grid = torus_grid(16)
    omega_b = unit_base_metric(1)
    field = MetricField(grid, 2.0, coupled_cosine(grid, 0.2))
    ones = np.ones(grid.shape, dtype=complex)
    assert np.max(np.abs(he_operator(field, omega_b, ones))) == 0.0

    battery = fiber_mode_battery(grid)
    u = battery.functions[3]  # e^{i y-mode}
    out = he_operator(field, omega_b, u)
    assert np.max(np.abs(out)) > 1e-3


def test_he_operator_matches_symbolic_oracle():
    import sympy as sp

    eps = 0.12
    grid = GridSpec(base_dim=1, points=16, derivative="spectral")
    omega_b = unit_base_metric(1)
    field = MetricField(grid, 2.0, coupled_cosine(grid, eps))
    x = grid.mesh(2) * np.ones(grid.shape)
    y = grid.mesh(3) * np.ones(grid.shape)
    u = np.exp(1j * y)
    out = he_operator(field, omega_b, u)

    x1, x2, y1, y2 = sp.symbols("x1 x2 y1 y2", real=True)
    psi = eps * sp.cos(x1 + y1)
    d_z = lambda f: (sp.diff(f, x1) - sp.I * sp.diff(f, x2)) / 2
    d_zb = lambda f: (sp.diff(f, x1) + sp.I * sp.diff(f, x2)) / 2
    d_v = lambda f: (sp.diff(f, y1) - sp.I * sp.diff(f, y2)) / 2
    d_vb = lambda f: (sp.diff(f, y1) + sp.I * sp.diff(f, y2)) / 2
    pvv = 1 + d_v(d_vb(psi))
    t_sym = d_z(d_zb(psi)) - d_z(d_vb(psi)) * d_v(d_zb(psi)) / pvv
    u_sym = sp.exp(sp.I * y2)
    op_sym = (d_vb(t_sym) * d_v(u_sym) - d_v(t_sym) * d_vb(u_sym)) / pvv
    fn = sp.lambdify((x1, x2, y1, y2), op_sym, "numpy")
    rng = np.random.RandomState(4)
    for _ in range(10):
        idx = tuple(rng.randint(0, 16, size=4))
        pt = tuple(grid.axis_values(ax)[i] for ax, i in enumerate(idx))
        assert abs(out[idx] - complex(fn(*pt))) < 1e-8


def test_he_equivalence_verdicts():
    grid = torus_grid(16)
    omega_b = unit_base_metric(1)
    # product GE weight: HE verdict with operator sup <= 1e-10
    ge = MetricField(grid, 2.0, base_cosine(grid, 0.2), base_curvature=[[0.3]])
    report = he_equivalence_test(ge, omega_b, tol=1e-8)
    assert report["hermitian_einstein"]
    assert report["operator_sup"] <= 1e-10
    assert report["he_constant"] == 0.0
    assert report["cutoff"] == 2

    # planted fiber-varying trace: verdict flips and the mode is named
    bad = MetricField(grid, 2.0, coupled_cosine(grid, 0.2))
    report2 = he_equivalence_test(bad, omega_b, tol=1e-8)
    assert not report2["hermitian_einstein"]
    assert report2["operator_sup"] > 1e-4
    assert report2["worst_mode"] in fiber_mode_battery(grid).labels


def test_verdict_agreement_over_seeds():
    grid = torus_grid(16)
    omega_b = BaseMetric(1, 1.25)
    for seed in range(50):
        field = random_admissible(grid, seed=seed, amplitude=0.04)
        he_equivalence_test(field, omega_b, tol=1e-8)  # raises on disagreement


def smooth_base_rhs(grid, seed):
    """Band-limited zero-mean right-hand side (traces of smooth weights)."""
    rng = np.random.RandomState(seed)
    axes = [grid.mesh(ax)[(...,) + (0,) * 2] * np.ones(grid.base_shape)
            for ax in range(2 * grid.base_dim)]
    rhs = np.zeros(grid.base_shape)
    for _ in range(6):
        freq = rng.randint(-3, 4, size=len(axes))
        if not np.any(freq):
            freq[0] = 1
        rhs += rng.uniform(-1, 1) * np.cos(
            sum(int(k) * ax for k, ax in zip(freq, axes)) + rng.uniform(0, 2 * np.pi)
        )
    return rhs - rhs.mean()


def test_poisson_solver_inverts_stencil_laplacian():
    grid = torus_grid(16)
    omega_b = BaseMetric(1, 2.0)
    rhs = smooth_base_rhs(grid, seed=9)
    sol = base_laplacian_inverse(grid, omega_b, rhs)
    assert abs(sol.mean()) < 1e-12
    # apply the grid Laplacian of a base-only function: g^{zz} d_z d_zbar
    lifted = sol.reshape(grid.base_shape + (1, 1)) * np.ones(grid.shape)
    lap = np.real(grid.d_dz(grid.d_dzbar(lifted, 0), 0))[..., 0, 0] / 2.0
    assert np.max(np.abs(lap - rhs)) < 1e-10


def test_normalize_cosine_oracle():
    # f = cos x1, g = 1: Delta f~ = -cos x1 has f~ = 4 cos x1 (rate 1/4);
    # spectral mode reproduces the closed form exactly.
    grid = GridSpec(base_dim=1, points=16, derivative="spectral")
    omega_b = unit_base_metric(1)
    field = MetricField(grid, 2.0, base_cosine(grid, 0.1), base_curvature=[[0.5]])
    out = normalize(field, omega_b)
    added = out.psi - field.psi
    x1 = grid.mesh(0) * np.ones(grid.shape)
    # tr c = 0.5 - 0.025 cos x1, so the deviation f - mean = -0.025 cos x1
    # inverts to f~ = 4 (f - mean) = -0.1 cos x1 (Fourier-mode oracle: the
    # base Laplacian acts on cos x1 by -1/4 when g = 1)
    expected = 4.0 * (-0.025) * np.cos(x1)
    assert np.max(np.abs(added - expected)) < 1e-12
    after = trace_c(out, omega_b)
    assert np.max(np.abs(after - 0.5)) < 1e-12


def test_normalize_contract_and_idempotency():
    grid = torus_grid(16)
    omega_b = unit_base_metric(1)
    field = MetricField(grid, 2.0, base_cosine(grid, 0.2) + base_cosine(grid, 0.1, 1),
                        base_curvature=[[0.4]])
    out = normalize(field, omega_b)
    after = trace_c(out, omega_b)
    lam = float(np.mean(after))
    assert np.max(np.abs(after - lam)) < 1e-6
    # added base function has zero mean
    assert abs(float(np.mean(out.psi - field.psi))) < 1e-12
    # idempotent: a second pass changes nothing
    again = normalize(out, omega_b)
    assert np.max(np.abs(again.psi - out.psi)) < 1e-10
    # post-normalization defect with lambda recomputed as the constant
    assert ge_defect(out, omega_b, lam=lam) < 1e-6

    # already-constant trace: the correction vanishes
    y1 = grid.mesh(2) * np.ones(grid.shape)
    ge = MetricField(grid, 2.0, 0.1 * np.cos(y1), base_curvature=[[0.4]])
    same = normalize(ge, omega_b)
    assert np.max(np.abs(same.psi - ge.psi)) < 1e-12


def test_normalize_rejects_fiber_varying_trace():
    grid = torus_grid(16)
    omega_b = unit_base_metric(1)
    coupled = MetricField(grid, 2.0, coupled_cosine(grid, 0.2))
    with pytest.raises(ConfigurationError, match="fiber"):
        normalize(coupled, omega_b)


def test_surface_base_poisson():
    grid = torus_grid(8, m=2)
    omega_b = BaseMetric(2, np.array([[1.0, 0.2], [0.2, 1.5]]))
    rhs = smooth_base_rhs(grid, seed=11)
    sol = base_laplacian_inverse(grid, omega_b, rhs)
    lifted = sol.reshape(grid.base_shape + (1, 1)) * np.ones(grid.shape)
    ginv = np.linalg.inv(omega_b.mat)
    lap = np.zeros(grid.base_shape, dtype=complex)
    for a in range(2):
        for b in range(2):
            lap += ginv[b, a] * grid.d_dz(grid.d_dzbar(lifted, b), a)[..., 0, 0]
    assert np.max(np.abs(np.real(lap) - rhs)) < 1e-10
