"""Derivative stencils, conjugation symmetry, quadrature weights."""

import numpy as np
import pytest

from geflow.errors import ConfigurationError
from geflow.grid import GridSpec, tree_sum, wirtinger_derivative


def torus_grid(n=16, m=1, derivative="stencil4"):
    return GridSpec(base_dim=m, points=n, derivative=derivative)


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        GridSpec(base_dim=1, points=6)
    with pytest.raises(ConfigurationError):
        GridSpec(base_dim=1, points=15)
    with pytest.raises(ConfigurationError):
        GridSpec(base_dim=3, points=16)
    with pytest.raises(ConfigurationError):
        GridSpec(base_dim=2, points=16)  # m = 2 capped at 12


def test_wirtinger_cosine_mode():
    # d/dz cos(x1) = -sin(x1)/2; at x1 = pi/2 the value is -0.5 + 0i.
    grid = torus_grid(16)
    x1 = grid.mesh(0) * np.ones(grid.shape)
    val16 = wirtinger_derivative(grid, np.cos(x1), 0, "d")
    idx = (4, 0, 0, 0)  # x1 = pi/2 on the 16-point axis
    assert abs(val16[idx] - (-0.5)) < 5e-4

    # Richardson cross-check: halving h must reproduce the closed form
    # with the 4th-order error model err(h/2) ~ err(h)/16.
    grid32 = torus_grid(32)
    x1b = grid32.mesh(0) * np.ones(grid32.shape)
    val32 = wirtinger_derivative(grid32, np.cos(x1b), 0, "d")
    idx32 = (8, 0, 0, 0)
    rich = (16.0 * val32[idx32] - val16[idx]) / 15.0
    assert abs(rich - (-0.5)) < 1e-6


def test_wirtinger_constant_and_imaginary_axis():
    grid = torus_grid(16)
    one = np.ones(grid.shape)
    assert np.max(np.abs(wirtinger_derivative(grid, one, 0, "d"))) == 0.0
    # f = sin(x2) with x2 = Im z: only -i d/dx2 / 2 contributes.
    x2 = grid.mesh(1) * np.ones(grid.shape)
    d = wirtinger_derivative(grid, np.sin(x2), 0, "d")
    assert np.max(np.abs(d.real)) < 1e-14
    assert np.max(np.abs(d.imag + 0.5 * np.cos(x2))) < 5e-4


def test_wirtinger_linearity_exact():
    grid = torus_grid(16)
    rng = np.random.RandomState(0)
    f = rng.standard_normal(grid.shape)
    g = rng.standard_normal(grid.shape)
    lhs = wirtinger_derivative(grid, 2.0 * f + 3.0 * g, 1, "d")
    rhs = 2.0 * wirtinger_derivative(grid, f, 1, "d") + 3.0 * wirtinger_derivative(
        grid, g, 1, "d"
    )
    scale = np.max(np.abs(rhs))
    assert np.max(np.abs(lhs - rhs)) < 1e-14 * scale


def test_conjugation_symmetry_bit_exact():
    grid = torus_grid(16)
    rng = np.random.RandomState(1)
    f = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    lhs = wirtinger_derivative(grid, f, 0, "dbar")
    rhs = np.conj(wirtinger_derivative(grid, np.conj(f), 0, "d"))
    assert np.array_equal(lhs, rhs)


def test_stencil_convergence_factor():
    # err(h)/err(h/2) for the 4th-order stencil sits in [14, 18] (~2^4).
    f = lambda x1, x2: np.cos(x1 + 2.0 * x2)
    exact = lambda x1, x2: 0.5 * (-np.sin(x1 + 2 * x2)) - 0.5j * (
        -2.0 * np.sin(x1 + 2 * x2)
    )
    errs = []
    for n in (16, 32):
        grid = torus_grid(n)
        x1 = grid.mesh(0) * np.ones(grid.shape)
        x2 = grid.mesh(1) * np.ones(grid.shape)
        approx = wirtinger_derivative(grid, f(x1, x2), 0, "d")
        err = np.abs(approx - exact(x1, x2))
        flat = err.reshape(err.shape[0] * err.shape[1], -1)[:, 0]
        assert flat.size >= 100
        errs.append(np.max(err))
    factor = errs[0] / errs[1]
    assert 14.0 <= factor <= 18.0


def test_spectral_mode_is_exact_on_low_modes():
    grid = torus_grid(16, derivative="spectral")
    x1 = grid.mesh(0) * np.ones(grid.shape)
    d = wirtinger_derivative(grid, np.cos(3.0 * x1), 0, "d")
    assert np.max(np.abs(d + 1.5 * np.sin(3.0 * x1))) < 1e-12


def test_tree_sum_matches_numpy():
    rng = np.random.RandomState(2)
    x = rng.standard_normal(1023)
    assert abs(tree_sum(x) - np.sum(x)) < 1e-12
    assert tree_sum(np.array([])) == 0.0


def test_torus_quadrature_volume():
    grid = torus_grid(16)
    vol = grid.integrate_total(np.ones(grid.shape))
    # each complex pair contributes 2 (2 pi)^2 against i dz ^ dzbar
    assert abs(vol - (2 * (2 * np.pi) ** 2) ** 2) < 1e-9


def test_projective_fiber_area_and_symmetry():
    grid = GridSpec(base_dim=1, points=8, fiber_kind="projective",
                    fiber_points=(32, 32))
    t = grid.fiber_tan()
    fs_density = 1.0 / (1.0 + t * t) ** 2
    area = grid.fiber_weights() * fs_density
    # integral of i dw dwbar / (1+|w|^2)^2 over P^1 equals 2 pi
    assert abs(area.sum() - 2.0 * np.pi) < 1e-10
    # double-cover involution fixes single-valued fields
    w = grid.fiber_w()
    f = np.abs(w) ** 2 / (1.0 + np.abs(w) ** 2)
    assert np.max(np.abs(grid.antipode(f) - f)) < 1e-12


def test_projective_wirtinger_matches_rational_function():
    grid = GridSpec(base_dim=1, points=8, fiber_kind="projective",
                    fiber_points=(64, 32))
    w = grid.fiber_w() * np.ones(grid.shape, dtype=complex)
    f = 1.0 / (1.0 + np.abs(w) ** 2)
    # d/dw (1+|w|^2)^{-1} = -wbar/(1+|w|^2)^2
    exact = -np.conj(w) / (1.0 + np.abs(w) ** 2) ** 2
    approx = grid.d_dz(f, 1)
    assert np.max(np.abs(approx - exact)) < 5e-5
    # second mixed derivative of the same global function:
    # d^2/dw dwbar (1+|w|^2)^{-1} = (|w|^2 - 1)/(1+|w|^2)^3
    hess = grid.d_dz(grid.d_dzbar(f, 1), 1)
    exact2 = (np.abs(w) ** 2 - 1.0) / (1.0 + np.abs(w) ** 2) ** 3
    assert np.max(np.abs(hess - exact2)) < 5e-4
