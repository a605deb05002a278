"""Projective-bundle bridge: induced weights, Hermitian-Yang-Mills flow,
and the pointwise scalar/matrix equivalence.

A rank-2 Hermitian metric h on E over the base induces a weight on the
relative hyperplane bundle of P(E),

    phi = log G,   G(z, v) = sum h_{i jbar}(z) v^i conj(v^j),

restricted to the affine chart v = (1, w).  Because G is quadratic in the
fiber, every fiber derivative of phi is available in closed form from h and
its base-stencil derivatives; no fiber-grid differentiation enters here.

With M := g^{z zbar} (ddbar H - dH H^{-1} dbar H) the trace correspondence

    tr_omega c(phi_h) (z, [v]) = quad(M, v) / quad(H, v)

is the scalar form of the curvature contraction; the matrix heat flow

    dH/dt = M - lambda H

is the Hermitian-Yang-Mills flow in this convention, and its induced
weights solve the scalar flow (checked dynamically by equivalence_check).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, FlowStalled
from .fields import MetricField, read_array, write_array
from .geometry import BaseMetric, real_checked
from .grid import PROJECTIVE, GridSpec

HYM_MAX_HALVINGS = 10
EIG_FLOOR = 1e-9


class HermitianBundleState:
    """Positive Hermitian 2x2 metric field h on the base of a P^1 scenario."""

    def __init__(self, grid: GridSpec, h: np.ndarray):
        if grid.fiber_kind != PROJECTIVE:
            raise ConfigurationError("bundle states live on projective scenarios")
        h = np.asarray(h, dtype=complex)
        if h.shape != (2, 2) + grid.base_shape:
            raise ConfigurationError(
                f"h must have shape (2, 2) + {grid.base_shape}, got {h.shape}"
            )
        herm = np.max(np.abs(h - np.conj(np.swapaxes(h, 0, 1))))
        if herm > 1e-10:
            raise ConfigurationError(f"h is not Hermitian (residual {herm:.2e})")
        self.grid = grid
        self.h = h
        if self.min_eigenvalue() <= 0:
            raise ConfigurationError("h must be positive definite at every point")

    def min_eigenvalue(self) -> float:
        tr = np.real(self.h[0, 0] + self.h[1, 1])
        det = np.real(self.h[0, 0] * self.h[1, 1] - self.h[0, 1] * self.h[1, 0])
        disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
        return float(np.min(tr / 2.0 - disc))

    def inverse(self) -> np.ndarray:
        det = self.h[0, 0] * self.h[1, 1] - self.h[0, 1] * self.h[1, 0]
        inv = np.empty_like(self.h)
        inv[0, 0] = self.h[1, 1] / det
        inv[1, 1] = self.h[0, 0] / det
        inv[0, 1] = -self.h[0, 1] / det
        inv[1, 0] = -self.h[1, 0] / det
        return inv

    def with_h(self, h: np.ndarray) -> "HermitianBundleState":
        return HermitianBundleState(self.grid, h)


def constant_bundle(grid: GridSpec, matrix=None) -> HermitianBundleState:
    m = np.eye(2, dtype=complex) if matrix is None else np.asarray(matrix, complex)
    h = np.broadcast_to(m.reshape(2, 2, 1, 1), (2, 2) + grid.base_shape).copy()
    return HermitianBundleState(grid, h)


def diagonal_bundle(grid: GridSpec, u11: np.ndarray, u22: np.ndarray | float = 0.0):
    """h = diag(e^{u11}, e^{u22}) with periodic exponent fields on the base."""
    h = np.zeros((2, 2) + grid.base_shape, dtype=complex)
    h[0, 0] = np.exp(u11)
    h[1, 1] = np.exp(u22 * np.ones(grid.base_shape))
    return HermitianBundleState(grid, h)


def _matmul(a, b):
    return np.einsum("ab...,bc...->ac...", a, b)


def _base_ginv(omega: BaseMetric, grid: GridSpec):
    """g^{z zbar} as a scalar or base-shaped array (m = 1 bases only here)."""
    g = np.real(omega.mat[0, 0])
    return 1.0 / g  # scalar or base field, broadcasts over (2, 2, base)


def curvature_contraction(state: HermitianBundleState, omega: BaseMetric) -> np.ndarray:
    """M = g^{z zbar}(ddbar H - dH H^{-1} dbar H), Hermitian per base point."""
    grid = state.grid
    h = state.h
    dh = np.stack([np.stack([grid.d_dz(h[i, j], 0) for j in range(2)])
                   for i in range(2)])
    dbh = np.stack([np.stack([grid.d_dzbar(h[i, j], 0) for j in range(2)])
                    for i in range(2)])
    ddbh = np.stack([np.stack([grid.d_dz(grid.d_dzbar(h[i, j], 0), 0)
                               for j in range(2)]) for i in range(2)])
    m = ddbh - _matmul(_matmul(dh, state.inverse()), dbh)
    return m * _base_ginv(omega, grid)


def lambda_f_norm(state: HermitianBundleState, omega: BaseMetric,
                  lam: float = 0.0) -> float:
    """sup Frobenius norm of the Lambda F - lambda I endomorphism."""
    m = curvature_contraction(state, omega) - lam * state.h
    endo = _matmul(m, state.inverse())
    return float(np.max(np.sqrt(np.sum(np.abs(endo) ** 2, axis=(0, 1)))))


def curvature_pairing_residual(state: HermitianBundleState, omega: BaseMetric) -> float:
    """Conjugate-symmetry of <Lambda F u, v>_h: Hermiticity of M."""
    m = curvature_contraction(state, omega)
    return float(np.max(np.abs(m - np.conj(np.swapaxes(m, 0, 1)))))


# -- induced weights and closed-form jets -------------------------------------


def _chart_vectors(grid: GridSpec, chart: int):
    w = grid.fiber_w()
    if chart == 0:
        return np.ones_like(w), w
    if chart == 1:
        return 1.0 / w, np.ones_like(w)
    raise ConfigurationError("chart must be 0 or 1")


def _quad(mat2: np.ndarray, v1, v2, grid: GridSpec) -> np.ndarray:
    """sum mat2[i,j] v^i conj(v^j) broadcast over base x fiber."""
    def lift(entry):
        return np.asarray(entry).reshape(np.shape(entry) + (1, 1))
    out = (
        lift(mat2[0, 0]) * (v1 * np.conj(v1))
        + lift(mat2[0, 1]) * (v1 * np.conj(v2))
        + lift(mat2[1, 0]) * (v2 * np.conj(v1))
        + lift(mat2[1, 1]) * (v2 * np.conj(v2))
    )
    return out


def chart_weight_values(state: HermitianBundleState, chart: int) -> np.ndarray:
    """Raw weight log G in the requested affine chart, over the full grid."""
    v1, v2 = _chart_vectors(state.grid, chart)
    g = real_checked(_quad(state.h, v1, v2, state.grid), "chart metric G")
    return np.log(g)


def induced_weight(state: HermitianBundleState, chart: int = 0) -> MetricField:
    """MetricField whose total weight is log G (chart 0 reference).

    The stored perturbation psi = log G - log(1+|w|^2) is a global smooth
    function on P(E), so the field is a legal grid weight regardless of the
    chart used to express the reference.
    """
    if chart not in (0, 1):
        raise ConfigurationError("chart must be 0 or 1")
    grid = state.grid
    w = grid.fiber_w()
    v1, v2 = _chart_vectors(grid, 0)
    g = real_checked(_quad(state.h, v1, v2, grid), "induced metric G")
    psi = np.log(g) - np.log1p(np.abs(w) ** 2)
    return MetricField(grid, 1.0, psi, label="induced")


class InducedJets:
    """Closed-form second jets of phi = log G at every base x fiber node."""

    def __init__(self, state: HermitianBundleState):
        grid = state.grid
        h = state.h
        dz = lambda f: grid.d_dz(f, 0)
        dzb = lambda f: grid.d_dzbar(f, 0)
        dh = np.stack([np.stack([dz(h[i, j]) for j in range(2)]) for i in range(2)])
        ddbh = np.stack([np.stack([dz(dzb(h[i, j])) for j in range(2)])
                         for i in range(2)])
        v1, v2 = _chart_vectors(grid, 0)
        g = real_checked(_quad(h, v1, v2, grid), "induced metric G")
        gz = _quad(dh, v1, v2, grid)
        gzzb = real_checked(_quad(ddbh, v1, v2, grid), "ddbar G")

        def lift(entry):
            return np.asarray(entry).reshape(np.shape(entry) + (1, 1))

        gw = lift(h[1, 0]) * np.conj(v1) + lift(h[1, 1]) * np.conj(v2)
        gwb = np.conj(gw)
        gzwb = lift(dh[0, 1]) * v1 + lift(dh[1, 1]) * v2
        gwwb = lift(h[1, 1]) * np.ones_like(g)

        self.grid = grid
        self.g = g
        self.pbb = (gzzb / g - gz * np.conj(gz) / g**2)[None, None]
        self.pbf = (gzwb / g - gwb * gz / g**2)[None]
        self.pff = np.real(gwwb / g - gw * gwb / g**2)

    def trace_c(self, omega: BaseMetric) -> np.ndarray:
        coupling = np.abs(self.pbf[0]) ** 2 / self.pff
        ginv = omega.inverse_aligned(self.grid)[0, 0]
        return np.real((self.pbb[0, 0] - coupling) * ginv)


def he_trace_check(state: HermitianBundleState, omega: BaseMetric,
                   samples: int = 20, seed: int = 7) -> float:
    """Finsler/Hermitian trace correspondence on deterministic samples.

    Compares tr_omega c(phi_h) from the closed-form jets against
    quad(M, v)/quad(H, v) at random (z, [v]) pairs.  Both sides share only
    the base stencils of h; the identity is algebraic.
    """
    grid = state.grid
    rng = np.random.RandomState(seed)
    m_field = curvature_contraction(state, omega)
    jets = InducedJets(state)
    trc = jets.trace_c(omega)
    worst = 0.0
    w_grid = grid.fiber_w()
    for _ in range(samples):
        idx = tuple(rng.randint(0, n) for n in grid.base_shape)
        fib = tuple(rng.randint(0, n) for n in grid.fiber_shape)
        v = np.array([1.0 + 0j, w_grid[fib]])
        h_pt = state.h[(slice(None), slice(None)) + idx]
        m_pt = m_field[(slice(None), slice(None)) + idx]
        matrix_route = np.real(
            np.conj(v) @ (m_pt.T @ v) / (np.conj(v) @ (h_pt.T @ v))
        )
        jets_route = trc[idx + fib]
        worst = max(worst, abs(float(matrix_route) - float(jets_route)))
    return worst


def static_identity_residual(state: HermitianBundleState, omega: BaseMetric,
                             samples: int = 20, seed: int = 11) -> float:
    """Pointwise scalar/matrix flow identity with v sampled off the grid."""
    grid = state.grid
    rng = np.random.RandomState(seed)
    m_field = curvature_contraction(state, omega)
    h = state.h
    dz = lambda f: grid.d_dz(f, 0)
    dzb = lambda f: grid.d_dzbar(f, 0)
    dh = np.stack([np.stack([dz(h[i, j]) for j in range(2)]) for i in range(2)])
    ddbh = np.stack([np.stack([dz(dzb(h[i, j])) for j in range(2)])
                     for i in range(2)])
    worst = 0.0
    for _ in range(samples):
        idx = tuple(rng.randint(0, n) for n in grid.base_shape)
        v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        h_pt = h[(slice(None), slice(None)) + idx]
        dh_pt = dh[(slice(None), slice(None)) + idx]
        ddbh_pt = ddbh[(slice(None), slice(None)) + idx]
        g_scal = float(np.real(_base_ginv(omega, grid) * np.ones(grid.base_shape)[idx]))
        # scalar route: closed-form jets of log G in the chart v = (1, w)
        vv = np.array([1.0 + 0j, v[1] / v[0]])
        quad = lambda mat: np.conj(vv) @ (mat.T @ vv)
        g_val = float(np.real(quad(h_pt)))
        gz = quad(dh_pt)
        gzzb = float(np.real(quad(ddbh_pt)))
        gw = h_pt[1, 0] * np.conj(vv[0]) + h_pt[1, 1] * np.conj(vv[1])
        gzwb = dh_pt[0, 1] * vv[0] + dh_pt[1, 1] * vv[1]
        gwwb = float(np.real(h_pt[1, 1]))
        pzz = gzzb / g_val - abs(gz) ** 2 / g_val**2
        pzw = gzwb / g_val - np.conj(gw) * gz / g_val**2
        pww = gwwb / g_val - abs(gw) ** 2 / g_val**2
        scalar_route = g_scal * (np.real(pzz) - abs(pzw) ** 2 / pww)
        # matrix route of the same contraction, with the raw projective v
        m_pt = m_field[(slice(None), slice(None)) + idx]
        matrix_route = float(np.real(
            (np.conj(v) @ (m_pt.T @ v)) / (np.conj(v) @ (h_pt.T @ v))
        ))
        worst = max(worst, abs(scalar_route - matrix_route))
    return worst


# -- the matrix flow ------------------------------------------------------------


def hym_step(state: HermitianBundleState, omega: BaseMetric, lam: float,
             dt: float) -> HermitianBundleState:
    """First-order update dH = dt (M - lambda H), re-Hermitized, guarded."""
    m = curvature_contraction(state, omega)
    rhs = m - lam * state.h
    step = dt
    for _ in range(HYM_MAX_HALVINGS):
        cand = state.h + step * rhs
        cand = 0.5 * (cand + np.conj(np.swapaxes(cand, 0, 1)))
        tr = np.real(cand[0, 0] + cand[1, 1])
        det = np.real(cand[0, 0] * cand[1, 1] - cand[0, 1] * cand[1, 0])
        min_eig = float(np.min(tr / 2.0 - np.sqrt(np.maximum(tr**2 / 4 - det, 0.0))))
        if min_eig > EIG_FLOOR:
            return state.with_h(cand)
        step *= 0.5
    raise FlowStalled(0.0, step, {"min_eig": min_eig})


def run_hym(state: HermitianBundleState, omega: BaseMetric, lam: float,
            time_span: float, dt: float, snapshot_every: int = 0):
    """Integrate the matrix flow; returns (snapshots, final state)."""
    snaps = [(0.0, state)]
    t = 0.0
    k = 0
    current = state
    while t < time_span - 1e-12 * max(1.0, time_span):
        current = hym_step(current, omega, lam, dt)
        t += dt
        k += 1
        if snapshot_every and k % snapshot_every == 0:
            snaps.append((t, current))
    if snaps[-1][0] != t:
        snaps.append((t, current))
    return snaps, current


def equivalence_check(bundle_snaps, scalar_snaps) -> dict:
    """Sup-distance between induced weights of h(t) and the scalar flow phi(t).

    Both trajectories must start from the same induced weight; the residual
    is O(dt + h^2) and halves when both time steps halve.
    """
    residuals = []
    times = []
    scal = {round(t, 12): f for t, f in scalar_snaps}
    for t, st in bundle_snaps:
        key = round(t, 12)
        if key not in scal:
            continue
        induced = induced_weight(st)
        diff = float(np.max(np.abs(induced.psi - scal[key].psi)))
        residuals.append(diff)
        times.append(t)
    if not residuals:
        raise ConfigurationError("trajectories share no sample times")
    return {"times": times, "residuals": residuals, "max_residual": max(residuals)}


def hym_comparison_hook(scalar_field: MetricField, state: HermitianBundleState,
                        omega: BaseMetric) -> float:
    """Flow-monitor entry: residual between a scalar-flow weight and h."""
    if scalar_field.grid.fiber_kind != PROJECTIVE:
        raise ConfigurationError(
            "the HYM comparison hook needs a projective-bundle scenario"
        )
    induced = induced_weight(state)
    return float(np.max(np.abs(induced.psi - scalar_field.psi)))


# -- pushforward checks -----------------------------------------------------------


def fiber_s0(state: HermitianBundleState) -> np.ndarray:
    """Per-base-point S0 of the induced weight; equals 1 for rank 2."""
    jets = InducedJets(state)
    return state.grid.integrate_fiber(jets.pff) / (2.0 * np.pi)


def s1_coefficient(state: HermitianBundleState) -> np.ndarray:
    """pi_*(c1(O(1), phi_h)^2) coefficient on the base via fiber quadrature."""
    jets = InducedJets(state)
    coupling = np.abs(jets.pbf[0]) ** 2 / jets.pff
    c_coeff = np.real(jets.pbb[0, 0]) - coupling
    dens = jets.pff / (2.0 * np.pi)
    return 2.0 / (2.0 * np.pi) * state.grid.integrate_fiber(c_coeff * dens)


def det_h_curvature(state: HermitianBundleState) -> np.ndarray:
    """(1/2pi) d dbar log det h: the first Chern form of (E, h) on the base."""
    grid = state.grid
    det = real_checked(
        state.h[0, 0] * state.h[1, 1] - state.h[0, 1] * state.h[1, 0], "det h"
    )
    log_det = np.log(det)
    return np.real(grid.d_dz(grid.d_dzbar(log_det, 0), 0)) / (2.0 * np.pi)


def segre_crosscheck(state: HermitianBundleState, degrees=(0, 0)) -> dict:
    """Quadrature of the S1 integral against the exact Segre number.

    Periodic h represents a degree-0 bundle, so the quadrature side must
    match sum(degrees) = 0; nonzero abstract degrees enter only through the
    exact side (handled cohomologically by the classes module).
    """
    from .grid import tree_sum

    s1 = s1_coefficient(state)
    numeric = float(tree_sum(np.real(s1)) * state.grid.base_weight)
    exact = float(sum(degrees))
    return {"numeric": numeric, "exact": exact, "difference": numeric - exact}


# -- dumps -------------------------------------------------------------------------


def dump_bundle(state: HermitianBundleState, path):
    inter = np.stack([state.h.real, state.h.imag], axis=-1)
    write_array(path, inter)


def load_bundle(grid: GridSpec, path) -> HermitianBundleState:
    inter = read_array(path)
    h = inter[..., 0] + 1j * inter[..., 1]
    return HermitianBundleState(grid, h)
