"""Horizontal frame, geodesic curvature, Kodaira-Spencer action, Laplacians.

The central object is the geodesic curvature

    c_{alpha betabar} = phi_{alpha betabar}
                        - phi_{alpha jbar} phi^{i jbar} phi_{i betabar},

the horizontal block of i ddbar phi in the frame
delta/dz^alpha = d/dz^alpha - N^k_alpha d/dv^k with
N^k_alpha = phi_{alpha jbar} phi^{jbar k}.  With one fiber direction the
inverse fiber Hessian is a scalar reciprocal, guarded by a positivity floor.

Wedge products of (1,1)-forms are evaluated through their coefficient
matrices: for d forms A^(r) on d complex coordinates,

    A^(1) ^ ... ^ A^(d)
      = sum_{s,t in S_d} sgn(s) sgn(t) prod_r A^(r)[s(r), t(r)] * dVol,

with dVol the product of i dzeta^a ^ dzetabar^a.  This is exact pointwise
linear algebra, so the identity checks below carry 1e-10-level contracts.
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .errors import ConfigurationError, InternalConsistencyError
from .fields import JetField, MetricField
from .grid import GridSpec

IMAG_RESIDUE_TOL = 1e-10


def real_checked(values: np.ndarray, what: str, tol: float = IMAG_RESIDUE_TOL):
    """Assert a nominally real array has negligible imaginary residue."""
    if not np.iscomplexobj(values):
        return values
    scale = max(1.0, float(np.max(np.abs(values.real))))
    worst = float(np.max(np.abs(values.imag)))
    if worst > tol * scale:
        raise InternalConsistencyError(
            f"{what}: imaginary residue {worst:.3e} exceeds {tol:.1e} * {scale:.3e}"
        )
    return values.real


class BaseMetric:
    """Kahler form omega = i g_{alpha betabar} dz^alpha ^ dzbar^beta.

    For m = 1 the single coefficient may vary over the base grid; for m = 2
    the coefficient matrix must be constant (this keeps omega d-closed
    without any discrete exterior calculus).
    """

    def __init__(self, base_dim: int, coeff):
        self.base_dim = base_dim
        arr = np.asarray(coeff, dtype=complex)
        if base_dim == 1:
            if arr.ndim == 0:
                arr = arr.reshape(1, 1)
            elif arr.ndim == 2 and arr.shape[0] == arr.shape[1] == 1:
                pass
            else:
                # base-grid field g(z); store as (1, 1, Nx, Ny)
                arr = arr.reshape((1, 1) + arr.shape)
        else:
            if arr.shape != (2, 2):
                raise ConfigurationError("m = 2 base metric must be a constant 2x2 matrix")
        herm = np.max(np.abs(arr - np.conj(np.swapaxes(arr, 0, 1))))
        if herm > 1e-12:
            raise ConfigurationError("base metric coefficients must be Hermitian")
        self.mat = arr
        if self.base_dim == 1:
            if np.min(arr.real) <= 0:
                raise ConfigurationError("base metric must be positive")
        else:
            eig = np.linalg.eigvalsh(arr)
            if np.min(eig) <= 0:
                raise ConfigurationError("base metric must be positive definite")

    @property
    def is_field(self) -> bool:
        return self.mat.ndim > 2

    def aligned(self, grid: GridSpec) -> np.ndarray:
        """Coefficients broadcastable against (m, m, *grid.shape)."""
        m = self.base_dim
        tail = self.mat.shape[2:]
        pad = len(grid.shape) - len(tail)
        return self.mat.reshape((m, m) + tail + (1,) * pad)

    def inverse_aligned(self, grid: GridSpec) -> np.ndarray:
        m = self.base_dim
        if m == 1:
            return 1.0 / self.aligned(grid)
        inv = np.linalg.inv(self.mat)
        return inv.reshape((2, 2) + (1,) * len(grid.shape))

    def det(self) -> np.ndarray | float:
        if self.base_dim == 1:
            return np.real(self.mat[0, 0])
        return float(np.real(np.linalg.det(self.mat)))

    def max_inverse_eig(self) -> float:
        if self.base_dim == 1:
            return float(np.max(1.0 / np.real(self.mat[0, 0])))
        return float(np.max(np.linalg.eigvalsh(np.linalg.inv(self.mat))))

    def volume_coeff(self) -> np.ndarray | float:
        """Top coefficient of omega^m / m! with respect to dV_base."""
        if self.base_dim == 1:
            g = np.real(self.mat[0, 0])
            return g if not self.is_field else g
        return self.det()


def unit_base_metric(base_dim: int) -> BaseMetric:
    return BaseMetric(base_dim, np.eye(base_dim))


# -- wedge machinery -----------------------------------------------------------


def wedge_top_coeff(mats) -> np.ndarray:
    """Top-degree coefficient of a wedge of d (1,1)-forms on d coordinates.

    Each entry of ``mats`` is a (d, d, ...) coefficient array (broadcastable
    tails allowed).  Returns the coefficient with respect to the product of
    i dzeta^a ^ dzetabar^a over all coordinates.
    """
    mats = list(mats)
    d = mats[0].shape[0]
    if len(mats) != d:
        raise ConfigurationError(f"need exactly {d} forms for a top wedge, got {len(mats)}")
    total = 0.0
    idx = list(range(d))
    for sigma in permutations(idx):
        sgn_s = _perm_sign(sigma)
        for tau in permutations(idx):
            term = None
            for r in range(d):
                factor = mats[r][sigma[r], tau[r]]
                term = factor if term is None else term * factor
            total = total + sgn_s * _perm_sign(tau) * term
    return total


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def wedge_fiber_11(a_mat: np.ndarray, b_mat: np.ndarray, m: int) -> np.ndarray:
    """(alpha, betabar, v, vbar) component of A ^ B for (1,1)-forms on m+1 coords.

    Index m is the fiber coordinate.  Result indexes (alpha, beta) over the
    base; this is the integrand of fiber pushforwards producing (1,1)-forms.
    """
    v = m
    out = np.empty((m, m) + np.broadcast_shapes(a_mat.shape[2:], b_mat.shape[2:]),
                   dtype=complex)
    for a in range(m):
        for b in range(m):
            out[a, b] = (
                a_mat[a, b] * b_mat[v, v]
                + b_mat[a, b] * a_mat[v, v]
                - a_mat[a, v] * b_mat[v, b]
                - b_mat[a, v] * a_mat[v, b]
            )
    return out


def full_hessian(field: MetricField, jets: JetField | None = None) -> np.ndarray:
    """Coefficient matrix of i ddbar phi over all m+1 complex coordinates."""
    jets = jets or field.jets()
    m = field.grid.base_dim
    d = m + 1
    out = np.empty((d, d) + field.grid.shape, dtype=complex)
    out[:m, :m] = jets.pbb
    out[:m, m] = jets.pbf
    out[m, :m] = np.conj(jets.pbf)
    out[m, m] = jets.pff
    return out


def omega_extended(omega: BaseMetric, grid: GridSpec) -> np.ndarray:
    """Base Kahler form as a (1,1)-form on all coordinates (zero fiber block)."""
    m = grid.base_dim
    d = m + 1
    g = omega.aligned(grid)
    tail = np.broadcast_shapes(g.shape[2:], (1,) * len(grid.shape))
    out = np.zeros((d, d) + tail, dtype=complex)
    out[:m, :m] = g
    return out


# -- the section-1 tensors ------------------------------------------------------


class HorizontalForm:
    """Geodesic curvature with its companion fields at every grid point:
    c_{alpha betabar}, the lift coefficients N_alpha, and the pointwise
    Kodaira-Spencer norm |mu| (zero exactly on holomorphic lifts)."""

    def __init__(self, c, lift, mu, mu_norm):
        self.c = c
        self.lift = lift
        self.mu = mu
        self.mu_norm = mu_norm


def horizontal_form(field: MetricField, jets: JetField | None = None) -> HorizontalForm:
    jets = jets or field.jets()
    c = geodesic_curvature(field, jets)
    lift = horizontal_connection(field, jets)
    mu, mu_norm = kodaira_spencer_action(field, jets)
    return HorizontalForm(c, lift, mu, mu_norm)


def horizontal_connection(field: MetricField, jets: JetField | None = None) -> np.ndarray:
    """N_alpha = phi_{alpha vbar} / phi_{v vbar}, shape (m, *grid)."""
    jets = jets or field.jets()
    jets.require_positive()
    return jets.horizontal_lift_coeff()


def geodesic_curvature(field: MetricField, jets: JetField | None = None) -> np.ndarray:
    """c_{alpha betabar} over the grid, Hermitian by construction."""
    jets = jets or field.jets()
    jets.require_positive()
    coupling = np.einsum("a...,b...->ab...", jets.pbf, np.conj(jets.pbf)) / jets.pff
    return jets.pbb - coupling


def trace_c(field: MetricField, omega: BaseMetric,
            jets: JetField | None = None) -> np.ndarray:
    """tr_omega c(phi) = g^{alpha betabar} c_{alpha betabar}, a real field."""
    c = geodesic_curvature(field, jets)
    ginv = omega.inverse_aligned(field.grid)
    tr = np.einsum("ba...,ab...->...", ginv, c)
    return real_checked(tr, "trace of geodesic curvature")


def kodaira_spencer_action(field: MetricField, jets: JetField | None = None):
    """mu_alpha components and the pointwise norm |mu|.

    mu_alpha = -d/dvbar(N_alpha); sup |mu| is the holomorphy test for
    canonical liftings (zero exactly when every lift is holomorphic).
    """
    jets = jets or field.jets()
    jets.require_positive()
    mu = -jets.dvbar_horizontal()
    mu_norm = np.sqrt(np.sum(np.abs(mu) ** 2, axis=0))
    return mu, mu_norm


def laplacians(field: MetricField, omega: BaseMetric, f: np.ndarray,
               jets: JetField | None = None):
    """Horizontal and vertical Laplacians of a scalar grid function.

    Delta_omega f contracts ddbar f against the horizontal frame (including
    the N-corrections); Delta_phi f = phi^{v vbar} f_{v vbar}.
    """
    jets = jets or field.jets()
    jets.require_positive()
    grid = field.grid
    m = grid.base_dim
    fiber = m
    n_lift = jets.horizontal_lift_coeff()
    dbar_base = [grid.d_dzbar(f, b) for b in range(m)]
    dbar_fiber = grid.d_dzbar(f, fiber)
    f_bb = np.empty((m, m) + grid.shape, dtype=complex)
    for a in range(m):
        for b in range(m):
            f_bb[a, b] = grid.d_dz(dbar_base[b], a)
    f_bf = np.stack([grid.d_dz(dbar_fiber, a) for a in range(m)])
    f_fb = np.stack([grid.d_dz(dbar_base[b], fiber) for b in range(m)])
    f_ff = grid.d_dz(dbar_fiber, fiber)
    nbar = np.conj(n_lift)
    frame = (
        f_bb
        - np.einsum("b...,a...->ab...", nbar, f_bf)
        - np.einsum("a...,b...->ab...", n_lift, f_fb)
        + np.einsum("a...,b...,...->ab...", n_lift, nbar, f_ff)
    )
    ginv = omega.inverse_aligned(grid)
    lap_o = np.einsum("ba...,ab...->...", ginv, frame)
    lap_f = f_ff / jets.pff
    if not np.iscomplexobj(f):
        lap_o = real_checked(lap_o, "horizontal Laplacian")
        lap_f = real_checked(lap_f, "vertical Laplacian")
    return lap_o, lap_f


# -- identity residuals ---------------------------------------------------------


def _relative_sup(diff: np.ndarray, *scales: np.ndarray) -> float:
    top = float(np.max(np.abs(diff)))
    bottom = max([1.0] + [float(np.max(np.abs(s))) for s in scales])
    return top / bottom


def decomposition_residual(field: MetricField, jets: JetField | None = None) -> float:
    """Reconstruction error of the horizontal/vertical splitting of i ddbar phi.

    phi_{alpha betabar} must equal c_{alpha betabar}
    + N_alpha phi_{v vbar} conj(N_beta), and phi_{alpha vbar} must equal
    N_alpha phi_{v vbar}; both are algebraic in the jets.
    """
    jets = jets or field.jets()
    c = geodesic_curvature(field, jets)
    n_lift = jets.horizontal_lift_coeff()
    rebuilt_bb = c + np.einsum("a...,b...,...->ab...", n_lift, np.conj(n_lift), jets.pff)
    rebuilt_bf = n_lift * jets.pff
    r1 = _relative_sup(rebuilt_bb - jets.pbb, jets.pbb, c)
    r2 = _relative_sup(rebuilt_bf - jets.pbf, jets.pbf)
    return max(r1, r2)


def mixed_identity_residual(field: MetricField, omega: BaseMetric,
                            jets: JetField | None = None) -> float:
    """Residual of  tr_omega c * omega^m ^ (i ddbar phi)^n
                    = m/(n+1) * omega^{m-1} ^ (i ddbar phi)^{n+1}.

    Both sides are evaluated as top-degree coefficient fields; the identity
    is algebraic in the jets, so the residual contract is 1e-10.  It subsumes
    the equivalence tr_omega c = 0 iff (i ddbar phi)^{n+1} ^ omega^{m-1} = 0.
    """
    jets = jets or field.jets()
    grid = field.grid
    m = grid.base_dim
    hess = full_hessian(field, jets)
    omega_ext = omega_extended(omega, grid)
    tr = trace_c(field, omega, jets)
    lhs = tr * real_checked(
        wedge_top_coeff([omega_ext] * m + [hess]), "omega^m wedge MA"
    )
    rhs = (m / 2.0) * real_checked(
        wedge_top_coeff([omega_ext] * (m - 1) + [hess, hess]),
        "omega^{m-1} wedge MA^2",
    )
    return _relative_sup(lhs - rhs, lhs, rhs)
