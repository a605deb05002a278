"""Fiberwise characteristic forms, inequality gaps, and semistability.

S-forms are fiber integrals of powers of the curvature,

    S_k(L, phi) = int_{X/M} (i/2pi ddbar phi)^{n+k}
                = binom(n+k, k)/(2pi)^k int_{X/M} c(phi)^k omega_F^n,

with omega_F the normalized vertical form; the second expression follows
from the horizontal/vertical splitting and is the production route here
(tests check it against direct wedge quadrature of the full Hessian).
C-forms invert the total S-series grade by grade; through degree 2,

    C0 = 1/S0,  C1 = -S1/S0^2,  C2 = (S1^2 - S0 S2)/S0^3.

The two inequality gaps of the surface case (m = 2) and the numerical
positivity of int_M C2 are evaluated pointwise.  Sub-fibration slopes are
exact rational arithmetic: for a split rank-2 bundle over a curve the
sections of the projectivization correspond to quotient line bundles, whose
degrees enter with the quotient-convention sign (fixed empirically against
fiber quadrature; see the hym tests).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .errors import ConfigurationError, DegenerateScenarioError
from .fields import MetricField
from .functionals import lambda_constant
from .geometry import (
    BaseMetric,
    full_hessian,
    geodesic_curvature,
    real_checked,
    wedge_fiber_11,
    wedge_top_coeff,
)

TWO_PI = 2.0 * np.pi


def wedge2_base(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Coefficient of A ^ B for (1,1)-forms on a 2-dimensional base."""
    return (
        a[0, 0] * b[1, 1] + a[1, 1] * b[0, 0] - a[0, 1] * b[1, 0] - a[1, 0] * b[0, 1]
    )


@dataclass
class ClassLadder:
    """S- and C-forms of one weight: grade 0 scalars, grade 1 matrix fields,
    grade 2 (m = 2 only) scalar density fields on the base."""

    s0: float
    s0_spread: float
    s_forms: dict
    c_forms: dict

    def to_json(self) -> str:
        payload = {
            "S0": self.s0,
            "S0_relative_spread": self.s0_spread,
            "grades": sorted(self.s_forms),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def vertical_density(field: MetricField) -> np.ndarray:
    """omega_F^n coefficient against i dv ^ dvbar: phi_{v vbar} / 2pi."""
    return field.jets().pff / TWO_PI


def s_form(field: MetricField, k: int):
    """S_k(L, phi) per base point via the splitting/binomial route.

    k = 0 returns the scalar fiber volume field (topological: constant over
    the base); k = 1 an (m, m) coefficient field; k = 2 (m = 2 only) the
    scalar coefficient against the base volume element dV.
    """
    grid = field.grid
    m = grid.base_dim
    if k < 0 or k > m:
        raise ConfigurationError(f"S-form grade k={k} must lie in [0, {m}]")
    field.require_admissible()
    dens = vertical_density(field)
    if k == 0:
        return grid.integrate_fiber(dens)
    c = geodesic_curvature(field)
    scale = comb(1 + k, k) / TWO_PI**k
    if k == 1:
        return scale * grid.integrate_fiber(c * dens)
    pair = real_checked(wedge2_base(c, c), "c(phi)^2 coefficient")
    return scale * grid.integrate_fiber(pair * dens)


def s_form_direct(field: MetricField, k: int):
    """Direct wedge-quadrature route (the independent test oracle)."""
    grid = field.grid
    m = grid.base_dim
    hess = full_hessian(field)
    if k == 0:
        return grid.integrate_fiber(hess[m, m].real) / TWO_PI
    if k == 1:
        mixed = wedge_fiber_11(hess, hess, m)
        return grid.integrate_fiber(mixed) / TWO_PI**2
    top = real_checked(wedge_top_coeff([hess] * 3), "MA^3 coefficient")
    return grid.integrate_fiber(top) / TWO_PI**3


def build_ladder(field: MetricField) -> ClassLadder:
    m = field.grid.base_dim
    s = {k: s_form(field, k) for k in range(m + 1)}
    s0_field = np.real(s[0])
    s0 = float(np.mean(s0_field))
    if s0 <= 0:
        raise DegenerateScenarioError(f"S0 = {s0:.6e} <= 0")
    spread = float((np.max(s0_field) - np.min(s0_field)) / abs(s0))
    c = invert_ladder(s, m)
    return ClassLadder(s0=s0, s0_spread=spread, s_forms=s, c_forms=c)


def c_forms(ladder: ClassLadder) -> dict:
    """C-forms of a built ladder (grade-by-grade series inverse)."""
    return dict(ladder.c_forms)


def invert_ladder(s_forms: dict, m: int) -> dict:
    """Grade-by-grade inverse of the total S-series, C = 1/S."""
    s0 = s_forms[0]
    if np.min(np.real(s0)) <= 0:
        raise DegenerateScenarioError("series inversion needs S0 > 0")
    c = {0: 1.0 / s0}
    if m >= 1:
        c[1] = -s_forms[1] / s0**2
    if m >= 2:
        s1_sq = wedge2_base(s_forms[1], s_forms[1])
        c[2] = (s1_sq - s0 * s_forms[2]) / s0**3
    return c


def invert_series_exact(s: list[Fraction], degree: int) -> list[Fraction]:
    """Exact rational inversion of a scalar power series (unit test hook)."""
    if s[0] == 0:
        raise DegenerateScenarioError("series inversion needs S0 != 0")
    c = [Fraction(1, 1) / s[0]]
    for k in range(1, degree + 1):
        acc = Fraction(0, 1)
        for j in range(1, k + 1):
            sj = s[j] if j < len(s) else Fraction(0, 1)
            acc += sj * c[k - j]
        c.append(-acc / s[0])
    return c


# -- positivity sampling ---------------------------------------------------------


def positivity_check(form, grade: int, base_shape, samples: int = 1000,
                     seed: int = 2024) -> float:
    """Minimum of the positivity pairing over seeded random tangent tuples.

    For a (1,1)-form the pairing is v^dagger A v; for a (2,2)-form on a
    surface it is coeff * |det V|^2 with V the tuple matrix.  Tuples with
    condition number above 1e8 are resampled (degenerate directions say
    nothing about positivity).
    """
    rng = np.random.RandomState(seed)
    base_shape = tuple(base_shape)
    worst = np.inf
    for _ in range(samples):
        idx = tuple(rng.randint(0, n) for n in base_shape)
        if grade == 1:
            mdim = form.shape[0]
            vecs = _sample_tuple(rng, mdim, 1)
            a = np.array([[form[(i, j) + idx] for j in range(mdim)]
                          for i in range(mdim)])
            val = float(np.real(np.conj(vecs[:, 0]) @ a @ vecs[:, 0]))
        elif grade == 2:
            vecs = _sample_tuple(rng, 2, 2)
            det_sq = abs(np.linalg.det(vecs)) ** 2
            val = float(np.real(form[idx])) * det_sq
        else:
            raise ConfigurationError("positivity sampling handles grades 1 and 2")
        worst = min(worst, val)
    return worst


def _sample_tuple(rng, dim: int, count: int) -> np.ndarray:
    for _ in range(100):
        v = rng.standard_normal((dim, count)) + 1j * rng.standard_normal((dim, count))
        if count == 1:
            if np.linalg.norm(v) > 1e-8:
                return v
            continue
        if np.linalg.cond(v) <= 1e8:
            return v
    raise ConfigurationError("could not sample a well-conditioned tangent tuple")


# -- the surface inequalities ----------------------------------------------------


def _require_surface(field: MetricField):
    if field.grid.base_dim != 2:
        raise ConfigurationError("this inequality check needs a 2-dimensional base")


def thm_42_gap(field: MetricField, omega: BaseMetric, tau: float = 0.0,
               lam: float | None = None) -> np.ndarray:
    """Pointwise gap of the S2 bound at a geodesic-Einstein weight.

    gap = (n+1)(n+2)/(8 pi^2 m^2) * lambda^2 S0 * omega^m  -  S2 ^ omega^{m-2},
    as coefficient fields against dV; nonnegative up to 1e-8 + O(tau) when
    the weight is GE within defect tau, zero iff c(phi) = (lambda/m) omega.
    """
    _require_surface(field)
    if lam is None:
        lam = lambda_constant(field, omega)
    ladder = build_ladder(field)
    s2 = np.real(ladder.s_forms[2])
    det_g = omega.det()
    rhs = (2.0 * 3.0 / (8.0 * np.pi**2 * 4.0)) * lam**2 * ladder.s0 * 2.0 * det_g
    return rhs - s2


def thm_43_gap(field: MetricField, omega: BaseMetric, tau: float = 0.0) -> np.ndarray:
    """Pointwise gap -(n C1^2 - 2(n+1) C0 C2) ^ omega^{m-2} (n = 1, m = 2).

    Zero exactly where c(phi) is fiberwise constant; positive where the
    fiber distribution of c(phi) genuinely spreads (Cauchy-Schwarz).
    """
    _require_surface(field)
    ladder = build_ladder(field)
    c = ladder.c_forms
    expr = wedge2_base(c[1], c[1]) - 4.0 * c[0] * c[2]
    return -np.real(expr)


def thm_43_gap_oracle(field: MetricField, omega: BaseMetric) -> np.ndarray:
    """Independent Cauchy-Schwarz route to the same gap via fiber quadrature.

    Uses S0 * pi_*(|c|^2_omega omega_F) - |pi_*(c omega_F)|^2_omega scaled by
    the constants of the C-form expansion.
    """
    _require_surface(field)
    grid = field.grid
    dens = vertical_density(field)
    c = geodesic_curvature(field)
    ginv_b = omega.inverse_aligned(grid)
    csq = np.einsum("ba...,ad...,dc...,cb...->...", ginv_b, c, ginv_b, c)
    csq = real_checked(csq, "|c|^2_omega")
    push_c = grid.integrate_fiber(c * dens)
    push_csq = grid.integrate_fiber(csq * dens)
    s0 = grid.integrate_fiber(dens)
    ginv_base = np.linalg.inv(omega.mat).reshape((2, 2) + (1,) * (push_c.ndim - 2))
    norm_push = np.einsum("ba...,ad...,dc...,cb...->...",
                          ginv_base, push_c, ginv_base, push_c)
    norm_push = real_checked(norm_push, "|push c|^2_omega")
    det_g = omega.det()
    scale = (3.0 * 4.0) / (4.0 * np.pi**2 * 2.0)  # (n+2)(n+1)^2 / (4 pi^2 m(m-1))
    return -(scale / np.real(s0) ** 4) * (norm_push - np.real(s0) * push_csq) * 2.0 * det_g


def form_identity_residual(alpha: np.ndarray, omega: BaseMetric) -> float:
    """Residual of m(m-1) a^a^omega^{m-2} = ((tr a)^2 - |a|^2) omega^m, m = 2.

    Pure pointwise linear algebra; contract 1e-11.
    """
    if omega.base_dim != 2:
        raise ConfigurationError("the (1,1)-form identity check needs m = 2")
    lhs = 2.0 * wedge2_base(alpha, alpha)
    gi = np.linalg.inv(omega.mat)
    gi = gi.reshape((2, 2) + (1,) * (alpha.ndim - 2))
    tr = np.einsum("ba...,ab...->...", gi, alpha)
    norm = np.einsum("ba...,ad...,dc...,cb...->...", gi, alpha, gi, alpha)
    rhs = (tr * tr - norm) * 2.0 * omega.det()
    diff = np.max(np.abs(lhs - rhs))
    scale = max(1.0, float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))))
    return float(diff) / scale


def integrate_gap(field: MetricField, gap: np.ndarray) -> float:
    """Base integral of a dV-coefficient field (for the integrated bounds)."""
    return float(field.grid.integrate_base(np.real(gap)))


def c2_integral(field: MetricField) -> float:
    """int_M C2(L, phi): strictly positive at GE weights on surfaces."""
    ladder = build_ladder(field)
    return float(field.grid.integrate_base(np.real(ladder.c_forms[2])))


# -- sub-fibrations and nonlinear semistability -----------------------------------


@dataclass(frozen=True)
class SubFibrationSpec:
    """Intersection data of one sub-fibration.

    ``numerator`` is ([omega]^{m-1} c1(L)^{n'+1})[Y] and ``denominator`` is
    ([omega]^m c1(L)^{n'})[Y], both in units where the base omega-volume is
    the rational ``volume`` (the 2 pi factors cancel in all comparisons).
    """

    label: str
    fiber_dim: int
    numerator: Fraction
    denominator: Fraction

    def __post_init__(self):
        if self.denominator <= 0:
            raise ConfigurationError(
                f"sub-fibration {self.label}: denominator intersection number "
                "must be positive"
            )


def sub_lambda_ratio(spec: SubFibrationSpec, m: int) -> Fraction:
    """lambda_Y in units of 2 pi: m/(n'+1) * numerator/denominator."""
    return Fraction(m, spec.fiber_dim + 1) * spec.numerator / spec.denominator


def sub_lambda(spec: SubFibrationSpec, m: int) -> float:
    return float(2.0 * np.pi * sub_lambda_ratio(spec, m))


def semistability_verdict(total: SubFibrationSpec, subs: list[SubFibrationSpec],
                          m: int = 1) -> dict:
    """Nonlinear semistability: lambda_Y >= lambda_X for every sub-fibration."""
    lam_x = sub_lambda_ratio(total, m)
    rows = []
    ok = True
    for spec in subs:
        lam_y = sub_lambda_ratio(spec, m)
        stable = lam_y >= lam_x  # exact rational comparison
        ok = ok and stable
        rows.append({
            "label": spec.label,
            "lambda_over_2pi": lam_y,
            "destabilizes": not stable,
        })
    return {
        "semistable": ok,
        "lambda_X_over_2pi": lam_x,
        "subs": rows,
    }


def pe_split_specs(degrees: tuple[int, int], volume: Fraction | int = 1):
    """Sub-fibration data for P(O(a) + O(b)) over a curve.

    The whole space has n' = 1 with c1(L)^2 pushing to deg E = a + b
    (quotient Segre convention).  Each line summand O(d_i) gives a section
    whose L-restriction is the complementary quotient O(d_j), so the
    numerator is d_j.
    """
    a, b = degrees
    vol = Fraction(volume)
    total = SubFibrationSpec("P(E)", 1, Fraction(a + b), vol)
    subs = [
        total,
        SubFibrationSpec(f"section:sub O({a})", 0, Fraction(b), vol),
        SubFibrationSpec(f"section:sub O({b})", 0, Fraction(a), vol),
    ]
    return total, subs
