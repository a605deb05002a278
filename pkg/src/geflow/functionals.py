"""Energies, the Donaldson-type functional, topological constant, GE defect.

The two primitive energies are fiberwise integrals

    E(phi, psi)  = 1/(n+1) int_{X/M} (phi - psi)
                     sum_{k=0}^{n}   (i ddbar phi)^k ^ (i ddbar psi)^{n-k}
    E1(phi, psi) = 1/(n+2) int_{X/M} (phi - psi)
                     sum_{k=0}^{n+1} (i ddbar phi)^k ^ (i ddbar psi)^{n+1-k}

(a function and a (1,1)-form on the base), combined into

    L(phi, psi) = int_M (lambda/m * E ^ omega - 1/(n+1) * E1) ^ omega^{m-1}/(m-1)!

whose critical points are exactly the geodesic-Einstein weights.  The
topological constant is

    lambda = 2 pi m/(n+1) * ([omega]^{m-1} c1(L)^{n+1}) / ([omega]^m c1(L)^n),

computed by quadrature of top-degree coefficients; it does not depend on the
weight, only on the scenario, and flows must freeze it at t = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateScenarioError
from .fields import MetricField
from .geometry import (
    BaseMetric,
    full_hessian,
    omega_extended,
    real_checked,
    trace_c,
    wedge_fiber_11,
    wedge_top_coeff,
)

TWO_PI = 2.0 * np.pi


def ma_volume_density(field: MetricField, omega: BaseMetric, jets=None) -> np.ndarray:
    """Coefficient of (i ddbar phi)^n ^ omega^m / m! over the total space."""
    jets = jets or field.jets()
    hess = full_hessian(field, jets)
    ext = omega_extended(omega, field.grid)
    m = field.grid.base_dim
    coeff = wedge_top_coeff([hess] + [ext] * m) / float(math.factorial(m))
    return real_checked(coeff, "Monge-Ampere volume density")


def lambda_constant(field: MetricField, omega: BaseMetric) -> float:
    """Topological constant of the scenario, by trapezoidal quadrature.

    Any admissible representative gives the same value up to grid error;
    the denominator must be positive (relative ampleness).
    """
    field.require_admissible()
    grid = field.grid
    m = grid.base_dim
    jets = field.jets()
    hess = full_hessian(field, jets)
    ext = omega_extended(omega, grid)
    num_coeff = real_checked(
        wedge_top_coeff([hess, hess] + [ext] * (m - 1)), "lambda numerator"
    )
    den_coeff = real_checked(
        wedge_top_coeff([hess] + [ext] * m), "lambda denominator"
    )
    num = grid.integrate_total(num_coeff) / TWO_PI ** 2
    den = grid.integrate_total(den_coeff) / TWO_PI
    if den <= 0:
        raise DegenerateScenarioError(
            f"([omega]^m c1(L)^n) quadrature is {den:.6e} <= 0; "
            "scenario violates relative ampleness"
        )
    return float(TWO_PI * m / 2.0 * num / den)


def energy_E(field: MetricField, ref: MetricField) -> np.ndarray:
    """Monge-Ampere energy E(phi, psi) as a real field on the base."""
    field.require_compatible(ref)
    diff = field.relative_to(ref)
    pff_sum = field.jets().pff + ref.jets().pff
    return 0.5 * field.grid.integrate_fiber(diff * pff_sum)


def energy_E1(field: MetricField, ref: MetricField) -> np.ndarray:
    """Degree-(n+1) energy E1(phi, psi) as a (1,1)-coefficient field on the base."""
    field.require_compatible(ref)
    grid = field.grid
    m = grid.base_dim
    diff = field.relative_to(ref)
    a = full_hessian(field)
    b = full_hessian(ref)
    mixed = (
        wedge_fiber_11(a, a, m)
        + wedge_fiber_11(a, b, m)
        + wedge_fiber_11(b, b, m)
    ) / 3.0
    return grid.integrate_fiber(diff * mixed)


def _base_aligned(omega: BaseMetric, grid) -> np.ndarray:
    m = omega.base_dim
    tail = omega.mat.shape[2:]
    pad = 2 * grid.base_dim - len(tail)
    return omega.mat.reshape((m, m) + tail + (1,) * pad)


def donaldson_L(field: MetricField, ref: MetricField, omega: BaseMetric,
                lam: float | None = None) -> float:
    """The Donaldson-type functional L(phi, psi); L(phi, phi) = 0."""
    if lam is None:
        lam = lambda_constant(field, omega)
    grid = field.grid
    m = grid.base_dim
    e0 = energy_E(field, ref)
    e1 = energy_E1(field, ref)
    g = _base_aligned(omega, grid)
    if m == 1:
        integrand = lam * e0 * np.real(g[0, 0]) - 0.5 * np.real(e1[0, 0])
    else:
        det_g = omega.det()
        e1_wedge_g = real_checked(
            e1[0, 0] * g[1, 1] + e1[1, 1] * g[0, 0]
            - e1[0, 1] * g[1, 0] - e1[1, 0] * g[0, 1],
            "E1 wedge omega",
        )
        integrand = (lam / 2.0) * e0 * 2.0 * det_g - 0.5 * e1_wedge_g
    return float(grid.integrate_base(integrand))


def flow_rhs(field: MetricField, omega: BaseMetric, lam: float, jets=None) -> np.ndarray:
    """tr_omega c(phi) - lambda, the right-hand side of the flow."""
    return trace_c(field, omega, jets) - lam


def variation_rhs(field: MetricField, phidot: np.ndarray, omega: BaseMetric,
                  lam: float) -> float:
    """-int_X phidot (tr_omega c - lambda) (i ddbar phi)^n ^ omega^m/m!."""
    jets = field.jets()
    dens = ma_volume_density(field, omega, jets)
    integrand = phidot * flow_rhs(field, omega, lam, jets) * dens
    return -float(grid_total(field, integrand))


def grid_total(field: MetricField, values: np.ndarray) -> float:
    return float(np.real(field.grid.integrate_total(values)))


def first_variation_check(path, phidot, ref: MetricField, omega: BaseMetric,
                          t0: float, lam: float | None = None,
                          delta: float = 1e-2):
    """Directional derivative of L versus the closed-form first variation.

    ``path(t)`` yields the weight at time t, ``phidot(t)`` its analytic
    t-derivative (a grid array).  The left side is a centered difference in
    t, Richardson-extrapolated over steps delta and delta/2; the right side
    is the independent curvature integral.  Returns (lhs, rhs, relative
    error).
    """
    if lam is None:
        lam = lambda_constant(path(t0), omega)

    def centered(step):
        up = donaldson_L(path(t0 + step), ref, omega, lam)
        dn = donaldson_L(path(t0 - step), ref, omega, lam)
        return (up - dn) / (2.0 * step)

    d1 = centered(delta)
    d2 = centered(0.5 * delta)
    lhs = (4.0 * d2 - d1) / 3.0
    rhs = variation_rhs(path(t0), phidot(t0), omega, lam)
    rel = abs(lhs - rhs) / (abs(rhs) + 1e-12)
    return lhs, rhs, rel


def ge_defect_field(field: MetricField, omega: BaseMetric, lam: float) -> np.ndarray:
    """Per-base-point defect: sqrt of the fiber L2 norm of tr c - lambda."""
    jets = field.jets()
    integrand = flow_rhs(field, omega, lam, jets) ** 2 * jets.pff
    per_base = field.grid.integrate_fiber(integrand)
    return np.sqrt(np.maximum(per_base, 0.0))


def ge_defect(field: MetricField, omega: BaseMetric, lam: float | None = None) -> float:
    """Approximate-geodesic-Einstein defect (zero exactly at GE weights)."""
    if lam is None:
        lam = lambda_constant(field, omega)
    return float(np.max(ge_defect_field(field, omega, lam)))


@dataclass
class FunctionalReport:
    """Snapshot of the energy layer for one weight against a reference."""

    lam: float
    donaldson: float
    defect: float
    energy_min: float
    energy_max: float
    defect_max_base: float

    def to_json(self) -> str:
        payload = {
            "lambda": self.lam,
            "L": self.donaldson,
            "defect": self.defect,
            "extrema": {
                "E_min": self.energy_min,
                "E_max": self.energy_max,
                "defect_max": self.defect_max_base,
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def functional_report(field: MetricField, ref: MetricField, omega: BaseMetric,
                      lam: float | None = None) -> FunctionalReport:
    if lam is None:
        lam = lambda_constant(field, omega)
    e0 = energy_E(field, ref)
    dd = ge_defect_field(field, omega, lam)
    return FunctionalReport(
        lam=float(lam),
        donaldson=donaldson_L(field, ref, omega, lam),
        defect=float(np.max(dd)),
        energy_min=float(np.min(e0)),
        energy_max=float(np.max(e0)),
        defect_max_base=float(np.max(dd)),
    )
