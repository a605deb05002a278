"""Verification suites: every quantitative contract, one named check each.

Each suite runs on shipped desk-scale scenarios (m = n = 1, N = 16-32 unless
stated) and returns Check records; the CLI maps any failure to exit code 3.
The acceptance test module drives exactly these functions, so the CLI and
pytest agree on what "passing" means.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .classes import (
    build_ladder,
    c2_integral,
    form_identity_residual,
    integrate_gap,
    pe_split_specs,
    positivity_check,
    s_form,
    semistability_verdict,
    sub_lambda,
    thm_42_gap,
    thm_43_gap,
    thm_43_gap_oracle,
)
from .errors import ConfigurationError
from .fields import MetricField, random_admissible
from .flow import run, uniqueness_probe
from .functionals import first_variation_check, ge_defect, lambda_constant
from .geometry import (
    BaseMetric,
    decomposition_residual,
    mixed_identity_residual,
    trace_c,
    unit_base_metric,
)
from .grid import GridSpec
from .hym import (
    InducedJets,
    constant_bundle,
    diagonal_bundle,
    equivalence_check,
    fiber_s0,
    he_trace_check,
    induced_weight,
    lambda_f_norm,
    run_hym,
    static_identity_residual,
)
from .quasibundle import he_equivalence_test, normalize

SUITES = ("core", "classes", "hym", "appendix")


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    ok: bool
    direction: str = "<="

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"[{status}] {self.name}: value={self.value:.6e} "
                f"{self.direction} {self.threshold:.6e}")


def _upper(name, value, threshold) -> Check:
    return Check(name, float(value), float(threshold), float(value) <= threshold)


def _lower(name, value, threshold) -> Check:
    return Check(name, float(value), float(threshold),
                 float(value) >= threshold, direction=">=")


def _window(name, value, lo, hi) -> Check:
    ok = lo <= value <= hi
    return Check(f"{name}[{lo},{hi}]", float(value), float(hi), ok, "in")


# -- shared scenario builders ---------------------------------------------------


def _torus(n=16, m=1, derivative="stencil4"):
    return GridSpec(base_dim=m, points=n, derivative=derivative)


def _coupled_field(grid, q=0.4):
    x1 = grid.mesh(0) * np.ones(grid.shape)
    y1 = grid.mesh(2) * np.ones(grid.shape)
    psi = 0.05 * np.cos(x1 + y1) + 0.05 * np.cos(x1)
    return MetricField(grid, 2.0, psi, base_curvature=[[q]], label="torus-coupled")


def _product_decay_field(grid, eps=0.1, kappa=0.01):
    x1 = grid.mesh(0) * np.ones(grid.shape)
    return MetricField(grid, kappa, eps * np.cos(x1), label="torus-product")


def _surface_field(q_matrix, n=8, kappa=2.0, eps_fiber=0.1):
    grid = _torus(n, m=2)
    y2 = grid.mesh(4) * np.ones(grid.shape)
    return MetricField(grid, kappa, eps_fiber * np.cos(y2),
                       base_curvature=q_matrix, label="torus-m2")


# -- core suite -------------------------------------------------------------------


def checks_identity(seeds: int = 50) -> list[Check]:
    """Criterion 1: the three algebraic identities over seeded fields."""
    checks = []
    grid = _torus(16)
    omega = unit_base_metric(1)
    worst_dec, worst_mix = 0.0, 0.0
    for seed in range(seeds):
        field = random_admissible(grid, seed=seed, base_curvature=[[0.3]])
        worst_dec = max(worst_dec, decomposition_residual(field))
        worst_mix = max(worst_mix, mixed_identity_residual(field, omega))
    checks.append(_upper("identity.decomposition_max", worst_dec, 1e-10))
    checks.append(_upper("identity.mixed_top_degree_max", worst_mix, 1e-10))

    omega2 = unit_base_metric(2)
    rng = np.random.RandomState(1234)
    worst_form = 0.0
    shape = (2, 2, 8, 8, 8, 8)
    for _ in range(seeds):
        a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        herm = 0.5 * (a + np.conj(np.swapaxes(a, 0, 1)))
        worst_form = max(worst_form, form_identity_residual(herm, omega2))
    checks.append(_upper("identity.one_one_form_max", worst_form, 1e-11))
    return checks


def checks_flow_monotonicity() -> list[Check]:
    """Criteria 2 and 3: 500 monitored steps on the coupled scenario."""
    checks = []
    grid = _torus(16)
    omega = unit_base_metric(1)
    dt = 1e-3
    coupled = _coupled_field(grid)
    result = run(coupled, omega, time_span=0.5, dt=dt, monitors=True)
    checks.append(_upper("flow.monitor_violations", len(result.report.violations), 0))
    ell = result.report.series("L")
    slack = 1e-8 + 4.0 * dt * dt
    checks.append(_upper("flow.donaldson_increase_max",
                         float(np.max(np.diff(ell))), slack))
    sup_tr = result.report.series("sup_trc_minus_lambda")
    checks.append(_upper("flow.sup_defect_increase_max",
                         float(np.max(np.diff(sup_tr**2))), slack))
    c_bound = (sup_tr[0] + abs(result.lam)) * 1.01
    checks.append(_upper("flow.trace_bound_excess",
                         float(np.max(sup_tr + abs(result.lam))) - c_bound, 0.0))
    drift = result.report.series("sup_phi_drift")
    t_axis = result.report.series("t")
    checks.append(_upper("flow.linear_drift_excess",
                         float(np.max(drift - c_bound * t_axis)), 1e-10))
    return checks


def checks_defect_decay() -> list[Check]:
    """Criterion 4: heat-mode decay and the 1e-6 defect threshold at T = 40."""
    checks = []
    grid = _torus(16)
    omega = unit_base_metric(1)
    decay = _product_decay_field(grid)
    flow_out = run(decay, omega, time_span=40.0, lam=0.0, monitors=False)
    checks.append(_upper("flow.defect_at_T40",
                         ge_defect(flow_out.final, omega, lam=0.0), 1e-6))
    probe_a = run(decay, omega, time_span=1.0, lam=0.0, monitors=False)
    probe_b = run(decay, omega, time_span=3.0, lam=0.0, monitors=False)
    amp_a = float(np.max(np.abs(probe_a.final.psi)))
    amp_b = float(np.max(np.abs(probe_b.final.psi)))
    rate = np.log(amp_a / amp_b) / 2.0
    checks.append(_upper("flow.heat_rate_error", abs(rate - 0.25), 0.005))
    return checks


def checks_uniqueness() -> list[Check]:
    """Criterion 5: refinement consistency and bit-exact determinism."""
    checks = []
    grid = _torus(16)
    omega = unit_base_metric(1)
    probe = uniqueness_probe(_product_decay_field(grid, eps=0.1, kappa=2.0),
                             omega, time_span=1.0, dt=0.02, lam=0.0)
    checks.append(_window("flow.refinement_ratio", probe["refinement_ratio"],
                          1.7, 2.3))
    coupled = _coupled_field(grid)
    rerun_a = run(coupled, omega, time_span=0.1, dt=1e-3, monitors=False)
    rerun_b = run(coupled, omega, time_span=0.1, dt=1e-3, monitors=False)
    ident = float(np.max(np.abs(rerun_a.final.psi - rerun_b.final.psi)))
    checks.append(_upper("flow.determinism_bitexact", ident, 0.0))
    return checks


def checks_lambda_topological() -> list[Check]:
    """Criterion 6: metric independence of the topological constant."""
    checks = []
    grid = _torus(16)
    omega = unit_base_metric(1)
    product = MetricField(grid, 2.0, 0.2 * np.cos(grid.mesh(0) * np.ones(grid.shape)))
    checks.append(_upper("lambda.product_zero",
                         abs(lambda_constant(product, omega)), 1e-9))
    grid32 = _torus(32)
    vals = [lambda_constant(random_admissible(grid32, seed=s, amplitude=0.02,
                                              base_curvature=[[0.5]]), omega)
            for s in range(5)]
    spread = (max(vals) - min(vals)) / abs(np.mean(vals))
    checks.append(_upper("lambda.metric_independence_spread", spread, 1e-6))
    return checks


def checks_first_variation() -> list[Check]:
    """Criterion 7: Richardson finite difference of L against the integral."""
    omega = unit_base_metric(1)
    sgrid = _torus(16, derivative="spectral")
    worst_rel = 0.0
    for seed, kind in ((1, "base"), (2, "coupled"), (3, "product")):
        base = random_admissible(sgrid, seed=40 + seed, amplitude=0.05,
                                 base_curvature=[[0.3]])
        ref = random_admissible(sgrid, seed=50 + seed, amplitude=0.05,
                                base_curvature=[[0.3]])
        x1 = sgrid.mesh(0) * np.ones(sgrid.shape)
        y1 = sgrid.mesh(2) * np.ones(sgrid.shape)
        direction = {"base": np.cos(x1), "coupled": np.cos(x1 + y1),
                     "product": np.cos(x1) * np.cos(y1)}[kind]
        lam = lambda_constant(base, omega)
        _, _, rel = first_variation_check(
            lambda t: base.shifted(t * direction), lambda t: direction,
            ref, omega, 0.05, lam=lam)
        worst_rel = max(worst_rel, rel)
    return [_upper("first_variation.max_rel_error", worst_rel, 1e-4)]


def suite_core(seeds: int = 50) -> list[Check]:
    return (
        checks_identity(seeds)
        + checks_flow_monotonicity()
        + checks_defect_decay()
        + checks_uniqueness()
        + checks_lambda_topological()
        + checks_first_variation()
    )


# -- classes suite ------------------------------------------------------------------


def checks_surface_gaps() -> list[Check]:
    """Criterion 8: the two surface inequalities and the C2 positivity."""
    checks = []
    omega2 = unit_base_metric(2)
    quad_err = 1e-10

    lam_half = 0.7
    equality = _surface_field(lam_half * np.eye(2))
    checks.append(_upper("thm42.equality_abs_gap",
                         float(np.max(np.abs(thm_42_gap(equality, omega2)))), 1e-8))

    generic_q = np.array([[0.5, 0.2], [0.2, 1.1]])
    generic = _surface_field(generic_q)
    gap42 = thm_42_gap(generic, omega2)
    checks.append(_lower("thm42.min_pointwise_gap", float(np.min(gap42)), -1e-8))
    checks.append(_lower("thm42.integrated_margin",
                         integrate_gap(generic, gap42), 10 * quad_err))

    diag_q = np.array([[0.9, 0.0], [0.0, 1.1]])
    eq43 = _surface_field(diag_q)
    checks.append(_upper("thm43.equality_abs_gap",
                         float(np.max(np.abs(thm_43_gap(eq43, omega2)))), 1e-8))

    # strict side: small kappa keeps the fiber L2 defect per unit coupling
    # low while the C-form normalization (S0^-4) amplifies the CS defect
    small = _surface_field(diag_q, kappa=0.2)
    grid2 = small.grid
    x0 = grid2.mesh(0) * np.ones(grid2.shape)
    y2 = grid2.mesh(4) * np.ones(grid2.shape)
    varying = small.shifted(2e-3 * np.cos(x0 + y2))
    lam = lambda_constant(varying, omega2)
    tau = ge_defect(varying, omega2, lam)
    gap43 = np.real(thm_43_gap(varying, omega2))
    checks.append(_upper("thm43.ge_certificate_tau", tau, 1e-3))
    checks.append(_lower("thm43.min_pointwise_gap", float(np.min(gap43)),
                         -(1e-8 + 10 * tau)))
    cs = np.real(thm_43_gap_oracle(varying, omega2))
    checks.append(_lower("thm43.cauchy_schwarz_defect_strict",
                         float(np.max(cs)), 10 * quad_err))
    checks.append(_lower("thm43.integrated_gap", integrate_gap(varying, gap43),
                         -10 * quad_err))

    cor = _surface_field(np.array([[0.7, 0.1], [0.1, 1.3]]))
    checks.append(_lower("cor45.c2_integral", c2_integral(cor), 10 * quad_err))
    return checks


def checks_positivity() -> list[Check]:
    """Criterion 9: sampled positivity of S-forms plus the planted control."""
    checks = []
    grid1 = _torus(16)
    pos1 = random_admissible(grid1, seed=9, amplitude=0.02, base_curvature=[[0.8]])
    checks.append(_lower("positivity.s1_m1_min",
                         positivity_check(s_form(pos1, 1), 1, grid1.base_shape,
                                          samples=1000), 0.0))
    surf = _surface_field(np.array([[0.9, 0.15], [0.15, 1.1]]))
    bshape = surf.grid.base_shape
    checks.append(_lower("positivity.s1_m2_min",
                         positivity_check(s_form(surf, 1), 1, bshape,
                                          samples=1000), 0.0))
    s2 = np.real(s_form(surf, 2))
    checks.append(_lower("positivity.s2_m2_min",
                         positivity_check(s2, 2, bshape, samples=1000), 0.0))
    planted = np.broadcast_to(np.eye(2).reshape(2, 2, 1, 1), (2, 2, 8, 8)).copy()
    planted[0, 0, :4, :4] = -0.5
    checks.append(_upper("positivity.planted_indefinite_min",
                         positivity_check(planted, 1, (8, 8), samples=1000), -1e-6))
    return checks


def checks_semistability() -> list[Check]:
    """Criterion 11: split-bundle verdicts against the exact slope oracle."""
    checks = []
    total, subs = pe_split_specs((1, 1))
    verdict = semistability_verdict(total, subs, m=1)
    checks.append(Check("semistability.o1_o1_semistable", 1.0, 1.0,
                        verdict["semistable"], "=="))
    slope = float(2.0 * np.pi * Fraction(1))  # mu(E) = 1, volume unit 1
    checks.append(_upper("semistability.o1_o1_slope_match",
                         abs(sub_lambda(total, 1) - slope), 1e-12))
    total2, subs2 = pe_split_specs((1, -1))
    verdict2 = semistability_verdict(total2, subs2, m=1)
    checks.append(Check("semistability.o1_om1_destabilized", 1.0, 1.0,
                        not verdict2["semistable"], "=="))
    destab = [row for row in verdict2["subs"] if row["destabilizes"]]
    checks.append(Check("semistability.o1_om1_witness_is_slope1_sub",
                        float(len(destab)), 1.0,
                        len(destab) == 1 and destab[0]["label"] == "section:sub O(1)",
                        "=="))
    return checks


def checks_s0_topological() -> list[Check]:
    checks = []
    honest = random_admissible(_torus(16), seed=6, kappa=3.0 / (2 * np.pi),
                               amplitude=0.01)
    ladder = build_ladder(honest)
    checks.append(_upper("s0.integrality", abs(ladder.s0 - round(ladder.s0)), 1e-6))
    checks.append(_upper("s0.base_spread", ladder.s0_spread, 1e-9))
    return checks


def suite_classes() -> list[Check]:
    return (
        checks_surface_gaps()
        + checks_positivity()
        + checks_semistability()
        + checks_s0_topological()
    )


# -- hym suite ---------------------------------------------------------------------


def suite_hym() -> list[Check]:
    checks = []
    omega = unit_base_metric(1)
    grid = GridSpec(base_dim=1, points=16, fiber_kind="projective",
                    fiber_points=(32, 32))
    x1 = grid.mesh(0)[(...,) + (0, 0)] * np.ones(grid.base_shape)
    state = diagonal_bundle(grid, 0.25 * np.cos(x1), 0.1)

    checks.append(_upper("hym.static_identity_residual",
                         static_identity_residual(state, omega, samples=20), 1e-9))
    checks.append(_upper("hym.trace_correspondence",
                         he_trace_check(state, omega, samples=40), 1e-8))
    checks.append(_upper("hym.fiber_s0_deviation",
                         float(np.max(np.abs(fiber_s0(state) - 1.0))), 1e-8))

    from .hym import chart_weight_values

    phi0 = chart_weight_values(state, 0)
    phi1 = chart_weight_values(state, 1)
    w = grid.fiber_w()
    cocycle = float(np.max(np.abs(phi0 - phi1 - np.log(np.abs(w) ** 2))))
    checks.append(_upper("hym.chart_cocycle", cocycle, 1e-10))

    const = constant_bundle(grid, [[2.0, 0.3], [0.3, 1.0]])
    he_sup = float(np.max(np.abs(InducedJets(const).trace_c(omega))))
    checks.append(_upper("hym.hermitian_einstein_trace", he_sup, 1e-8))

    # equivalence residual halves under dt -> dt/2 (spectral spatial floor)
    sgrid = GridSpec(base_dim=1, points=16, fiber_kind="projective",
                     fiber_points=(32, 32), derivative="spectral")
    sx1 = sgrid.mesh(0)[(...,) + (0, 0)] * np.ones(sgrid.base_shape)
    sstate = diagonal_bundle(sgrid, 0.1 * np.cos(sx1))
    phi_init = induced_weight(sstate)
    residuals = []
    for dt in (0.04, 0.02):
        every = max(1, int(round(0.2 / dt)))
        snaps, _ = run_hym(sstate, omega, 0.0, 0.4, dt, snapshot_every=every)
        scal = run(phi_init, omega, 0.4, dt=dt, lam=0.0, monitors=False,
                   snapshot_every=every)
        residuals.append(equivalence_check(snaps, scal.snapshots)["max_residual"])
    checks.append(_window("hym.equivalence_refinement_ratio",
                          residuals[0] / residuals[1], 1.7, 2.3))

    relax = diagonal_bundle(grid, 0.05 * np.cos(x1))
    _, final = run_hym(relax, omega, 0.0, 40.0, 0.05)
    checks.append(_upper("hym.relaxation_lambda_f_T40",
                         lambda_f_norm(final, omega), 1e-6))

    from .hym import segre_crosscheck

    out = segre_crosscheck(diagonal_bundle(grid, 0.1 * np.cos(x1)))
    checks.append(_upper("hym.segre_deg0_quadrature", abs(out["numeric"]), 1e-6))
    return checks


# -- appendix suite ------------------------------------------------------------------


def suite_appendix(seeds: int = 50) -> list[Check]:
    checks = []
    grid = _torus(16)
    omega_b = unit_base_metric(1)

    x1 = grid.mesh(0) * np.ones(grid.shape)
    y1 = grid.mesh(2) * np.ones(grid.shape)
    weak_ge = MetricField(grid, 2.0, 0.2 * np.cos(x1), base_curvature=[[0.3]])
    report = he_equivalence_test(weak_ge, omega_b, tol=1e-8)
    checks.append(_upper("appendix.weak_ge_operator_sup",
                         report["operator_sup"], 1e-10))
    checks.append(Check("appendix.weak_ge_verdict", 1.0, 1.0,
                        report["hermitian_einstein"], "=="))

    planted = MetricField(grid, 2.0, 0.2 * np.cos(x1 + y1))
    report2 = he_equivalence_test(planted, omega_b, tol=1e-8)
    checks.append(Check("appendix.planted_mode_detected", 1.0, 1.0,
                        not report2["hermitian_einstein"], "=="))

    agreement_failures = 0
    for seed in range(seeds):
        field = random_admissible(grid, seed=seed, amplitude=0.04)
        try:
            he_equivalence_test(field, omega_b, tol=1e-8)
        except Exception:
            agreement_failures += 1
    checks.append(_upper("appendix.verdict_agreement_failures",
                         agreement_failures, 0))

    mixed = MetricField(grid, 2.0,
                        0.2 * np.cos(x1) + 0.1 * np.cos(grid.mesh(1) * np.ones(grid.shape)),
                        base_curvature=[[0.4]])
    normalized = normalize(mixed, omega_b)
    after = trace_c(normalized, omega_b)
    lam = float(np.mean(after))
    checks.append(_upper("appendix.normalized_trace_constant",
                         float(np.max(np.abs(after - lam))), 1e-6))
    twice = normalize(normalized, omega_b)
    checks.append(_upper("appendix.normalize_idempotent",
                         float(np.max(np.abs(twice.psi - normalized.psi))), 1e-10))
    checks.append(_upper("appendix.post_normalize_defect",
                         ge_defect(normalized, omega_b, lam=lam), 1e-6))
    return checks


def run_suite(name: str) -> list[Check]:
    if name == "core":
        return suite_core()
    if name == "classes":
        return suite_classes()
    if name == "hym":
        return suite_hym()
    if name == "appendix":
        return suite_appendix()
    raise ConfigurationError(f"unknown suite {name!r}; choose from {SUITES}")
