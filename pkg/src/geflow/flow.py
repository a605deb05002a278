"""Explicit time integration of  d phi/dt = tr_omega c(phi) - lambda.

The right-hand side is a second-order quasilinear operator in the base
directions, so the default step obeys a parabolic CFL-style bound
dt = 0.2 h^2 / max eig(g^{-1}).  Integration is explicit (euler | rk4) with
a fiber-positivity guard: a step that leaves the admissible cone is retried
with half the step, at most ten times, then the flow reports itself stalled.

Monitored contracts along a run (slack = per-step tolerance):

  (a) the Donaldson functional L(phi_t, phi_0) never increases,
  (b) max (tr_omega c - lambda)^2 never increases,
  (c) sup |tr_omega c| <= C and sup |phi_t - phi_0| <= C t with C frozen
      at t = 0 (plus relative slack),
  (d) the heat identity (d/dt - Delta_omega) phidot = 0 holds to O(dt + h^2),
      estimated from consecutive right-hand sides.

Violations are recorded; anything beyond ten times its slack aborts the run.
All of these are conclusions of the continuous theory; the code only ever
measures them, it never assumes them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import ConfigurationError, ContractViolation, FlowStalled, NonAdmissibleError
from .fields import POSITIVITY_FLOOR, MetricField
from .functionals import donaldson_L, flow_rhs, ge_defect_field, lambda_constant
from .geometry import BaseMetric, laplacians

CSV_COLUMNS = (
    "t",
    "L",
    "defect",
    "sup_trc_minus_lambda",
    "sup_phi_drift",
    "min_fiber_eig",
    "heat_residual",
)

MAX_HALVINGS = 10


def cfl_dt(grid, omega: BaseMetric) -> float:
    h = 2.0 * np.pi / grid.points
    return 0.2 * h * h / omega.max_inverse_eig()


@dataclass
class FlowState:
    t: float
    field: MetricField
    dt: float
    step_index: int = 0


@dataclass
class MonitorReport:
    rows: list = dataclass_field(default_factory=list)
    violations: list = dataclass_field(default_factory=list)

    def series(self, name: str) -> np.ndarray:
        idx = CSV_COLUMNS.index(name)
        return np.array([row[idx] for row in self.rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([repr(float(x)) for x in row])


@dataclass
class FlowResult:
    final: MetricField
    lam: float
    report: MonitorReport
    snapshots: list  # (t, MetricField) pairs


def _attempt(field: MetricField, omega: BaseMetric, lam: float, dt: float,
             method: str, rhs0: np.ndarray) -> MetricField | None:
    """One explicit update; None signals a positivity-guard failure."""
    try:
        if method == "euler":
            candidate = field.shifted(dt * rhs0)
        elif method == "rk4":
            k1 = rhs0
            f2 = field.shifted(0.5 * dt * k1)
            k2 = flow_rhs(f2, omega, lam)
            f3 = field.shifted(0.5 * dt * k2)
            k3 = flow_rhs(f3, omega, lam)
            f4 = field.shifted(dt * k3)
            k4 = flow_rhs(f4, omega, lam)
            candidate = field.shifted(dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
        else:
            raise ConfigurationError(f"unknown method {method!r}")
    except NonAdmissibleError:
        return None
    if candidate.jets().fiber_positivity_margin() < POSITIVITY_FLOOR:
        return None
    return candidate


def step(state: FlowState, omega: BaseMetric, lam: float,
         method: str = "euler", rhs0: np.ndarray | None = None) -> FlowState:
    """Advance one accepted step, halving dt on guard failures (max 10)."""
    if rhs0 is None:
        rhs0 = flow_rhs(state.field, omega, lam)
    dt = state.dt
    for _ in range(MAX_HALVINGS):
        candidate = _attempt(state.field, omega, lam, dt, method, rhs0)
        if candidate is not None:
            return FlowState(state.t + dt, candidate, dt, state.step_index + 1)
        dt *= 0.5
    diag = {
        "sup_rhs": float(np.max(np.abs(rhs0))),
        "min_fiber_eig": state.field.jets().fiber_positivity_margin(),
        "step_index": state.step_index,
    }
    raise FlowStalled(state.t, dt, diag)


def run(field0: MetricField, omega: BaseMetric, time_span: float,
        dt: float | None = None, method: str = "euler",
        lam: float | None = None, slack: float | None = None,
        monitors: bool = True, heat_monitor: bool = True,
        snapshot_every: int = 0, hard_factor: float = 10.0) -> FlowResult:
    """Integrate the flow to ``time_span`` with runtime monitors.

    lambda is computed once from the initial weight and frozen (it is
    topological).  ``snapshot_every`` > 0 also stores intermediate fields.
    """
    field0.require_admissible()
    if dt is None:
        dt = cfl_dt(field0.grid, omega)
    if lam is None:
        lam = lambda_constant(field0, omega)
    if slack is None:
        slack = 1e-8 + 4.0 * dt * dt
    report = MonitorReport()
    snapshots = [(0.0, field0)]
    state = FlowState(0.0, field0, dt)

    rhs_prev = flow_rhs(field0, omega, lam)
    sup_rhs0 = float(np.max(np.abs(rhs_prev)))
    bound_c = (sup_rhs0 + abs(lam)) * 1.01 + 1e-12  # Prop-2.3-style constant
    prev_l = 0.0  # L(phi_0, phi_0)
    prev_maxsq = sup_rhs0**2

    if monitors:
        report.rows.append(
            (0.0, 0.0, float(np.max(ge_defect_field(field0, omega, lam))),
             sup_rhs0, 0.0, field0.jets().fiber_positivity_margin(), 0.0)
        )

    n_steps = 0
    while state.t < time_span - 1e-12 * max(1.0, time_span):
        n_steps += 1
        state = step(state, omega, lam, method, rhs0=rhs_prev)
        fld = state.field
        jets = fld.jets()
        rhs = flow_rhs(fld, omega, lam, jets)
        sup_rhs = float(np.max(np.abs(rhs)))
        drift = float(np.max(np.abs(fld.psi - field0.psi)))

        if monitors:
            l_now = donaldson_L(fld, field0, omega, lam)
            defect = float(np.sqrt(max(
                float(np.max(fld.grid.integrate_fiber(rhs * rhs * jets.pff))), 0.0
            )))
            if heat_monitor:
                lap_o, _ = laplacians(fld, omega, rhs, jets)
                heat_res = float(np.max(np.abs((rhs - rhs_prev) / state.dt - lap_o)))
            else:
                heat_res = 0.0
            row = (state.t, l_now, defect, sup_rhs, drift,
                   jets.fiber_positivity_margin(), heat_res)
            report.rows.append(row)

            _check(report, state.step_index, "donaldson_monotone",
                   l_now - prev_l, slack, hard_factor)
            _check(report, state.step_index, "sup_defect_monotone",
                   sup_rhs**2 - prev_maxsq, slack, hard_factor)
            _check(report, state.step_index, "trace_bound",
                   (sup_rhs + abs(lam)) - bound_c, slack, hard_factor)
            _check(report, state.step_index, "linear_drift_bound",
                   drift - bound_c * state.t, slack * max(1.0, state.t),
                   hard_factor)
            prev_l, prev_maxsq = l_now, sup_rhs**2
        rhs_prev = rhs
        if snapshot_every and state.step_index % snapshot_every == 0:
            snapshots.append((state.t, fld))

    if not snapshots or snapshots[-1][0] != state.t:
        snapshots.append((state.t, state.field))
    if n_steps == 0:
        snapshots = [(0.0, field0)]
    return FlowResult(state.field, lam, report, snapshots)


def _check(report: MonitorReport, step_index: int, name: str, excess: float,
           slack: float, hard_factor: float):
    if excess <= slack:
        return
    report.violations.append((step_index, name, float(excess)))
    if excess > hard_factor * slack:
        raise ContractViolation(name, excess, hard_factor * slack, step_index)


def uniqueness_probe(field0: MetricField, omega: BaseMetric, time_span: float,
                     dt: float | None = None, lam: float | None = None) -> dict:
    """Refinement probe certifying a unique limiting trajectory.

    Integrates with (euler, dt), (euler, dt/2) and (rk4, dt) and compares the
    endpoint weights; first-order convergence shows up as the euler errors
    against the rk4 reference halving under dt -> dt/2.
    """
    if dt is None:
        dt = cfl_dt(field0.grid, omega)
    if lam is None:
        lam = lambda_constant(field0, omega)
    kw = dict(monitors=False, lam=lam)
    e1 = run(field0, omega, time_span, dt, "euler", **kw).final
    e2 = run(field0, omega, time_span, 0.5 * dt, "euler", **kw).final
    r1 = run(field0, omega, time_span, dt, "rk4", **kw).final
    d_e1 = float(np.max(np.abs(e1.psi - r1.psi)))
    d_e2 = float(np.max(np.abs(e2.psi - r1.psi)))
    d_ee = float(np.max(np.abs(e1.psi - e2.psi)))
    ratio = d_e1 / d_e2 if d_e2 > 0 else float("inf")
    return {
        "max_divergence": max(d_e1, d_e2, d_ee),
        "euler_error_dt": d_e1,
        "euler_error_dt_half": d_e2,
        "refinement_ratio": ratio,
    }


def read_monitor_csv(path) -> list[dict]:
    """Parse a monitor CSV; raises ConfigurationError on malformed rows."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ConfigurationError(f"monitor CSV {path} has a bad header")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise ConfigurationError(
                    f"monitor CSV {path} truncated or ragged at line {lineno}"
                )
            try:
                rows.append({k: float(v) for k, v in zip(CSV_COLUMNS, row)})
            except ValueError as exc:
                raise ConfigurationError(
                    f"monitor CSV {path} has a non-numeric value at line {lineno}"
                ) from exc
    return rows
