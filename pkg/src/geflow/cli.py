"""Command-line entry point.

    geflow <subcommand> --config <path> [--out <dir>] [--suite <name>]

Subcommands: flow (integrate with monitors, write CSV + field dumps),
verify (run a property suite), classes / hym / appendix (module reports),
report (monitor CSV -> plot-ready long CSV).  Exit codes: 0 success,
2 configuration problem, 3 numerical contract violation, 4 stalled flow.

GEFLOW_THREADS, when set, caps the worker threads of the array backend;
results are bit-identical for any value (all reductions are fixed-order).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    ContractViolation,
    FieldFormatError,
    FlowStalled,
    GeflowError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONTRACT = 3
EXIT_STALLED = 4


def _cap_threads():
    cap = os.environ.get("GEFLOW_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geflow",
        description="geodesic-Einstein flows and characteristic forms "
                    "on model fibrations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("flow", True), ("verify", False), ("classes", True),
        ("hym", True), ("appendix", True), ("report", True),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config,
                       help="scenario TOML (for report: the monitor CSV)")
        p.add_argument("--out", default=".", help="output directory")
        if name == "verify":
            p.add_argument("--suite", required=True,
                           choices=("core", "classes", "hym", "appendix"))
    return parser


def _emit_json(payload: dict, out_dir: Path, filename: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)
    (out_dir / filename).write_text(text + "\n", encoding="utf-8")
    print(text)


def _jsonable(obj):
    import fractions

    if isinstance(obj, fractions.Fraction):
        return {"num": obj.numerator, "den": obj.denominator}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def cmd_flow(args) -> int:
    from .fields import dump_field
    from .flow import run
    from .scenarios import initial_field, parse_scenario, scenario_lambda

    scenario = parse_scenario(args.config)
    field0 = initial_field(scenario)
    lam = scenario_lambda(scenario, field0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run(field0, scenario.base_metric, scenario.time_span,
                 dt=scenario.flow_dt(), method=scenario.method, lam=lam)
    result.report.to_csv(out_dir / "monitors.csv")
    dump_field(field0, out_dir / "initial.gefld")
    dump_field(result.final, out_dir / "final.gefld")
    summary = {
        "lambda": lam,
        "steps": len(result.report.rows) - 1,
        "violations": result.report.violations,
        "final_defect": result.report.rows[-1][2] if result.report.rows else None,
    }
    _emit_json(summary, out_dir, "flow_summary.json")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suite

    checks = run_suite(args.suite)
    failed = 0
    for check in checks:
        print(check.line())
        failed += 0 if check.ok else 1
    print(f"suite '{args.suite}': {len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CONTRACT


def cmd_classes(args) -> int:
    from .classes import (build_ladder, integrate_gap, pe_split_specs,
                          semistability_verdict, thm_42_gap, thm_43_gap)
    from .functionals import lambda_constant
    from .scenarios import initial_field, parse_scenario

    scenario = parse_scenario(args.config)
    field = initial_field(scenario)
    ladder = build_ladder(field)
    payload = {
        "S0": ladder.s0,
        "S0_relative_spread": ladder.s0_spread,
        "S_integrals": _form_integrals(field, ladder.s_forms),
        "C_integrals": _form_integrals(field, ladder.c_forms),
        "gap_minima": None,
        "verdict": None,
    }
    if scenario.base_dim == 2:
        omega = scenario.base_metric
        lam = lambda_constant(field, omega)
        payload["gap_minima"] = {
            "thm42": float(np.min(np.real(thm_42_gap(field, omega, lam=lam)))),
            "thm43": float(np.min(np.real(thm_43_gap(field, omega)))),
        }
    if scenario.kind == "projective-bundle":
        degrees = tuple(int(d) for d in scenario.bundle.get("degrees", (0, 0)))
        total, subs = pe_split_specs(degrees)
        payload["verdict"] = semistability_verdict(total, subs, m=1)
    _emit_json(payload, Path(args.out), "classes_report.json")
    return EXIT_OK


def _form_integrals(field, forms: dict) -> dict:
    out = {}
    grid = field.grid
    for k, value in forms.items():
        arr = np.asarray(value)
        if k == 0:
            out[f"grade{k}"] = float(np.real(np.mean(arr)))
        elif k == 1:
            # integral of the (1,1)-form against omega-free base measure:
            # report the trace integral entrywise
            out[f"grade{k}"] = [
                [float(np.real(grid.integrate_base(arr[i, j])))
                 for j in range(arr.shape[1])]
                for i in range(arr.shape[0])
            ]
        else:
            out[f"grade{k}"] = float(np.real(grid.integrate_base(arr)))
    return out


def cmd_hym(args) -> int:
    from .hym import (chart_weight_values, fiber_s0, he_trace_check,
                      segre_crosscheck, static_identity_residual)
    from .scenarios import initial_bundle, parse_scenario

    scenario = parse_scenario(args.config)
    if scenario.kind != "projective-bundle":
        raise ConfigurationError("the hym subcommand needs a projective-bundle scenario")
    state = initial_bundle(scenario)
    omega = scenario.base_metric
    grid = scenario.grid
    w = grid.fiber_w()
    phi0 = chart_weight_values(state, 0)
    phi1 = chart_weight_values(state, 1)
    payload = {
        "static_identity_residual": static_identity_residual(state, omega),
        "trace_correspondence": he_trace_check(state, omega),
        "fiber_S0_deviation": float(np.max(np.abs(fiber_s0(state) - 1.0))),
        "chart_cocycle_residual": float(
            np.max(np.abs(phi0 - phi1 - np.log(np.abs(w) ** 2)))
        ),
        "segre_crosscheck": segre_crosscheck(
            state, tuple(scenario.bundle.get("degrees", (0, 0)))
        ),
    }
    _emit_json(payload, Path(args.out), "hym_report.json")
    return EXIT_OK


def cmd_appendix(args) -> int:
    from .quasibundle import he_equivalence_test
    from .scenarios import initial_field, parse_scenario

    scenario = parse_scenario(args.config)
    if scenario.kind == "projective-bundle":
        raise ConfigurationError("the appendix subcommand needs a torus scenario")
    field = initial_field(scenario)
    tol = scenario.tolerances.get("ge_defect", 1e-8)
    report = he_equivalence_test(field, scenario.base_metric, tol=tol)
    payload = {
        "verdict": "hermitian-einstein" if report["hermitian_einstein"]
                   else "not hermitian-einstein",
        "worst_mode": report["worst_mode"],
        "operator_sup": report["operator_sup"],
        "cutoff": report["cutoff"],
    }
    _emit_json(payload, Path(args.out), "appendix_report.json")
    return EXIT_OK


def cmd_report(args) -> int:
    from .flow import CSV_COLUMNS, read_monitor_csv

    rows = read_monitor_csv(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "monitors_long.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t", "series", "value"))
        for row in rows:
            for name in CSV_COLUMNS[1:]:
                writer.writerow((repr(row["t"]), name, repr(row[name])))
    print(f"wrote {out_path}")
    return EXIT_OK


_COMMANDS = {
    "flow": cmd_flow,
    "verify": cmd_verify,
    "classes": cmd_classes,
    "hym": cmd_hym,
    "appendix": cmd_appendix,
    "report": cmd_report,
}


def main(argv=None) -> int:
    _cap_threads()
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FlowStalled as exc:
        print(f"flow stalled: {exc}", file=sys.stderr)
        return EXIT_STALLED
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (ConfigurationError, FieldFormatError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
