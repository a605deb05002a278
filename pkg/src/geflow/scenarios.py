"""Scenario configuration: strict TOML parsing and initial-data builders.

A scenario file pins everything a run needs: the grid, the reference weight
(kappa, optional base twist), the perturbation modes, the base Kahler
metric, flow parameters and tolerances.  Parsing is strict: unknown keys
fail fast, naming the offending field.  All randomness used anywhere in a
run derives from the single ``seed`` key.

Scenario kinds:

* ``torus-product``   m = 1, modes must not couple base and fiber axes
* ``torus-coupled``   m = 1, arbitrary integer modes
* ``torus-m2``        m = 2 (points capped at 12 per axis)
* ``projective-bundle``  m = 1 base with a P^1 fiber induced from a rank-2
  diagonal bundle metric h = diag(e^{u1}, e^{u2})
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field as dataclass_field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .fields import MetricField
from .flow import cfl_dt
from .geometry import BaseMetric
from .grid import PROJECTIVE, TORUS, GridSpec
from .hym import HermitianBundleState, diagonal_bundle, induced_weight

KINDS = ("torus-product", "torus-coupled", "torus-m2", "projective-bundle")

_TOP_KEYS = {"kind", "seed", "grid", "metric", "base_metric", "flow",
             "tolerances", "bundle"}
_GRID_KEYS = {"points", "fiber_theta", "fiber_sigma", "derivative"}
_METRIC_KEYS = {"kappa", "base_curvature", "modes"}
_MODE_KEYS = {"amplitude", "frequency", "phase"}
_BASE_METRIC_KEYS = {"coefficients"}
_FLOW_KEYS = {"dt", "time", "method"}
_TOL_KEYS = {"admissibility", "slack", "ge_defect"}
_BUNDLE_KEYS = {"rank", "degrees", "u11_amplitude", "u11_frequency",
                "u22_amplitude", "u22_frequency"}


@dataclass
class Mode:
    amplitude: float
    frequency: tuple
    phase: float


@dataclass
class Scenario:
    kind: str
    seed: int
    grid: GridSpec
    kappa: float
    base_curvature: np.ndarray | None
    modes: list
    base_metric: BaseMetric
    dt: float | None
    time_span: float
    method: str
    tolerances: dict
    bundle: dict = dataclass_field(default_factory=dict)

    @property
    def base_dim(self) -> int:
        return self.grid.base_dim

    def flow_dt(self) -> float:
        if self.dt and self.dt > 0:
            return self.dt
        return cfl_dt(self.grid, self.base_metric)


def _reject_unknown(section: dict, allowed: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {sorted(unknown)} in [{where}]"
        )


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file (strict TOML)."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"scenario file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"parse error in {path}: {exc}") from exc
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> Scenario:
    _reject_unknown(data, _TOP_KEYS, "top level")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigurationError(
            f"field 'kind' must be one of {KINDS}, got {kind!r}"
        )
    seed = int(data.get("seed", 0))

    gsec = dict(data.get("grid", {}))
    _reject_unknown(gsec, _GRID_KEYS, "grid")
    points = int(gsec.get("points", 16 if kind != "torus-m2" else 10))
    derivative = str(gsec.get("derivative", "stencil4"))
    base_dim = 2 if kind == "torus-m2" else 1
    if kind == "projective-bundle":
        fiber_points = (int(gsec.get("fiber_theta", 32)),
                        int(gsec.get("fiber_sigma", 32)))
        grid = GridSpec(base_dim=1, points=points, fiber_kind=PROJECTIVE,
                        fiber_points=fiber_points, derivative=derivative)
    else:
        if "fiber_theta" in gsec or "fiber_sigma" in gsec:
            raise ConfigurationError(
                "field 'grid.fiber_theta/sigma' only applies to "
                "projective-bundle scenarios"
            )
        grid = GridSpec(base_dim=base_dim, points=points, fiber_kind=TORUS,
                        derivative=derivative)

    msec = dict(data.get("metric", {}))
    _reject_unknown(msec, _METRIC_KEYS, "metric")
    kappa = float(msec.get("kappa", 1.0 if kind == "projective-bundle" else 2.0))
    base_curv = _parse_base_matrix(msec.get("base_curvature"), base_dim,
                                   "metric.base_curvature")
    modes = [_parse_mode(m, grid, kind, i)
             for i, m in enumerate(msec.get("modes", []))]

    bsec = dict(data.get("base_metric", {}))
    _reject_unknown(bsec, _BASE_METRIC_KEYS, "base_metric")
    coeffs = _parse_base_matrix(bsec.get("coefficients"), base_dim,
                                "base_metric.coefficients")
    if coeffs is None:
        coeffs = np.eye(base_dim)
    base_metric = BaseMetric(base_dim, coeffs)

    fsec = dict(data.get("flow", {}))
    _reject_unknown(fsec, _FLOW_KEYS, "flow")
    dt = float(fsec.get("dt", 0.0))
    time_span = float(fsec.get("time", 1.0))
    method = str(fsec.get("method", "euler"))
    if method not in ("euler", "rk4"):
        raise ConfigurationError("field 'flow.method' must be euler or rk4")

    tsec = dict(data.get("tolerances", {}))
    _reject_unknown(tsec, _TOL_KEYS, "tolerances")
    for key, value in tsec.items():
        if float(value) <= 0:
            raise ConfigurationError(f"field 'tolerances.{key}' must be positive")

    bundle = dict(data.get("bundle", {}))
    if bundle and kind != "projective-bundle":
        raise ConfigurationError("[bundle] only applies to projective-bundle")
    if kind == "projective-bundle":
        _reject_unknown(bundle, _BUNDLE_KEYS, "bundle")
        rank = int(bundle.get("rank", 2))
        if rank != 2:
            raise ConfigurationError("field 'bundle.rank': rank 2 only")
        bundle.setdefault("degrees", [0, 0])

    scenario = Scenario(
        kind=kind, seed=seed, grid=grid, kappa=kappa, base_curvature=base_curv,
        modes=modes, base_metric=base_metric, dt=dt, time_span=time_span,
        method=method, tolerances={k: float(v) for k, v in tsec.items()},
        bundle=bundle,
    )
    # an unbuildable initial weight is a configuration error, caught now
    initial_field(scenario)
    return scenario


def _parse_base_matrix(raw, base_dim: int, where: str):
    if raw is None:
        return None
    vals = [float(x) for x in np.atleast_1d(raw)]
    if base_dim == 1:
        if len(vals) != 1:
            raise ConfigurationError(f"field '{where}' needs 1 entry for m = 1")
        return np.array([[vals[0]]])
    if len(vals) != 4:
        raise ConfigurationError(
            f"field '{where}' needs [a11, a22, re_a12, im_a12] for m = 2"
        )
    a11, a22, re12, im12 = vals
    return np.array([[a11, re12 + 1j * im12], [re12 - 1j * im12, a22]])


def _parse_mode(raw: dict, grid: GridSpec, kind: str, index: int) -> Mode:
    _reject_unknown(dict(raw), _MODE_KEYS, f"metric.modes[{index}]")
    freq = tuple(int(k) for k in raw.get("frequency", ()))
    naxes = len(grid.shape)
    if len(freq) != naxes:
        raise ConfigurationError(
            f"field 'metric.modes[{index}].frequency' needs {naxes} integers"
        )
    if kind == "torus-product":
        nb = 2 * grid.base_dim
        couples = any(freq[:nb]) and any(freq[nb:])
        if couples:
            raise ConfigurationError(
                f"field 'metric.modes[{index}]': product scenarios forbid "
                "base-fiber coupled frequencies"
            )
    amplitude = float(raw.get("amplitude", 0.0))
    phase = float(raw.get("phase", 0.0))
    return Mode(amplitude, freq, phase)


def initial_field(scenario: Scenario) -> MetricField:
    """Admissible initial weight of the scenario (validation included)."""
    if scenario.kind == "projective-bundle":
        return induced_weight(initial_bundle(scenario))
    grid = scenario.grid
    psi = np.zeros(grid.shape)
    axes = [grid.mesh(ax) for ax in range(len(grid.shape))]
    for mode in scenario.modes:
        arg = sum(k * ax for k, ax in zip(mode.frequency, axes)) + mode.phase
        psi = psi + mode.amplitude * np.cos(arg)
    field = MetricField(grid, scenario.kappa, psi, scenario.base_curvature,
                        label=scenario.kind)
    if not field.is_admissible():
        raise ConfigurationError(
            "non-admissible initial field: mode amplitudes push the fiber "
            "Hessian out of the positive cone"
        )
    return field


def initial_bundle(scenario: Scenario) -> HermitianBundleState:
    if scenario.kind != "projective-bundle":
        raise ConfigurationError("bundle data only exists on projective scenarios")
    grid = scenario.grid
    b = scenario.bundle
    x1 = grid.mesh(0)[(...,) + (0, 0)] * np.ones(grid.base_shape)
    y1 = grid.mesh(1)[(...,) + (0, 0)] * np.ones(grid.base_shape)

    def exponent(prefix):
        amp = float(b.get(f"{prefix}_amplitude", 0.0))
        freq = b.get(f"{prefix}_frequency", [1, 0])
        if len(freq) != 2:
            raise ConfigurationError(
                f"field 'bundle.{prefix}_frequency' needs two integers"
            )
        return amp * np.cos(int(freq[0]) * x1 + int(freq[1]) * y1)

    return diagonal_bundle(grid, exponent("u11"), exponent("u22"))


def scenario_lambda(scenario: Scenario, field: MetricField | None = None) -> float:
    """Topological constant: exact Segre arithmetic for P(E), else quadrature."""
    from .functionals import lambda_constant

    if scenario.kind == "projective-bundle":
        degrees = scenario.bundle.get("degrees", [0, 0])
        volume = float(np.real(
            scenario.base_metric.mat[0, 0]) * 2.0 * (2.0 * np.pi) ** 2)
        return float(2.0 * np.pi * (sum(degrees) / 2.0) / volume)
    if field is None:
        field = initial_field(scenario)
    return lambda_constant(field, scenario.base_metric)
