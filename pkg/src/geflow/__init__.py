"""Geodesic-Einstein flows, energies and characteristic forms on model
Kahler fibrations: discrete weights on torus and P^1 fibers, the scalar
curvature flow with runtime monitors, fiber-integrated S/C forms, the
projective-bundle Hermitian-Yang-Mills bridge, and the fiberwise
Hermitian-Einstein operator of the appendix construction."""

from .errors import (
    ConfigurationError,
    ContractViolation,
    DegenerateScenarioError,
    FieldFormatError,
    FlowStalled,
    GeflowError,
    InternalConsistencyError,
    NonAdmissibleError,
)
from .fields import MetricField, dump_field, jet_at, load_field, random_admissible
from .geometry import (
    BaseMetric,
    decomposition_residual,
    geodesic_curvature,
    horizontal_connection,
    kodaira_spencer_action,
    laplacians,
    mixed_identity_residual,
    trace_c,
    unit_base_metric,
)
from .grid import GridSpec, wirtinger_derivative
from .functionals import (
    donaldson_L,
    energy_E,
    energy_E1,
    first_variation_check,
    ge_defect,
    lambda_constant,
)
from .flow import cfl_dt, run, step, uniqueness_probe

__version__ = "0.1.0"

__all__ = [
    "BaseMetric",
    "ConfigurationError",
    "ContractViolation",
    "DegenerateScenarioError",
    "FieldFormatError",
    "FlowStalled",
    "GeflowError",
    "GridSpec",
    "InternalConsistencyError",
    "MetricField",
    "NonAdmissibleError",
    "cfl_dt",
    "decomposition_residual",
    "donaldson_L",
    "dump_field",
    "energy_E",
    "energy_E1",
    "first_variation_check",
    "ge_defect",
    "geodesic_curvature",
    "horizontal_connection",
    "jet_at",
    "kodaira_spencer_action",
    "lambda_constant",
    "laplacians",
    "load_field",
    "mixed_identity_residual",
    "random_admissible",
    "run",
    "step",
    "trace_c",
    "unit_base_metric",
    "uniqueness_probe",
    "wirtinger_derivative",
]
