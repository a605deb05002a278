"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: configuration problems are exit 2,
numerical contract violations exit 3, a stalled flow exit 4.
"""

from __future__ import annotations


class GeflowError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(GeflowError):
    """Invalid grid, scenario or argument combination."""


class FieldFormatError(GeflowError):
    """Corrupt or incompatible field dump."""


class NonAdmissibleError(GeflowError):
    """Fiber Hessian of a weight fails positivity somewhere on the grid."""

    def __init__(self, point, eigenvalue, message=None):
        self.point = tuple(int(i) for i in point)
        self.eigenvalue = float(eigenvalue)
        if message is None:
            message = (
                f"weight is not admissible: smallest fiber-Hessian eigenvalue "
                f"{self.eigenvalue:.6e} at grid point {self.point}"
            )
        super().__init__(message)


class DegenerateScenarioError(GeflowError):
    """A topological denominator came out nonpositive (no relative ampleness)."""


class FlowStalled(GeflowError):
    """Time step collapsed: 10 consecutive halvings failed the positivity guard."""

    def __init__(self, t, dt, diagnostics, message=None):
        self.t = float(t)
        self.dt = float(dt)
        self.diagnostics = dict(diagnostics)
        if message is None:
            message = f"flow stalled at t={self.t:.6g} (dt shrunk to {self.dt:.3e})"
        super().__init__(message)


class ContractViolation(GeflowError):
    """A monitored runtime contract was violated beyond its hard threshold."""

    def __init__(self, name, value, threshold, step=None):
        self.name = name
        self.value = float(value)
        self.threshold = float(threshold)
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"contract '{name}' violated{where}: {self.value:.6e} exceeds "
            f"{self.threshold:.6e}"
        )


class InternalConsistencyError(GeflowError):
    """Two independent routes to the same verdict disagreed."""
