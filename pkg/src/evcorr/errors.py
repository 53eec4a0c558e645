"""Exception types shared across the package."""


class EvcorrError(Exception):
    """Base class for all library errors."""


class MeshError(EvcorrError):
    """Base class for mesh file / validation problems."""


class MeshParseError(MeshError):
    """Malformed mesh file content.

    Carries the 1-based line number of the offending line.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshValidationError(MeshError):
    """Mesh content violates a structural invariant."""


class SolverError(EvcorrError):
    """Linear solve failed to reach the requested residual.

    ``achieved`` holds the relative residual actually reached.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SingularSystemError(SolverError):
    """The reduced saddle system is singular (configuration problem)."""


class DivergenceError(EvcorrError):
    """A time step produced non-finite values.

    ``step`` is the step index at which the blow-up was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StateError(EvcorrError):
    """A stepper was used with an incomplete or mismatched state."""


class ConfigError(EvcorrError):
    """Invalid run configuration; carries key/line context when known."""

    def __init__(self, message, key=None, line=None):
        parts = []
        if key is not None:
            parts.append(f"key '{key}'")
        if line is not None:
            parts.append(f"line {line}")
        if parts:
            message = f"{message} ({', '.join(parts)})"
        super().__init__(message)
        self.key = key
        self.line = line


class CalibrationError(EvcorrError):
    """Calibration quantity is undefined for the given inputs."""
