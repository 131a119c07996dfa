"""Exception types shared across the package."""


class LdgflowError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LdgflowError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class SolverStallError(LdgflowError):
    """An inner or outer solver failed to make progress."""

    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class BoundaryProximityError(LdgflowError):
    """Eigenvalue margin below the hard floor where the dual solve is hopeless."""

    exit_code = 3

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class QuadratureError(LdgflowError):
    """Node doubling hit the cap before reaching the requested tolerance."""

    exit_code = 3

    def __init__(self, message, last_iterates=None):
        super().__init__(message)
        self.last_iterates = last_iterates
