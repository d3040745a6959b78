"""Shared exception types mapped to CLI exit codes."""


class ConfigError(Exception):
    """Invalid or missing configuration (CLI exit code 2)."""


class EllipticityError(Exception):
    """Coefficient field lost positivity at a quadrature point (exit code 3)."""


class SolverFailure(Exception):
    """Iterative solver exceeded its iteration cap (exit code 3).

    Carries the relative residual history so callers can inspect stagnation.
    """

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history


class InfeasibleError(Exception):
    """Requested computation exceeds desk-scale caps (exit code 3)."""
