"""Exception types shared across the package."""


class MoverFVError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MoverFVError):
    """Invalid user-facing configuration (bad key, value out of range)."""


class GeometryError(MoverFVError):
    """Degenerate or collapsed geometry (zero-area cell, pinched triangle)."""


class DomainError(MoverFVError):
    """Evaluation outside a declared domain (time interval, x = 0)."""


class NumericalError(MoverFVError):
    """Non-finite values produced by a numerical operation."""


class BlowUpError(NumericalError):
    """Solution blew up mid-run; carries the partial trajectory for postmortems."""

    def __init__(self, message, step_index=None, cell=None, trajectory=None):
        super().__init__(message)
        self.step_index = step_index
        self.cell = cell
        self.trajectory = trajectory if trajectory is not None else []
