"""Exception types raised across the package."""


class FMSRError(Exception):
    """Base class for all package errors."""


class ShapeError(FMSRError, ValueError):
    """Tensor dimensions are inconsistent with an operation's contract."""


class DomainError(FMSRError, ValueError):
    """An argument lies outside the domain of an operation (e.g. a non-positive step size)."""


class ConfigError(FMSRError, ValueError):
    """A configuration value violates an invariant."""


class CheckpointError(FMSRError):
    """A checkpoint file is corrupt or does not match the model being restored."""


class NonFiniteError(FMSRError, FloatingPointError):
    """A NaN or infinity appeared in a gradient or loss.

    ``where`` names the offending tensor or training step.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where
