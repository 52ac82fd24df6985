class ConfigError(ValueError):
    """Inconsistent sizes, unknown keys, or invalid settings."""


class DomainError(ValueError):
    """A query outside the region where a function is defined."""


class NumericError(FloatingPointError):
    """A non-finite value appeared in a loss, residual or gradient."""

    def __init__(self, message, *, iteration=None, point_ids=None):
        super().__init__(message)
        self.iteration = iteration
        self.point_ids = point_ids
