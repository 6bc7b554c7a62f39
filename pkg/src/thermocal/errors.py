"""Exception hierarchy shared by every stage of the toolkit."""


class ThermocalError(Exception):
    """Base class. ``exit_code`` is what the CLI returns when this escapes."""

    exit_code = 1


class ConfigurationError(ThermocalError):
    exit_code = 2


class InputError(ThermocalError):
    """Bad files, shapes or arguments supplied by the caller."""

    exit_code = 2


class DomainError(ThermocalError, ValueError):
    """Radiation model asked to invert physically inconsistent inputs."""


class CalibrationError(ThermocalError):
    pass


class OptimizationError(ThermocalError):
    pass
