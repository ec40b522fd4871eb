"""Exception types raised across the package."""


class WeakBMOError(Exception):
    """Base class for every error raised by weakbmo."""


class ConfigError(WeakBMOError, ValueError):
    """Bad configuration: malformed scenario file or an exceeded desk-scale cap."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class CapExceededError(ConfigError):
    pass


class DepthMismatchError(WeakBMOError, ValueError):
    pass


class DimensionMismatchError(WeakBMOError, ValueError):
    pass


class DomainError(WeakBMOError, ValueError):
    """A point lies outside the parabolic strip it was evaluated on."""


class PreconditionError(WeakBMOError, ValueError):
    pass


class FlagMissingError(WeakBMOError, ValueError):
    """The gauge does not declare a property the operation relies on."""


class NormExceedsError(PreconditionError):
    pass


class HorizonTooSmallError(WeakBMOError, ValueError):
    pass


class NotEnoughLowPointsError(WeakBMOError, ValueError):
    pass


class InfeasibleStartError(WeakBMOError, RuntimeError):
    pass


class FormatError(WeakBMOError, ValueError):
    """Malformed DSF or gauge table file."""
