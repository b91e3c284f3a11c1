"""Exception hierarchy shared by every module of the package."""


class AisForgeError(Exception):
    """Base class for all package errors."""


class ParseError(AisForgeError, ValueError):
    """A CSV row could not be turned into a valid observation.

    ``row`` is the 1-based data row (the header is not counted).
    """

    def __init__(self, row: int, reason: str = ""):
        self.row = row
        self.reason = reason
        msg = f"row {row}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class NonMonotonicTimestamps(AisForgeError, ValueError):
    pass


class EmptySeries(AisForgeError, ValueError):
    pass


class FrequencyMismatch(AisForgeError, ValueError):
    pass


class EmptyIntersection(AisForgeError, ValueError):
    pass


class TooShort(AisForgeError, ValueError):
    pass


class NonFiniteInput(AisForgeError, ValueError):
    pass


class DegenerateWindow(AisForgeError, ValueError):
    pass


class NoConvergedFit(AisForgeError, RuntimeError):
    pass


class InsufficientHistory(AisForgeError, ValueError):
    pass


class ShapeMismatch(AisForgeError, ValueError):
    pass


class LengthMismatch(AisForgeError, ValueError):
    pass


class NonPositiveTemperature(AisForgeError, ValueError):
    pass


class WindowTooSmall(AisForgeError, ValueError):
    pass


class SeriesTooShort(AisForgeError, ValueError):
    pass


class Misalignment(AisForgeError, ValueError):
    pass


class MissingComponent(AisForgeError, KeyError):
    pass


class UnknownRunId(AisForgeError, KeyError):
    pass


class InvalidParameters(AisForgeError, ValueError):
    pass


class ConfigError(AisForgeError, ValueError):
    """Invalid experiment configuration; ``line`` points into the config file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
