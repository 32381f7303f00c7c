"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`CrossbarSimError` so callers (the CLI in particular) can separate
expected failures from bugs.
"""


class CrossbarSimError(Exception):
    """Base class for all package errors."""


# configuration ------------------------------------------------------------

class ConfigError(CrossbarSimError):
    pass


class ParseError(ConfigError):
    """Config or netlist text could not be parsed."""


class UnknownKey(ConfigError):
    def __init__(self, key, message=None):
        self.key = key
        super().__init__(message or f"unknown config key {key!r}")


class ValidationError(ConfigError):
    """A value violates a documented invariant.

    ``key`` names the offending config key (or field) when known.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class DeviceError(ValidationError):
    """Device resistance states are unusable (r_high <= r_low)."""


class UnknownPreset(ConfigError):
    pass


# circuit construction -----------------------------------------------------

class DimensionMismatch(CrossbarSimError):
    pass


class PartitionTooFine(CrossbarSimError):
    pass


class DegenerateGeometry(CrossbarSimError):
    pass


# solving ------------------------------------------------------------------

class SolverError(CrossbarSimError):
    pass


class SingularMatrix(SolverError):
    def __init__(self, message, node=None):
        self.node = node
        super().__init__(message)


class FloatingNode(SingularMatrix):
    pass


class NonConvergence(SolverError):
    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class StepNonConvergence(NonConvergence):
    def __init__(self, message, time=None, result=None):
        self.time = time
        super().__init__(message, result=result)


# data / evaluation ----------------------------------------------------------

class FormatError(CrossbarSimError):
    pass


class RangeError(CrossbarSimError):
    pass


class EmptyRun(CrossbarSimError):
    pass
