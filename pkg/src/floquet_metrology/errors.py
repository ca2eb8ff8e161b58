"""Exception hierarchy.

Validation errors map to CLI exit code 1, numerical failures to exit code 2.
"""


class MetrologyError(Exception):
    pass


class ValidationError(MetrologyError, ValueError):
    pass


class DimensionError(ValidationError):
    pass


class CapacityError(ValidationError):
    pass


class UnsupportedPatternError(ValidationError):
    pass


class ConstraintError(ValidationError):
    pass


class InvalidFrequencyError(ValidationError):
    pass


class NoMatchingError(ValidationError):
    """Drive coefficients give a non-positive matching frequency."""


class UndersampledDriveError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class NumericalError(MetrologyError, ArithmeticError):
    pass


class DegenerateGeneratorError(NumericalError):
    pass


class StepSizeError(NumericalError):
    pass


class NonFiniteGradientError(NumericalError):
    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump
