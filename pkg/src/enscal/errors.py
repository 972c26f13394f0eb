"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for configuration/usage problems, 3 for data problems and 4 for numerical
failures.
"""


class EnscalError(Exception):
    exit_code = 1


class ConfigError(EnscalError):
    exit_code = 2


class DataError(EnscalError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(DataError):
    pass


class GroupingError(DataError):
    pass


class WindowError(DataError):
    def __init__(self, message, earliest_start=None):
        super().__init__(message)
        self.earliest_start = earliest_start


class ShapeError(DataError):
    pass


class ComparabilityError(DataError):
    pass


class NumericalError(EnscalError):
    exit_code = 4


class DomainError(NumericalError, ValueError):
    pass


class DegeneracyError(NumericalError):
    pass


class QuadratureError(NumericalError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SetupError(NumericalError):
    pass


class FitError(NumericalError):
    pass


class ExperimentError(NumericalError):
    pass
