"""
Exception classes raised by the invsmooth modules.

Numerical failures derive from NumericalError, problems with input data from
DataError; the command line tool maps each family to its own exit code.
"""


class InvsmoothError(Exception):
    pass


class NumericalError(InvsmoothError):
    pass


class DataError(InvsmoothError):
    pass


class MalformedAlgebraElement(NumericalError):
    pass


class NearPiRotation(NumericalError):
    pass


class NonPsdCovariance(NumericalError):
    pass


class SingularInnovationCovariance(NumericalError):
    pass


class SingularPredictedCovariance(NumericalError):
    pass


class SingularNormalEquations(NumericalError):
    pass


class StepError(NumericalError):
    """A failure inside an estimator pass, tagged with the time step."""

    def __init__(self, step, cause):
        self.step = step
        self.cause = cause
        super(StepError, self).__init__(
            "step {}: {}: {}".format(step, type(cause).__name__, cause))


class UnknownLandmark(DataError):
    pass


class LengthMismatch(DataError):
    pass


class SchemaError(DataError):
    def __init__(self, file_name, row, reason):
        self.file_name = file_name
        self.row = row
        self.reason = reason
        super(SchemaError, self).__init__(
            "{} row {}: {}".format(file_name, row, reason))


class ExportError(DataError):
    pass


class ConfigParseError(InvsmoothError):
    def __init__(self, line, key, reason):
        self.line = line
        self.key = key
        self.reason = reason
        if line is None:
            msg = reason
        else:
            msg = "line {} ({}): {}".format(line, key, reason)
        super(ConfigParseError, self).__init__(msg)
