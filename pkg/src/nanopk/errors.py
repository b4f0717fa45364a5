"""Exception hierarchy.

Three families map onto CLI exit codes: configuration problems (1), data
problems (2) and numeric failures (3).
"""


class NanopkError(Exception):
    exit_code = 1


class ConfigError(NanopkError):
    exit_code = 1


class DataError(NanopkError):
    exit_code = 2


class NumericError(NanopkError):
    exit_code = 3


# -- dataset
class MissingColumn(DataError):
    pass


class EmptyFile(DataError):
    pass


class AllRowsDropped(DataError):
    pass


class UnknownCategory(DataError):
    pass


class BadRatios(ConfigError):
    pass


class TooFewSamples(DataError):
    pass


# -- priors / features
class UnknownOrgan(ConfigError):
    pass


class DomainError(NumericError):
    pass


# -- autodiff
class ShapeMismatch(NumericError):
    pass


class NonFiniteError(NumericError):
    pass


class BatchTooSmall(NumericError):
    pass


class BadRate(ConfigError):
    pass


class GraphCycle(NumericError):
    pass


# -- models
class BadConfig(ConfigError):
    pass


class NonFiniteLoss(NumericError):
    pass


class SingularSystem(NumericError):
    pass


class BadCheckpoint(DataError):
    pass


# -- ensemble / eval
class EmptyValidation(DataError):
    pass


class ZeroVarianceTargets(NumericError):
    pass


class TooFewPairs(DataError):
    pass


class AllZeroDifferences(DataError):
    pass
