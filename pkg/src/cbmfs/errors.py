"""Exception hierarchy.

Three families map onto CLI exit codes: configuration/usage problems (1),
data and file-format problems (2), numerical failures (3).
"""


class CbmError(Exception):
    exit_code = 1


class ConfigError(CbmError, ValueError):
    exit_code = 1


class DataError(CbmError, ValueError):
    exit_code = 2


class NumericalError(CbmError, ArithmeticError):
    exit_code = 3


# configuration / argument errors
class InvalidConfig(ConfigError):
    pass


class AlphaOutOfRange(ConfigError):
    pass


class KTooLarge(ConfigError):
    pass


class EmptySupport(ConfigError):
    pass


class EmptyScores(ConfigError):
    pass


# data / format errors
class BadMagic(DataError):
    pass


class UnsupportedVersion(DataError):
    pass


class TruncatedFile(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class EmptyClass(DataError):
    pass


class RoleMismatch(DataError):
    pass


class InvalidSpec(DataError):
    pass


class InsufficientSamples(DataError):
    pass


# numerical errors
class ZeroVector(NumericalError):
    pass


class NotNormalized(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class EigenFailure(NumericalError):
    pass
