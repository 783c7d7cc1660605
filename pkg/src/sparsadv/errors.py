"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the command-line
driver can translate failures without a lookup table.
"""


class SparsadvError(Exception):
    exit_code = 2


class ConfigError(SparsadvError, ValueError):
    exit_code = 1


class DimensionMismatch(SparsadvError, ValueError):
    exit_code = 1


class EmptyInput(SparsadvError, ValueError):
    exit_code = 1


class NumericalError(SparsadvError, ArithmeticError):
    exit_code = 2


class IterationLimitExceeded(NumericalError):
    pass


class RankDeficientDictionary(NumericalError):
    pass


class IdenticalClasses(NumericalError):
    pass


class DegenerateSample(NumericalError):
    pass


class TrainingDiverged(NumericalError):
    pass


class IdxFormatError(SparsadvError, OSError):
    exit_code = 3


class BadMagic(IdxFormatError):
    pass


class TruncatedFile(IdxFormatError):
    pass
