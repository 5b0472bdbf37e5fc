"""Exception hierarchy shared by every kdalign module.

Exit-code mapping for the CLI lives here so scripts get a stable contract:
0 success, 2 config, 3 I/O, 4 numeric failure, 5 shape mismatch.
"""


class KdalignError(Exception):
    exit_code = 1


class ConfigError(KdalignError):
    exit_code = 2


class IOFormatError(KdalignError):
    exit_code = 3


class NumericError(KdalignError):
    exit_code = 4


class ShapeError(KdalignError):
    exit_code = 5


# -- config-class errors ------------------------------------------------

class BadConfig(ConfigError):
    pass


class BadTemperature(ConfigError):
    pass


class BadK(ConfigError):
    pass


class EmptyInput(ConfigError):
    pass


class SchemaMismatch(ConfigError):
    pass


# -- I/O-class errors ---------------------------------------------------

class BadMagic(IOFormatError):
    pass


class BadVersion(IOFormatError):
    pass


class TruncatedFile(IOFormatError):
    pass


class DimOverflow(IOFormatError):
    pass


class MissingFile(IOFormatError):
    pass


class BadCheckpoint(IOFormatError):
    pass


# -- numeric errors -----------------------------------------------------

class NonFiniteGradient(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass


class ZeroVector(NumericError):
    pass


# -- shape errors -------------------------------------------------------

class DimMismatch(ShapeError):
    pass


class RowCountMismatch(ShapeError):
    pass


class EmptyQueue(ShapeError):
    pass
