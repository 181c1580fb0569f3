"""Exception hierarchy.

Every error raised by the library derives from :class:`AmdcastError`. The
three intermediate classes map onto CLI exit codes: configuration problems
exit with 1, bad or insufficient data with 2, numerical failures with 3.
"""


class AmdcastError(Exception):
    exit_code = 3


class ConfigError(AmdcastError, ValueError):
    exit_code = 1


class DataError(AmdcastError, ValueError):
    exit_code = 2


class NumericError(AmdcastError, ArithmeticError):
    exit_code = 3


class DimensionMismatch(NumericError, ValueError):
    pass


class NonFiniteValue(NumericError, ValueError):
    pass


class RankDeficient(NumericError):
    pass


class NegativeUnderLog(NumericError, ValueError):
    pass


class MissingCache(NumericError):
    pass


class ParseError(DataError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"cannot parse {value!r} at row {row}, column {column}")


class DuplicateTimestamp(DataError):
    pass


class ColumnMismatch(DataError):
    pass


class TooShort(DataError):
    pass


class EmptyDataset(DataError):
    pass


class ConstantSeries(DataError):
    pass


class TooFewPoints(DataError):
    pass


class TooFewSamples(DataError):
    pass


class FeatureMismatch(DataError):
    pass


class VariantMismatch(DataError):
    pass


class WindowMismatch(DataError):
    pass


class NoOverlap(DataError):
    pass


class ZeroVariance(DataError):
    pass


class EmptyHistory(DataError):
    pass
