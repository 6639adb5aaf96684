"""Exception hierarchy.

Every error raised by the pipeline derives from :class:`MMVapError`.  The three
intermediate classes map onto CLI exit codes (config 2, data 3, numeric 4).
"""


class MMVapError(Exception):
    exit_code = 1


class ConfigError(MMVapError, ValueError):
    exit_code = 2


class DataError(MMVapError, ValueError):
    exit_code = 3


class NumericError(MMVapError, ArithmeticError):
    exit_code = 4


# corpus-io
class MissingFile(DataError, FileNotFoundError):
    pass


class SchemaViolation(DataError):
    def __init__(self, field, message=""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class ChannelCountNot2(SchemaViolation):
    def __init__(self, count):
        self.count = count
        super().__init__("channels", f"expected 2 channels, got {count}")


class NonMonotonicTimes(DataError):
    pass


class MissingColumn(DataError):
    def __init__(self, column):
        self.column = column
        super().__init__(column)


class EmptyFile(DataError):
    pass


class TrackingTooSparse(DataError):
    pass


class BadSampleRate(DataError):
    pass


class IoError(DataError, OSError):
    pass


# timelines, labels, features
class WordBeyondDuration(DataError):
    pass


class OutOfRange(DataError, IndexError):
    pass


class WrongLength(DataError):
    pass


class SessionTooShort(DataError):
    pass


class InvalidDistribution(DataError):
    pass


class RateMismatch(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class WindowOutOfSession(DataError):
    pass


class InsufficientEvents(DataError):
    pass


# model / training
class EmptyMask(DataError):
    pass


class TooFewSessions(ConfigError):
    pass


class CheckpointMismatch(ConfigError):
    pass


class DivergedLoss(NumericError):
    pass


# metrics / statistics
class UndefinedF1(NumericError):
    pass


class BadProportions(NumericError):
    pass


class EmptyClass(NumericError):
    pass


class SingleClassValidation(DataError):
    pass


class ZeroVariance(NumericError):
    pass


class EmptySample(DataError):
    pass
