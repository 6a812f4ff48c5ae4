"""Exception hierarchy.

``ConfigError`` covers bad invocations and parameters (CLI exit code 1);
``DataError`` covers malformed or unsuitable input data (exit code 2).
"""


class FingerprintError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FingerprintError, ValueError):
    pass


class DataError(FingerprintError, ValueError):
    pass


# ingestion
class MalformedCapture(DataError):
    pass


class UnsupportedLinkType(DataError):
    pass


class EmptySession(DataError):
    pass


class AmbiguousDirection(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class RowParseError(DataError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


# features
class MinPacketsNotMet(DataError):
    pass


class UnlabeledSession(DataError):
    pass


class SingleClassDataset(DataError):
    pass


class EmptyDataset(DataError):
    pass


class BadRange(ConfigError):
    pass


class EmptyValues(DataError):
    pass


class EdgeMismatch(DataError):
    pass


class IndexOutOfRange(ConfigError, IndexError):
    pass


# classifiers
class ArityMismatch(DataError):
    pass


class CorruptModel(DataError):
    pass


class TooFewSamples(DataError):
    pass


class EmptyGrid(ConfigError):
    pass


class NonConvergenceWarning(UserWarning):
    pass


# eval
class LengthMismatch(DataError):
    pass


class EmptyMatrix(DataError):
    pass


# synth
class DegenerateProfile(ConfigError):
    pass


class FrameTooSmall(DataError):
    pass


class IoFailure(DataError):
    def __init__(self, path, cause):
        super().__init__(f"{path}: {cause}")
        self.path = path
        self.cause = cause
