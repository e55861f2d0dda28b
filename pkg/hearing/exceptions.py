"""Error types shared by every NeuroAmp module.

Each error belongs to a category that the management commands map to an
exit code: usage problems exit 2, bad data exits 3, anything unexpected 4.
"""


class NeuroAmpError(Exception):
    category = "InternalError"
    exit_code = 4


class UsageError(NeuroAmpError):
    category = "UsageError"
    exit_code = 2


class DataError(NeuroAmpError):
    category = "DataError"
    exit_code = 3


class InvalidConfig(UsageError):
    pass


# Audio containers and waveforms
class MalformedContainer(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class EmptyAudio(DataError):
    pass


class IoFailure(DataError):
    pass


class InvalidAudio(DataError):
    pass


class TooShort(DataError):
    pass


class DegenerateWindowSum(DataError):
    pass


class ShapeMismatch(DataError):
    pass


# Prescription / corpus
class InvalidAudiogram(DataError):
    pass


class SilentClean(DataError):
    pass


class SilentNoise(DataError):
    pass


class MissingAudio(DataError):
    pass


class EmptySplit(DataError):
    pass


# Checkpoints
class VersionMismatch(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


# Statistics
class DegenerateVariance(DataError):
    pass


class ScoreMismatch(DataError):
    pass
