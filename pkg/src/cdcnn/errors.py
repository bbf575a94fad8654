"""Exception hierarchy shared by the library and the command line."""


class CdcnnError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(CdcnnError, ValueError):
    pass


class NumericError(CdcnnError, ArithmeticError):
    """A NaN or infinity showed up where only finite values are allowed."""


class DataValidationError(CdcnnError, ValueError):
    """On-disk dataset, split spec or metadata failed validation."""


class CompatibilityError(DataValidationError):
    """Checkpoint and dataset disagree on channels or labels."""


class CheckpointError(CdcnnError, ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointFormatError(CheckpointError):
    """Header parses but its shapes, offsets or lengths are inconsistent."""
