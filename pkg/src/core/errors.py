class PointPetError(Exception):
    """Base class for every error raised by this package."""


class ContractError(PointPetError, ValueError):
    """Raised when an operation's precondition is violated."""


class DimensionError(ContractError):
    """Raised when tensor shapes do not conform."""


class DegenerateVectorError(ContractError):
    """Raised when a feature vector is too close to zero to normalize."""


class TooManyAnchorsError(ContractError):
    """Raised when more anchors are requested than there are points."""


class FileFormatError(PointPetError, IOError):
    """
    Raised when a volume, checkpoint or manifest file cannot be parsed.

    Attributes:
        offset (int): Byte offset in the file where the problem was found.
    """
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingError(PointPetError, RuntimeError):
    """Raised when training produces a non-finite gradient or loss."""


class UsageError(ContractError):
    """Raised when a command line or config file names an unknown option or a bad value."""
