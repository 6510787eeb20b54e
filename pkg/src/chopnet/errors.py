"""Exception types shared across the package.

User-facing tools map ChopnetError subclasses to exit code 1 (bad input /
bad request) and InternalError subclasses to exit code 2.
"""


class ChopnetError(Exception):
    """Base class for all errors raised by this package."""


# --- tiling ---

class ImageTooSmall(ChopnetError):
    pass


class InvalidOverlap(ChopnetError):
    pass


class GridMismatch(ChopnetError):
    pass


class IndexOutOfGrid(ChopnetError):
    pass


class UnsupportedImage(ChopnetError):
    """Input pixel format is not 8-bit RGB-compatible (e.g. 16-bit, CMYK)."""


# --- dataset ---

class DuplicateTileId(ChopnetError):
    pass


class EmptyDataset(ChopnetError):
    pass


class DegenerateClass(ChopnetError):
    pass


class ManifestError(ChopnetError):
    """Manifest file is malformed or has an unsupported schema version."""


# --- network ---

class InvalidArchitecture(ChopnetError):
    pass


class ShapeMismatch(ChopnetError):
    pass


class LabelOutOfRange(ChopnetError):
    pass


# --- checkpoints ---

class CheckpointError(ChopnetError):
    pass


class BadMagic(CheckpointError):
    pass


class UnsupportedVersion(CheckpointError):
    pass


class TruncatedFile(CheckpointError):
    pass


class ArchMismatch(CheckpointError):
    pass


# --- training ---

class EpochOutOfRange(ChopnetError):
    pass


class ConfigError(ChopnetError):
    """Bad key or value in a training config file or flag."""


class InternalError(ChopnetError):
    """Errors that indicate a broken run rather than bad user input."""


class NonFiniteLoss(InternalError):
    pass


# --- mosaic evaluation ---

class EmptyRegion(ChopnetError):
    pass


# --- curation service ---

class BadPagination(ChopnetError):
    pass


class TileNotFound(ChopnetError):
    pass
