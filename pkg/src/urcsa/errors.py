"""Exception types shared across the package."""


class UrcsaError(Exception):
    """Base class for all package errors."""


class DimensionError(UrcsaError):
    """Shapes or axes violate an operation's contract."""


class UsageError(UrcsaError):
    """An API was called in an invalid state (e.g. backward on a non-scalar)."""


class ConfigError(UrcsaError):
    """Malformed or inconsistent configuration."""


class DatasetError(UrcsaError):
    """Dataset directory layout violates the expected pairing contract."""


class CheckpointError(UrcsaError):
    """Base class for checkpoint read/write failures."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or corrupted structure."""


class CheckpointVersionError(CheckpointError):
    """Unsupported checkpoint format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ended before all declared payload was read."""


class CheckpointShapeError(CheckpointError):
    """Stored parameters do not match the target model."""


class ImageFormatError(UrcsaError):
    """Bytes that are not a decodable image."""


class ImageDepthError(UrcsaError):
    """Image bit depth other than 8-bit is not supported."""
