"""Exception types shared across the package.

Every error raised on purpose derives from MattingError so callers (CLI,
service) can distinguish expected failures from bugs.
"""


class MattingError(Exception):
    """Base class for all deliberate failures."""


class ShapeMismatch(MattingError):
    """Image/trimap/alpha spatial dimensions disagree."""


class InvalidTrimapValue(MattingError):
    """Trimap contains values outside {0, 0.5, 1}."""


class NonFiniteData(MattingError):
    """An input plane contains NaN or infinity."""


class NonFiniteLoss(MattingError):
    """A training step produced a NaN/inf loss."""


class IndivisibleResolution(MattingError):
    """A resolution cannot be tiled by the patch/window geometry."""


class MissingParameter(MattingError):
    """A checkpoint lacks a tensor the model requires."""


class CheckpointError(MattingError):
    """A checkpoint archive is malformed or inconsistent."""


class DatasetError(MattingError):
    """A dataset is inconsistent (count mismatch, unreadable entry)."""


class MissingDirectory(DatasetError):
    """A required dataset subdirectory does not exist."""


class CorruptImage(MattingError):
    """An image file could not be decoded."""


class ConfigError(MattingError):
    """A configuration value is out of range or inconsistent."""


class TooSmall(MattingError):
    """An input is too small for the requested pyramid depth."""
