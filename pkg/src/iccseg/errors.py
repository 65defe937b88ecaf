"""Exception hierarchy shared across the package.

``DataError`` subclasses signal problems with user-supplied data or
configuration and map to CLI exit code 3; anything else is treated as a
runtime failure (exit code 4).
"""


class IccsegError(Exception):
    """Base class for all package-specific errors."""


class DataError(IccsegError):
    """Bad input data or dataset configuration."""


class MalformedFile(DataError):
    """Feature tensor file has a bad header or truncated payload."""


class NonFiniteData(DataError):
    """NaN or Inf encountered where finite values are required."""


class UnknownAction(DataError):
    """Label file names an action missing from the vocabulary."""


class LengthMismatch(DataError):
    """Paired feature/label sequences disagree in length."""


class TooFewVideos(DataError):
    """Split request asks for more labeled videos than exist."""


class BadSpec(DataError):
    """Synthetic dataset specification violates its preconditions."""


class TooFewFrames(DataError):
    """Mini-batch holds fewer frames than requested clusters."""


class ShapeError(DataError):
    """Input feature dimension does not match the model configuration."""


class EmptySequence(DataError):
    """Metric called on an empty label sequence."""


class NoValidAnchors(IccsegError):
    """Every contrastive anchor was skipped (no usable positives/negatives)."""


class EmptyLabeledSet(DataError):
    """Classify step invoked with no labeled videos."""


class MissingLabels(DataError):
    """Label store lacks entries for videos in the current batch."""


class CheckpointVersionMismatch(IccsegError):
    """Checkpoint file carries an unsupported format tag."""
