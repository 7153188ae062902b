"""Exception hierarchy shared across the package.

CLI exit codes map onto this hierarchy: ConfigError -> 2, DataError and
other domain errors -> 3, DivergenceError -> 4, IoError -> 5.
"""


class HrmError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HrmError):
    """Invalid configuration value, unknown key, or empty search space."""


class DataError(HrmError):
    """Malformed or inconsistent input data."""


class InsufficientWindow(DataError):
    """Raw recording too short to cover the swallow window."""


class ChannelMismatch(DataError):
    """Raw recording does not have the expected sensor channel count."""


class ClassTooSmall(DataError):
    """A diagnosis class has too few studies to stratify."""


class FormatError(DataError):
    """On-disk blob or file does not match the declared format."""


class ManifestError(DataError):
    """Dataset manifest is inconsistent with the files on disk."""


class EmptyStudy(DataError):
    """No swallows left after filtering."""


class SchemaError(DataError):
    """Model/feature dimensionality mismatch."""


class GeometryError(HrmError):
    """Layer geometry is incompatible with its input shape."""


class UninitializedStatistics(HrmError):
    """Batch normalization used in inference mode before any training batch."""


class DivergenceError(HrmError):
    """Training produced a non-finite loss.

    Carries the last finite checkpoint (``checkpoint``) and the training
    history up to the failure (``history``) when available.
    """

    def __init__(self, message, checkpoint=None, history=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history


class BundleError(HrmError):
    """A trained-model bundle is missing a required component."""


class IoError(HrmError):
    """Filesystem failure while reading or writing artifacts."""
