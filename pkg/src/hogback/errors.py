"""Exception hierarchy shared by all hogback modules."""


class HogbackError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(HogbackError):
    """Input geometry is incompatible with the requested operation."""


class GeometryError(HogbackError):
    """Requested template geometry exceeds what a model supports."""


class NumericalError(HogbackError):
    """A numerical procedure failed (singular system, non-finite values)."""


class EmptyCorpusError(HogbackError):
    """A corpus yielded no usable images or detections."""


class ConfigError(HogbackError):
    """Invalid or missing configuration (e.g. an untrained algorithm)."""


class IoError(HogbackError):
    """File could not be read or written."""


class CorruptError(IoError):
    """A container file failed structural validation."""


class VersionError(IoError):
    """A container file was written by an incompatible format version."""
