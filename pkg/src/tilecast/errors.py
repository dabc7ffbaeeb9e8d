"""Exception types shared across the package."""


class TilecastError(Exception):
    """Base class for all package errors."""


class ShapeError(TilecastError):
    """Array or series dimensions do not satisfy an operation's contract."""


class CoordinateError(TilecastError):
    """A cell or rectangle lies outside its host grid."""


class ConfigError(TilecastError):
    """Invalid or inconsistent configuration."""


class FitError(TilecastError):
    """A least-squares or root-finding fit failed.

    ``residual`` carries the final solver residual when one is available.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class MetricUndefinedError(TilecastError):
    """A quality metric is undefined for the given inputs (e.g. one cluster)."""


class ManifestError(TilecastError):
    """A model manifest failed to parse or validate; names the offending field."""


class FormatError(TilecastError):
    """A stream file is malformed; ``offset`` is the failing byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class StreamError(TilecastError):
    """The frame stream violated its contract mid-run (e.g. shape drift)."""
