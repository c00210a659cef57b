"""Exception hierarchy shared across the package."""


class DaylightNetError(Exception):
    """Base class for all package errors."""


class DimensionError(DaylightNetError):
    """Shapes of operands do not agree."""


class ParameterError(DaylightNetError):
    """An operation parameter is outside its valid range."""


class ConfigError(DaylightNetError):
    """A configuration file or option is invalid."""


class DataError(DaylightNetError):
    """Corpus ingestion failed (malformed row, unreadable file, bad join)."""


class FitError(DaylightNetError):
    """Fitting a statistic failed (e.g. constant column in a scaler)."""


class ValidationError(DaylightNetError):
    """An input record is missing required fields or violates an invariant."""


class NumericError(DaylightNetError):
    """A numeric invariant was violated (NaN/Inf in activations or loss)."""


class InternalError(DaylightNetError):
    """Invariant of the library itself was broken; indicates a bug."""
