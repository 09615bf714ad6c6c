"""Exception hierarchy shared across the package.

Every error raised by geoloc derives from :class:`GeolocError`, so callers
(and the CLI exit-code mapping) can distinguish configuration mistakes,
bad data, and numeric failures without string matching.
"""


class GeolocError(Exception):
    """Base class for all geoloc errors."""


class ConfigError(GeolocError):
    """Invalid configuration: bad fractions, hyperparameters, dimensions."""


class ParseError(GeolocError):
    """Malformed CSV content; message names the offending row."""


class SchemaError(GeolocError):
    """A required column is missing or no feature columns were found."""


class DataError(GeolocError):
    """Data content violates a contract (empty input, out-of-range values)."""


class ShapeError(GeolocError):
    """Array or layer dimensions do not line up."""


class StateError(GeolocError):
    """API called in the wrong order (e.g. backward before forward)."""


class NumericError(GeolocError):
    """A numeric failure (NaN/Inf) surfaced during optimization."""


class ArchiveError(GeolocError):
    """Model archive is corrupt, truncated, or structurally unexpected."""
