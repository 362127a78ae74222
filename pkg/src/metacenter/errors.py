"""Exception taxonomy shared across the toolkit.

ConfigurationError and DataError indicate bad user input (CLI exit code 2);
the remaining errors indicate runtime failures (exit code 1).
"""


class MetacenterError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(MetacenterError):
    """Invalid configuration: non-floating hull, bad flags, bad files."""


class DataError(MetacenterError):
    """Malformed or insufficient data: unordered timestamps, empty batch."""


class GeometryError(MetacenterError):
    """Degenerate or inconsistent mesh geometry."""


class NumericalError(MetacenterError):
    """Numerical failure: non-convergence, underflow."""


class TrainingError(MetacenterError):
    """Training diverged or produced non-finite values."""
