"""Exception hierarchy shared by all kalm modules.

CLI exit codes map onto these: usage problems exit 1, data/config problems
exit 2, numeric problems exit 3 (see cli.main).
"""


class KalmError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(KalmError):
    """Matrix shapes are incompatible for the requested operation."""


class EmptyInputError(KalmError):
    """An operation received empty text or an empty matrix."""


class DataError(KalmError):
    """Malformed corpus, knowledge, or checkpoint data."""


class CheckpointVersionError(DataError):
    """Checkpoint format tag does not match the reader."""


class ConfigError(KalmError):
    """Invalid or out-of-range configuration value."""


class NumericError(KalmError):
    """A computation produced or received non-finite values."""


class StateError(KalmError):
    """Operation invoked in an invalid order (e.g. backward without a loss)."""
