"""Exception hierarchy shared across the package.

Run-level failures map onto CLI exit codes: ConfigError -> 1,
DataFileError -> 2, NumericError -> 3. Programmer-level misuse
(bad indices, shape mismatches) raises plain ValueError.
"""


class PdlError(Exception):
    """Base class for run-level errors."""


class ConfigError(PdlError):
    """Invalid configuration value or unknown config key."""


class DataFileError(PdlError):
    """Malformed or inconsistent data file; message carries line context."""


class NumericError(PdlError):
    """Non-finite values encountered; message names the producing stage."""


class SamplingError(PdlError):
    """Batch sampling cannot satisfy the requested composition."""
