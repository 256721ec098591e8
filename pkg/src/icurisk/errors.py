"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (see cli.py): config errors
exit 2, data/schema errors 3, numeric failures 4, precondition
violations 5.
"""


class ConfigError(Exception):
    """Bad, missing, or inconsistent run configuration."""


class DataFormatError(Exception):
    """Malformed input data: schema violations, bad rows, corrupt files."""


class NumericError(Exception):
    """Numeric failure during fitting or evaluation (overflow, divergence)."""


class PreconditionError(Exception):
    """An operation was called outside its documented domain."""
