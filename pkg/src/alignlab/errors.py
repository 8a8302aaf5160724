"""Error taxonomy shared across the workbench.

The CLI maps these onto exit codes: usage problems exit 2 (argparse),
DataError exits 3, NumericalError exits 4.
"""


class AlignlabError(Exception):
    """Base class for errors raised by this package."""


class DataError(AlignlabError):
    """Malformed, missing, or insufficient input data."""


class ConfigError(DataError):
    """Bad configuration: unknown key, type mismatch, out-of-range value."""


class NumericalError(AlignlabError):
    """Non-finite values or other numerical failures during compute."""
