"""Exception hierarchy shared across the engine.

Exit-code mapping for the CLI lives in cli.py; everything here is a plain
exception so library users can catch narrowly.
"""


class AlignRecError(Exception):
    """Base class for all engine errors."""


class ConfigError(AlignRecError):
    """Invalid configuration value, unknown key, or malformed ratios."""


class DataError(AlignRecError):
    """Input data violates a contract (non-finite values, missing rows, ...)."""


class ParseError(DataError):
    """Malformed input file; message names the offending line."""


class EmptyInputError(DataError):
    """An input file contained no records."""


class EmptyAfterFilterError(DataError):
    """k-core filtering removed everything; k is too large for the data."""


class DimensionError(DataError):
    """Shape mismatch between files, matrices, or configured sizes."""


class TrainingDivergedError(AlignRecError):
    """Loss or gradient became non-finite during optimization."""


class InternalInvariantError(AlignRecError):
    """A state the data-structure invariants should make impossible."""
