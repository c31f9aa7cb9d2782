"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericError -> 3,
I/O errors -> 4. Everything else is a plain crash (bug).
"""


class LatentGraphError(Exception):
    """Base class for all package errors."""


class ShapeError(LatentGraphError):
    """Operand shapes do not conform for the requested operation."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(map(str, shapes))}")


class NumericError(LatentGraphError):
    """A value became non-finite, or a numeric routine failed to converge."""


class UsageError(LatentGraphError):
    """An operation was called outside its contract (bad argument, wrong tape...)."""


class DegenerateInputError(LatentGraphError):
    """Input is valid in shape but degenerate in content (zero rows, single class...)."""


class ConfigError(LatentGraphError):
    """Experiment configuration is malformed or references missing files."""


class FormatError(LatentGraphError):
    """A data file does not match its expected on-disk format."""
