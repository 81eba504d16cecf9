"""Exception types shared across the package.

All user-facing failures derive from :class:`MeguideError`; the CLI maps
them to exit code 1 and everything else to exit code 2.
"""


class MeguideError(Exception):
    """Base class for all errors raised by meguide."""


class ParseError(MeguideError):
    """A text input file could not be parsed."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class ShapeError(MeguideError):
    """Array dimensions disagree with the graph they describe."""


class ValidationError(MeguideError):
    """A structural invariant of the data is violated."""


class EmptyInputError(MeguideError):
    """An operation received an empty node set or pool."""


class PreconditionError(MeguideError):
    """An operation was called outside its documented domain."""


class UndefinedMetricError(MeguideError):
    """The requested metric is undefined for this graph (e.g. no edges)."""


class SamplerError(MeguideError):
    """A sampler cannot produce a subgraph from the given graph."""


class CoverageError(MeguideError):
    """A node was requested that no subgraph in the test set covers."""


class ConfigurationError(MeguideError):
    """A config combination cannot produce a meaningful run."""


class ConversionError(MeguideError):
    """A raw dataset could not be converted to the native format."""


class SkipBatch(Exception):
    """Control-flow signal: the current subgraph has no labeled train node.

    Deliberately not a MeguideError; the training loop catches it, counts
    the skip and moves on.
    """
