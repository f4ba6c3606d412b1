"""Exception hierarchy.

Three branches matter to callers (and to the CLI exit-code mapping):
``ValidationError`` for bad inputs, flags, or file content; ``NumericalError``
for linear-algebra failures; plain OS errors for file-system problems.
"""

from __future__ import annotations


class MixcastError(Exception):
    """Base class for all library errors."""


class ValidationError(MixcastError):
    """Invalid argument, configuration, or file content."""


class DimensionMismatch(ValidationError):
    """Array shapes are inconsistent with each other or with the horizon."""


class NonFiniteInput(ValidationError):
    """An input array contains NaN or infinity."""


class EmptyRange(ValidationError):
    """A requested index range selects no steps."""


class OutOfBounds(ValidationError):
    """An index or range falls outside the horizon."""


class InvalidS(ValidationError):
    """Requested ensemble size S is not a positive integer."""


class InvalidLevels(ValidationError):
    """Quantile levels are not strictly increasing inside (0, 1)."""


class InvalidConfig(ValidationError):
    """A generator or run configuration violates its invariants."""


class ShapeMismatch(ValidationError):
    """Two aligned data structures disagree in shape."""


class NumericalError(MixcastError):
    """A numerical operation failed in a way validation cannot predict."""


class NotPositiveDefinite(NumericalError):
    """Cholesky factorization failed even after jitter escalation."""


class AllComponentsDegenerate(NumericalError):
    """Every mixture component is unusable for the requested observation."""


class FormatError(ValidationError):
    """A serialized document violates its format contract."""


class ParseError(FormatError):
    """Malformed content; ``location`` points at the offending element."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class VersionMismatch(FormatError):
    """The document's format version is not supported."""


class DanglingDictionaryRef(FormatError):
    """A covariance references a pattern dictionary that is not defined."""


class RaggedRow(FormatError):
    """A table row has the wrong number of cells."""


class DuplicateId(FormatError):
    """An identifier that must be unique appears more than once."""
