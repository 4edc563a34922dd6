"""Exception taxonomy.

Every error the toolkit raises deliberately derives from LambdaEhrError so
callers can catch the whole family. DataError covers malformed inputs
(files, records, configs); its subclasses map to CLI exit code 2, while
anything else maps to exit code 3.
"""

from __future__ import annotations


class LambdaEhrError(Exception):
    """Base class for all toolkit errors."""


class LfSyntaxError(LambdaEhrError):
    """Malformed logical-form text.

    Carries the byte offset where parsing stopped and a short description of
    what was expected there.
    """

    def __init__(self, message: str, position: int, expected: str):
        super().__init__(f"{message} at offset {position}: expected {expected}")
        self.position = position
        self.expected = expected


class UnknownPredicate(LambdaEhrError):
    """A predicate name not present in the active registry."""

    def __init__(self, name: str):
        super().__init__(f"unknown predicate: {name!r}")
        self.name = name


class ArityMismatch(LambdaEhrError):
    """A predicate applied to the wrong number of arguments."""

    def __init__(self, name: str, expected: int, got: int):
        super().__init__(
            f"predicate {name!r} takes {expected} argument(s), got {got}"
        )
        self.name = name
        self.expected = expected
        self.got = got


class UnboundVariable(LambdaEhrError):
    """A variable used outside the scope of any enclosing binder."""

    def __init__(self, name: str):
        super().__init__(f"unbound variable: {name!r}")
        self.name = name


class TypeMismatch(LambdaEhrError):
    """A sketch slot filled with a value of the wrong kind.

    `position` indexes into the detail list that was being consumed.
    """

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"detail {position}: {message}"
        super().__init__(message)
        self.position = position


class DataError(LambdaEhrError):
    """Malformed input data (dataset files, configs, lexicons)."""


class EntityAlignmentError(DataError):
    """Entity annotations that do not line up with the question or form."""


class OverlappingSpans(EntityAlignmentError):
    """Two entity spans that overlap within one question."""


class SpanOutOfRange(EntityAlignmentError):
    """An entity span extending beyond the question text."""


class MismatchedDatasets(DataError):
    """Two prediction sets that do not cover the same examples."""


class SpecExhausted(DataError):
    """A corpus spec that cannot yield as many distinct examples as asked."""


class InsufficientMaterial(DataError):
    """An augmentation pool or table too small for the requested count."""


class EmptyDataset(DataError):
    """An operation that needs at least one example got none."""


class TooFewExamples(DataError):
    """A dataset too small for the requested fold count."""


class MalformedLine(DataError):
    """An unreadable line in a word-vector file.

    Carries the 1-based line number.
    """

    def __init__(self, lineno: int, detail: str):
        super().__init__(f"line {lineno}: {detail}")
        self.lineno = lineno


class DimensionMismatch(DataError):
    """A word vector whose width differs from the declared dimension."""

    def __init__(self, lineno: int, expected: int, got: int):
        super().__init__(
            f"line {lineno}: expected {expected} values, got {got}"
        )
        self.lineno = lineno
        self.expected = expected
        self.got = got


class NoCandidates(LambdaEhrError):
    """Selection requested from an empty candidate set."""


class EmptyInput(LambdaEhrError):
    """An encoder called on an empty token sequence."""


class NonFiniteLoss(LambdaEhrError):
    """Training hit a NaN or infinite loss.

    Carries the epoch and example index where it happened.
    """

    def __init__(self, epoch: int, step: int):
        super().__init__(f"non-finite loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


class BeamExhausted(LambdaEhrError):
    """Beam search ended with no complete hypothesis."""


class NotDerivable(LambdaEhrError):
    """A logical form the grammar has no covering constructor for."""


class IllegalAction(LambdaEhrError):
    """An action that is invalid in the current derivation state."""

    def __init__(self, message: str, index: int | None = None):
        if index is not None:
            message = f"action {index}: {message}"
        super().__init__(message)
        self.index = index


class IncompleteDerivation(LambdaEhrError):
    """An action sequence that ends with the derivation still open."""


class UnparseableQuestion(LambdaEhrError):
    """A question for which decoding produced no valid logical form."""


class CheckpointError(LambdaEhrError):
    """A model checkpoint that cannot be read back."""


class VocabularyGap(UserWarning):
    """Cross-dataset evaluation found target-question tokens the source
    model never saw in training. Not fatal: the run proceeds and the
    warning lists the gap."""
