"""Exception types shared across the package."""

from __future__ import annotations


class CondembedError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(CondembedError):
    """Raised for unreadable or malformed corpus input."""


class FormatError(CondembedError):
    """Raised when a data file does not match its declared format."""


class OovError(CondembedError):
    """Raised when a query word is not in the vocabulary.

    Carries the closest vocabulary entries by edit distance as a
    diagnostic aid.
    """

    def __init__(self, word: str, suggestions: list[str] | None = None):
        self.word = word
        self.suggestions = suggestions or []
        hint = ", ".join(self.suggestions) if self.suggestions else "none"
        super().__init__(f"word {word!r} not in vocabulary (closest: {hint})")


class TrainingDivergedError(CondembedError):
    """Raised when a training step produces a non-finite gradient."""
