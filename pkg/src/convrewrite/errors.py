"""Exception types shared across the package."""
from __future__ import annotations


class ConvRewriteError(Exception):
    """Base class for every error raised by this package."""


class EmptyTextError(ConvRewriteError):
    """Tokenizer input was empty or all whitespace."""


class ParseError(ConvRewriteError):
    """A corpus line is not valid JSON."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class SchemaError(ConvRewriteError):
    """A corpus record is missing a required field or has the wrong type."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class LengthError(ConvRewriteError):
    """A token sequence exceeds the encoder's maximum length."""


class ShapeError(ConvRewriteError):
    """Array or list shapes do not line up."""


class EmptyContextError(ConvRewriteError):
    """Span scoring was asked to run over an empty context."""


class LabelError(ConvRewriteError):
    """A gold label lies outside the expected alphabet or range."""


class ConflictError(ConvRewriteError):
    """An edit plan contains overlapping or contradictory edits."""


class DivergenceError(ConvRewriteError):
    """Training loss stopped being finite.

    Carries the last parameter state that was still finite, plus the loss
    history up to the failing step, so callers can checkpoint both.
    """

    def __init__(self, message: str, last_params=None, history=None):
        super().__init__(message)
        self.last_params = last_params
        self.history = history if history is not None else []
