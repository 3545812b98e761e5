"""Input validation helpers for the estimator and CLI surfaces.

These convert user-supplied samples (dicts or Example objects) into clean
Examples, re-raising schema problems as ValueError with the sample index so
callers see scikit-learn style validation messages.
"""
from __future__ import annotations

from typing import Iterable, Sequence

from .corpus import Example, Token, Vocabulary, example_from_record
from .errors import SchemaError


def _retag(tokens: Sequence[Token], vocab: Vocabulary | None) -> list[Token]:
    if vocab is None:
        return list(tokens)
    return [Token(tok.text, vocab.id_for(tok.text)) for tok in tokens]


def as_example(
    sample,
    *,
    token_mode: str = "word",
    vocab: Vocabulary | None = None,
    require_rewrite: bool = False,
    index: int | None = None,
) -> Example:
    """Coerce one raw sample into an Example.

    Accepts an Example (token ids are refreshed against ``vocab`` when one is
    given) or a mapping with context/question and optional rewrite/id
    fields.  Problems raise ValueError naming the sample.
    """
    where = f"sample {index}" if index is not None else "sample"
    if isinstance(sample, Example):
        example = Example(
            context=[_retag(utt, vocab) for utt in sample.context],
            question=_retag(sample.question, vocab),
            rewrite=_retag(sample.rewrite, vocab) if sample.rewrite is not None else None,
            id=sample.id,
        )
    elif isinstance(sample, dict):
        try:
            example = example_from_record(sample, token_mode=token_mode, vocab=vocab)
        except SchemaError as exc:
            raise ValueError(f"{where}: {exc}") from exc
        if not example.id and index is not None:
            example.id = f"sample-{index}"
    else:
        raise ValueError(f"{where}: expected a dict or Example, got {type(sample).__name__}")
    if require_rewrite and example.rewrite is None:
        raise ValueError(f"{where}: a gold rewrite is required here")
    return example


def check_samples(
    X: Iterable,
    *,
    token_mode: str = "word",
    vocab: Vocabulary | None = None,
    require_rewrite: bool = False,
) -> list[Example]:
    """Validate and convert an iterable of raw samples."""
    if isinstance(X, (str, bytes, dict)):
        raise ValueError("X must be an iterable of samples, not a single sample")
    samples = list(X)
    if not samples:
        raise ValueError("X is empty")
    return [
        as_example(
            sample,
            token_mode=token_mode,
            vocab=vocab,
            require_rewrite=require_rewrite,
            index=i,
        )
        for i, sample in enumerate(samples)
    ]
