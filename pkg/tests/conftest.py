"""Shared builders for the test suite."""
from __future__ import annotations

import pytest

from convrewrite.corpus import Example, Vocabulary, tokenize
from convrewrite.labeling import LabeledExample, derive_labels


def build_example(
    context_texts: list[str],
    question: str,
    rewrite: str | None = None,
    vocab: Vocabulary | None = None,
    ex_id: str = "t0",
) -> Example:
    return Example(
        context=[tokenize(text, vocab=vocab) for text in context_texts],
        question=tokenize(question, vocab=vocab),
        rewrite=tokenize(rewrite, vocab=vocab) if rewrite is not None else None,
        id=ex_id,
    )


MICKELSON_CONTEXT = [
    "Phil Mickelson is an American professional golfer .",
    "He graduated from Arizona State University in 1992 .",
]
MICKELSON_QUESTION = "What year did he graduate ?"
MICKELSON_REWRITE = "What year did Mickelson graduate from Arizona State University ?"


@pytest.fixture
def mickelson_example() -> Example:
    return build_example(MICKELSON_CONTEXT, MICKELSON_QUESTION, MICKELSON_REWRITE, ex_id="fig1")


@pytest.fixture
def small_labeled() -> tuple[Vocabulary, LabeledExample]:
    """A compact labeled sample with one replace and one insert query."""
    vocab = Vocabulary()
    example = build_example(
        ["alpha beta gamma delta", "epsilon zeta eta"],
        "what did it do ?",
        "what did beta gamma do epsilon zeta ?",
        vocab=vocab,
        ex_id="small",
    )
    labeled = derive_labels(example)
    assert isinstance(labeled, LabeledExample)
    vocab.freeze()
    return vocab, labeled
