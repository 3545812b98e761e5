"""Dialogue corpus loading, tokenization, and joint-sequence assembly.

The encoder consumes one flat token sequence per sample: every context
utterance followed by a separator (the last separator doubles as the
context/question boundary), then a begin-of-sentence sentinel, then the
question tokens.  The sentinel gives an insertion before the first question
token a host position, so it is carried through tagging as if it were
question token number zero.
"""
from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptyTextError, ParseError, SchemaError

SEP_TEXT = "<sep>"
BOS_TEXT = "<bos>"
UNK_TEXT = "<unk>"
SEP_ID = 0
BOS_ID = 1
UNK_ID = 2
NUM_RESERVED = 3

_PUNCT = set(string.punctuation)


@dataclass(frozen=True)
class Token:
    """A surface token plus its vocabulary id."""

    text: str
    id: int = UNK_ID


def sep_token() -> Token:
    return Token(SEP_TEXT, SEP_ID)


def bos_token() -> Token:
    return Token(BOS_TEXT, BOS_ID)


class Vocabulary:
    """Token-text to id mapping with reserved separator/sentinel/unknown slots.

    Ids 0, 1, 2 are reserved for the separator, the sentinel, and the unknown
    marker; corpus tokens are numbered from 3 in first-seen order.  A frozen
    vocabulary maps unseen text to the unknown id instead of growing.
    """

    def __init__(self, tokens: Iterable[str] = (), frozen: bool = False):
        self._ids: dict[str, int] = {SEP_TEXT: SEP_ID, BOS_TEXT: BOS_ID, UNK_TEXT: UNK_ID}
        self._texts: list[str] = [SEP_TEXT, BOS_TEXT, UNK_TEXT]
        self.frozen = False
        for text in tokens:
            self.id_for(text)
        self.frozen = frozen

    def __len__(self) -> int:
        return len(self._texts)

    def __contains__(self, text: str) -> bool:
        return text in self._ids

    def id_for(self, text: str) -> int:
        """Id of ``text``, growing the vocabulary unless frozen."""
        idx = self._ids.get(text)
        if idx is not None:
            return idx
        if self.frozen:
            return UNK_ID
        idx = len(self._texts)
        self._ids[text] = idx
        self._texts.append(text)
        return idx

    def text_for(self, idx: int) -> str:
        return self._texts[idx]

    def freeze(self) -> None:
        self.frozen = True

    def to_texts(self) -> list[str]:
        """Corpus tokens in id order, reserved entries excluded."""
        return self._texts[NUM_RESERVED:]

    @classmethod
    def from_texts(cls, texts: Iterable[str], frozen: bool = True) -> "Vocabulary":
        return cls(texts, frozen=frozen)


def tokenize(text: str, mode: str = "word", vocab: Vocabulary | None = None) -> list[Token]:
    """Split raw text into tokens.

    Word mode splits on whitespace and detaches trailing ASCII punctuation
    into separate tokens ("graduate?" becomes "graduate", "?"); char mode
    yields one token per non-whitespace character.  Ids come from ``vocab``
    when given, otherwise every token carries the unknown id.
    """
    if mode not in ("word", "char"):
        raise ValueError(f"unknown token mode: {mode!r}")
    pieces: list[str] = []
    if mode == "char":
        pieces = [ch for ch in text if not ch.isspace()]
    else:
        for chunk in text.split():
            tail: list[str] = []
            while len(chunk) > 1 and chunk[-1] in _PUNCT:
                tail.append(chunk[-1])
                chunk = chunk[:-1]
            pieces.append(chunk)
            pieces.extend(reversed(tail))
    if not pieces:
        raise EmptyTextError("cannot tokenize empty or all-whitespace text")
    if vocab is None:
        return [Token(piece) for piece in pieces]
    return [Token(piece, vocab.id_for(piece)) for piece in pieces]


def detokenize(tokens: Sequence[Token], mode: str = "word") -> str:
    """Inverse of :func:`tokenize` up to whitespace placement."""
    if mode not in ("word", "char"):
        raise ValueError(f"unknown token mode: {mode!r}")
    joiner = " " if mode == "word" else ""
    return joiner.join(tok.text for tok in tokens)


@dataclass
class Example:
    """One dialogue sample: context utterances, current question, optional gold rewrite."""

    context: list[list[Token]]
    question: list[Token]
    rewrite: list[Token] | None = None
    id: str = ""

    def __post_init__(self):
        if not self.question:
            raise ValueError("question must contain at least one token")

    @property
    def context_tokens(self) -> list[Token]:
        """Context utterances flattened into one stream, in order."""
        return [tok for utterance in self.context for tok in utterance]


@dataclass
class JointSequence:
    """Flat encoder input with the segment boundaries needed to slice it back."""

    tokens: list[Token]
    context_range: tuple[int, int]
    question_range: tuple[int, int]
    bos_index: int

    @property
    def ids(self) -> list[int]:
        return [tok.id for tok in self.tokens]

    @property
    def context_positions(self) -> list[int]:
        """Indices of real context tokens inside ``context_range`` (separators skipped)."""
        lo, hi = self.context_range
        return [i for i in range(lo, hi) if self.tokens[i].id != SEP_ID]


def assemble(example: Example) -> JointSequence:
    """Build the joint encoder input for one example.

    Each context utterance is followed by a separator, then comes the
    sentinel, then the question.  With no context the sequence is just the
    sentinel plus the question.  Total length is therefore the number of
    context tokens plus the question length plus one separator per utterance
    plus one sentinel.
    """
    tokens: list[Token] = []
    for utterance in example.context:
        tokens.extend(utterance)
        tokens.append(sep_token())
    bos_index = len(tokens)
    tokens.append(bos_token())
    tokens.extend(example.question)
    return JointSequence(
        tokens=tokens,
        context_range=(0, bos_index),
        question_range=(bos_index + 1, len(tokens)),
        bos_index=bos_index,
    )


def example_from_record(
    record: dict,
    *,
    line_no: int | None = None,
    token_mode: str = "word",
    vocab: Vocabulary | None = None,
) -> Example:
    """Validate one raw corpus record and tokenize it into an Example."""
    if not isinstance(record, dict):
        raise SchemaError("record must be a JSON object", line=line_no)
    for name in ("context", "question"):
        if name not in record:
            raise SchemaError(f"missing required field {name!r}", line=line_no)
    question_text = record["question"]
    context_texts = record["context"]
    if not isinstance(question_text, str):
        raise SchemaError("'question' must be a string", line=line_no)
    if not isinstance(context_texts, list) or not all(isinstance(u, str) for u in context_texts):
        raise SchemaError("'context' must be a list of strings", line=line_no)
    try:
        question = tokenize(question_text, token_mode, vocab)
    except EmptyTextError as exc:
        raise SchemaError("'question' must contain at least one token", line=line_no) from exc
    context = [tokenize(utt, token_mode, vocab) for utt in context_texts if utt.strip()]
    rewrite = None
    rewrite_text = record.get("rewrite")
    if rewrite_text is not None:
        if not isinstance(rewrite_text, str):
            raise SchemaError("'rewrite' must be a string when present", line=line_no)
        try:
            rewrite = tokenize(rewrite_text, token_mode, vocab)
        except EmptyTextError as exc:
            raise SchemaError("'rewrite' must contain at least one token", line=line_no) from exc
    ex_id = record.get("id")
    if ex_id is None:
        ex_id = f"line-{line_no}" if line_no is not None else ""
    elif not isinstance(ex_id, str):
        ex_id = str(ex_id)
    return Example(context=context, question=question, rewrite=rewrite, id=ex_id)


def load_corpus(
    path,
    format: str = "jsonl",
    *,
    token_mode: str = "word",
    vocab: Vocabulary | None = None,
) -> list[Example]:
    """Read a JSONL corpus file into Examples, keeping file order.

    Each line holds one object with fields ``context`` (list of strings),
    ``question`` (string), and optionally ``rewrite`` and ``id``.  Ids
    default to the 1-based line number.  Blank lines are skipped; malformed
    JSON raises ParseError and bad fields raise SchemaError, both carrying
    the line number.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format: {format!r}")
    examples: list[Example] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=line_no) from exc
            examples.append(
                example_from_record(record, line_no=line_no, token_mode=token_mode, vocab=vocab)
            )
    return examples
