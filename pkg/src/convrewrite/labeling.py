"""Derive edit supervision from (question, rewrite) pairs.

A self-contained rewrite differs from its conversational question by a small
edit script.  Aligning the two token sequences yields, per question token, an
action tag (keep / begin-insert / begin-replace / inside), and per edited span
a target token sequence that must be found verbatim in the flattened dialogue
context.  Samples whose targets cannot be grounded, or whose alignment
deletes question material outright, are excluded as invalid rather than
patched up.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from difflib import SequenceMatcher
from importlib import resources as importlib_resources
from typing import Iterable, Sequence

from .corpus import Example, Token, Vocabulary, detokenize, example_from_record
from .errors import ParseError, SchemaError

logger = logging.getLogger(__name__)

TAG_B_INSERT = "B_insert"
TAG_B_REPLACE = "B_replace"
TAG_I = "I"
TAG_O = "O"
# Column order of the tagging head's output distribution.
TAG_NAMES = (TAG_B_INSERT, TAG_B_REPLACE, TAG_I, TAG_O)

INVALID_DELETE = "delete_block"
INVALID_NOT_FOUND = "answer_not_found"


@dataclass(frozen=True)
class DiffBlock:
    """One aligned block between two token sequences (half-open index spans)."""

    kind: str  # equal | replace | insert | delete
    a_start: int
    a_end: int
    b_start: int
    b_end: int


def _texts(seq: Sequence) -> list:
    return [item.text if isinstance(item, Token) else item for item in seq]


def diff(a: Sequence, b: Sequence) -> list[DiffBlock]:
    """Align two token sequences into ordered blocks that cover both.

    Longest-matching-block recursion with the junk heuristics disabled: ties
    go to the match starting earliest in ``a``, then earliest in ``b``, and
    between two neighbouring matches exactly one non-equal block is emitted.
    Accepts Token sequences or any hashable items.
    """
    matcher = SequenceMatcher(None, _texts(a), _texts(b), autojunk=False)
    return [
        DiffBlock(kind, a_start, a_end, b_start, b_end)
        for kind, a_start, a_end, b_start, b_end in matcher.get_opcodes()
    ]


@dataclass(frozen=True)
class QuestionSpan:
    """A question-side edit site.

    ``start`` is a question token index; -1 addresses the sentinel so that an
    insertion before the first question token has a host.  Insert spans are
    always length 1 (the host token itself); replace spans cover the tokens
    being replaced.
    """

    start: int
    length: int
    action: str  # insert | replace

    def __post_init__(self):
        if self.action not in ("insert", "replace"):
            raise ValueError(f"unknown action: {self.action!r}")
        if self.length < 1:
            raise ValueError("span length must be at least 1")
        if self.start < -1:
            raise ValueError("span start must be >= -1")
        if self.action == "insert" and self.length != 1:
            raise ValueError("insert spans cover exactly the host token")
        if self.action == "replace" and self.start < 0:
            raise ValueError("replace spans cannot start at the sentinel")


@dataclass(frozen=True)
class ContextSpan:
    """Inclusive token interval in the flattened context stream."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"bad context span: ({self.start}, {self.end})")


@dataclass
class LabeledExample:
    """Example plus derived action tags and grounded edit targets.

    ``tags`` has one entry per question token plus a leading entry for the
    sentinel (index 0), so entry k labels question token k-1.  ``queries``
    pairs each edit site with the context span holding its target tokens.
    """

    example: Example
    tags: list[str]
    queries: list[tuple[QuestionSpan, ContextSpan]]


@dataclass(frozen=True)
class Invalid:
    """Marker for samples that cannot be turned into supervision."""

    example_id: str
    reason: str  # delete_block | answer_not_found


def find_answer(target: Sequence[Token], context: Sequence[Token]) -> ContextSpan | None:
    """Leftmost exact occurrence of ``target`` in the flattened context, or None."""
    if not target:
        raise ValueError("target must be non-empty")
    needle = _texts(target)
    haystack = _texts(context)
    width = len(needle)
    for start in range(len(haystack) - width + 1):
        if haystack[start : start + width] == needle:
            return ContextSpan(start, start + width - 1)
    return None


def derive_labels(
    example: Example, context_tokens: Sequence[Token] | None = None
) -> LabeledExample | Invalid:
    """Turn one (question, rewrite, context) triple into supervision.

    Replace blocks tag their first question token begin-replace with inside
    tags after it; insert blocks tag the token before the gap (the sentinel
    for a gap at position 0) begin-insert.  Every edit target must occur
    verbatim in the context; a failed lookup, or any block that deletes
    question tokens without replacement, marks the whole sample invalid.
    """
    if example.rewrite is None:
        raise ValueError("derive_labels needs an example with a gold rewrite")
    if context_tokens is None:
        context_tokens = example.context_tokens
    tags = [TAG_O] * (len(example.question) + 1)
    queries: list[tuple[QuestionSpan, ContextSpan]] = []
    for block in diff(example.question, example.rewrite):
        if block.kind == "equal":
            continue
        if block.kind == "delete":
            return Invalid(example.id, INVALID_DELETE)
        target = example.rewrite[block.b_start : block.b_end]
        if block.kind == "replace":
            span = QuestionSpan(block.a_start, block.a_end - block.a_start, "replace")
            assert tags[block.a_start + 1] == TAG_O
            tags[block.a_start + 1] = TAG_B_REPLACE
            for k in range(block.a_start + 1, block.a_end):
                tags[k + 1] = TAG_I
        else:
            span = QuestionSpan(block.a_start - 1, 1, "insert")
            # host slot in tags space; always an equal-block token or the
            # sentinel because the diff never emits two adjacent gaps
            assert tags[block.a_start] == TAG_O
            tags[block.a_start] = TAG_B_INSERT
        answer = find_answer(target, context_tokens)
        if answer is None:
            return Invalid(example.id, INVALID_NOT_FOUND)
        queries.append((span, answer))
    return LabeledExample(example, tags, queries)


_STOPWORDS_CACHE: frozenset[str] | None = None


def load_stopwords(path=None) -> frozenset[str]:
    """Stop-word set used by augmentation, one entry per line."""
    global _STOPWORDS_CACHE
    if path is None:
        if _STOPWORDS_CACHE is None:
            source = importlib_resources.files("convrewrite").joinpath("resources/stopwords.txt")
            text = source.read_text(encoding="utf-8")
            _STOPWORDS_CACHE = frozenset(ln.strip() for ln in text.splitlines() if ln.strip())
        return _STOPWORDS_CACHE
    with open(path, encoding="utf-8") as fh:
        return frozenset(ln.strip() for ln in fh if ln.strip())


def augment(example: Example, stopwords: frozenset[str] | None = None) -> list[Example]:
    """Extra training variants made by deleting stop words from the question.

    One deterministic pass: drop every question token whose text is in the
    stop-word set, keep context and rewrite unchanged.  No variant is emitted
    when nothing was dropped or when dropping would empty the question.  The
    variant forces the labeler to recover the dropped words as insertions,
    which is exactly the extra supervision wanted; variants that fail
    relabeling should simply be discarded by the caller.
    """
    if example.rewrite is None:
        raise ValueError("augment needs an example with a gold rewrite")
    if stopwords is None:
        stopwords = load_stopwords()
    kept = [tok for tok in example.question if tok.text not in stopwords]
    if not kept or len(kept) == len(example.question):
        return []
    return [
        Example(
            context=example.context,
            question=kept,
            rewrite=example.rewrite,
            id=f"{example.id}#aug",
        )
    ]


def labeled_to_record(item: LabeledExample, token_mode: str = "word") -> dict:
    """Serializable form of one labeled sample (supervision plus raw text)."""
    ex = item.example
    return {
        "id": ex.id,
        "tags": list(item.tags),
        "queries": [
            {
                "q_start": span.start,
                "q_len": span.length,
                "action": span.action,
                "ctx_start": ctx.start,
                "ctx_end": ctx.end,
            }
            for span, ctx in item.queries
        ],
        "context": [detokenize(utt, token_mode) for utt in ex.context],
        "question": detokenize(ex.question, token_mode),
        "rewrite": detokenize(ex.rewrite, token_mode) if ex.rewrite is not None else None,
    }


def write_labeled(path, items: Iterable[LabeledExample], token_mode: str = "word") -> None:
    """Write labeled samples as JSONL, one self-contained record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(labeled_to_record(item, token_mode), ensure_ascii=False))
            fh.write("\n")


def _labeled_from_record(
    record: dict, line_no: int, token_mode: str, vocab: Vocabulary | None
) -> LabeledExample:
    example = example_from_record(record, line_no=line_no, token_mode=token_mode, vocab=vocab)
    tags = record.get("tags")
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise SchemaError("'tags' must be a list of strings", line=line_no)
    if len(tags) != len(example.question) + 1:
        raise SchemaError(
            f"expected {len(example.question) + 1} tags, got {len(tags)}", line=line_no
        )
    bad = set(tags) - set(TAG_NAMES)
    if bad:
        raise SchemaError(f"unknown tags: {sorted(bad)}", line=line_no)
    raw_queries = record.get("queries")
    if not isinstance(raw_queries, list):
        raise SchemaError("'queries' must be a list", line=line_no)
    num_context = len(example.context_tokens)
    queries: list[tuple[QuestionSpan, ContextSpan]] = []
    for raw in raw_queries:
        try:
            span = QuestionSpan(int(raw["q_start"]), int(raw["q_len"]), str(raw["action"]))
            ctx = ContextSpan(int(raw["ctx_start"]), int(raw["ctx_end"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad query record: {exc}", line=line_no) from exc
        if ctx.end >= num_context:
            raise SchemaError("query context span runs past the context", line=line_no)
        queries.append((span, ctx))
    return LabeledExample(example, list(tags), queries)


def load_labeled(
    path, *, token_mode: str = "word", vocab: Vocabulary | None = None
) -> list[LabeledExample]:
    """Read a labeled JSONL file written by :func:`write_labeled`."""
    items: list[LabeledExample] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=line_no) from exc
            items.append(_labeled_from_record(record, line_no, token_mode, vocab))
    return items
