"""Build and apply grounded edit plans over question token sequences."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import Token
from .errors import ConflictError, ShapeError
from .labeling import ContextSpan, QuestionSpan

logger = logging.getLogger(__name__)


@dataclass
class Edit:
    """One grounded edit: where in the question, which action, which tokens."""

    action: str
    q_span: QuestionSpan
    target: list[Token]

    def __post_init__(self):
        if self.action != self.q_span.action:
            raise ValueError(f"edit action {self.action!r} does not match its span")
        if not self.target:
            raise ValueError("edit target must be non-empty")


@dataclass
class EditPlan:
    """Edits over one source question, kept sorted by start position."""

    source: list[Token]
    edits: list[Edit] = field(default_factory=list)


def _check_plan(plan: EditPlan) -> None:
    n = len(plan.source)
    replace_ranges: list[tuple[int, int]] = []
    insert_hosts: list[int] = []
    for edit in plan.edits:
        start = edit.q_span.start
        if edit.action == "replace":
            if start < 0 or start + edit.q_span.length > n:
                raise ConflictError(f"replace span ({start}, {edit.q_span.length}) runs outside the question")
            replace_ranges.append((start, start + edit.q_span.length))
        else:
            if start < -1 or start >= n:
                raise ConflictError(f"insert host {start} is outside the question")
            insert_hosts.append(start)
    replace_ranges.sort()
    for (_, prev_end), (nxt_start, _) in zip(replace_ranges, replace_ranges[1:]):
        if nxt_start < prev_end:
            raise ConflictError("replace spans overlap")
    for host in insert_hosts:
        for r_start, r_end in replace_ranges:
            if r_start <= host < r_end:
                raise ConflictError(f"insert host {host} falls inside a replace span")


def apply_plan(plan: EditPlan) -> list[Token]:
    """Apply the edits right-to-left so earlier positions stay valid.

    Replace substitutes the covered tokens with the target; insert places the
    target right after its host (after the sentinel means position 0).  An
    empty plan returns an exact copy of the source.  Overlapping edits raise
    ConflictError before anything is touched.
    """
    _check_plan(plan)
    out = list(plan.source)
    for edit in sorted(plan.edits, key=lambda e: e.q_span.start, reverse=True):
        start = edit.q_span.start
        if edit.action == "replace":
            out[start : start + edit.q_span.length] = edit.target
        else:
            out[start + 1 : start + 1] = edit.target
    return out


def _conflicts(edit: Edit, kept: Sequence[Edit]) -> bool:
    if edit.action == "replace":
        lo, hi = edit.q_span.start, edit.q_span.start + edit.q_span.length
        for other in kept:
            if other.action == "replace":
                o_lo = other.q_span.start
                o_hi = o_lo + other.q_span.length
                if lo < o_hi and o_lo < hi:
                    return True
            elif lo <= other.q_span.start < hi:
                return True
    else:
        host = edit.q_span.start
        for other in kept:
            if other.action == "replace":
                o_lo = other.q_span.start
                if o_lo <= host < o_lo + other.q_span.length:
                    return True
    return False


def plan_from_prediction(
    question: Sequence[Token],
    spans: Sequence[QuestionSpan],
    answers: Sequence[ContextSpan],
    context_tokens: Sequence[Token],
) -> EditPlan:
    """Pair detected edit sites with their selected context answers.

    Spans and answers are parallel lists; each answer's context tokens become
    the edit target.  Edits are sorted by start position, and an edit that
    conflicts with an earlier-starting one is dropped with a warning so a
    single bad prediction cannot sink the whole example.
    """
    if len(spans) != len(answers):
        raise ShapeError(f"{len(spans)} spans but {len(answers)} answers")
    edits: list[Edit] = []
    for span, answer in sorted(zip(spans, answers), key=lambda pair: pair[0].start):
        if answer.end >= len(context_tokens):
            raise ShapeError(
                f"answer span ({answer.start}, {answer.end}) runs past the context"
            )
        target = list(context_tokens[answer.start : answer.end + 1])
        edit = Edit(span.action, span, target)
        if _conflicts(edit, edits):
            logger.warning("dropping conflicting edit at question position %d", span.start)
            continue
        edits.append(edit)
    return EditPlan(source=list(question), edits=edits)
