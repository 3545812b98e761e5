"""Tests for edit plans: application order, conflict handling, pairing."""
from __future__ import annotations

import logging

import numpy as np
import pytest

from convrewrite.corpus import tokenize
from convrewrite.editing import Edit, EditPlan, apply_plan, plan_from_prediction
from convrewrite.errors import ConflictError, ShapeError
from convrewrite.labeling import ContextSpan, QuestionSpan


def texts(tokens):
    return [t.text for t in tokens]


def replace(start, length, target):
    return Edit("replace", QuestionSpan(start, length, "replace"), tokenize(target))


def insert(host, target):
    return Edit("insert", QuestionSpan(host, 1, "insert"), tokenize(target))


# Left-to-right oracle: apply edits in ascending start order while tracking
# the offset each earlier edit introduced.  Same semantics, opposite order.

def oracle_apply(source, edits):
    out = list(source)
    offset = 0
    for edit in sorted(edits, key=lambda e: e.q_span.start):
        start = edit.q_span.start + offset
        if edit.action == "replace":
            out[start : start + edit.q_span.length] = edit.target
            offset += len(edit.target) - edit.q_span.length
        else:
            out[start + 1 : start + 1] = edit.target
            offset += len(edit.target)
    return out


class TestEdit:
    def test_action_must_match_span(self):
        with pytest.raises(ValueError):
            Edit("insert", QuestionSpan(0, 1, "replace"), tokenize("x"))

    def test_target_must_be_non_empty(self):
        with pytest.raises(ValueError):
            Edit("replace", QuestionSpan(0, 1, "replace"), [])


class TestApplyPlan:
    def test_empty_plan_copies(self):
        source = tokenize("a b c")
        plan = EditPlan(source=source)
        result = apply_plan(plan)
        assert texts(result) == ["a", "b", "c"]
        assert result is not source

    def test_single_replace(self):
        plan = EditPlan(tokenize("who did it win"), [replace(2, 1, "the race")])
        assert texts(apply_plan(plan)) == ["who", "did", "the", "race", "win"]

    def test_single_insert(self):
        plan = EditPlan(tokenize("did he go"), [insert(1, "really")])
        assert texts(apply_plan(plan)) == ["did", "he", "really", "go"]

    def test_insert_after_sentinel_prepends(self):
        plan = EditPlan(tokenize("did it rain"), [insert(-1, "in 1856")])
        assert texts(apply_plan(plan)) == ["in", "1856", "did", "it", "rain"]

    def test_flagship_combination(self):
        source = tokenize("What year did he graduate ?")
        plan = EditPlan(
            source,
            [replace(3, 1, "Mickelson"), insert(4, "from Arizona State University")],
        )
        assert texts(apply_plan(plan)) == [
            "What", "year", "did", "Mickelson", "graduate",
            "from", "Arizona", "State", "University", "?",
        ]

    def test_insert_at_last_token(self):
        plan = EditPlan(tokenize("did he go"), [insert(2, "home")])
        assert texts(apply_plan(plan)) == ["did", "he", "go", "home"]

    def test_adjacent_replaces_allowed(self):
        plan = EditPlan(tokenize("a b c d"), [replace(1, 1, "x"), replace(2, 1, "y z")])
        assert texts(apply_plan(plan)) == ["a", "x", "y", "z", "d"]

    def test_insert_on_replaced_boundary_token_allowed(self):
        # host 1 is the last token of nothing: replace covers [2, 3), host 1 sits
        # just before it, so both edits stand
        plan = EditPlan(tokenize("a b c"), [insert(1, "x"), replace(2, 1, "y")])
        assert texts(apply_plan(plan)) == ["a", "b", "x", "y"]

    def test_replace_out_of_bounds_raises(self):
        # negative starts cannot even be constructed; QuestionSpan rejects them
        with pytest.raises(ConflictError):
            apply_plan(EditPlan(tokenize("a b"), [replace(1, 2, "x")]))
        with pytest.raises(ConflictError):
            apply_plan(EditPlan(tokenize("a b"), [replace(2, 1, "x")]))

    def test_insert_out_of_bounds_raises(self):
        with pytest.raises(ConflictError):
            apply_plan(EditPlan(tokenize("a b"), [insert(2, "x")]))

    def test_overlapping_replaces_raise(self):
        plan = EditPlan(tokenize("a b c d"), [replace(0, 2, "x"), replace(1, 2, "y")])
        with pytest.raises(ConflictError):
            apply_plan(plan)

    def test_insert_inside_replace_raises(self):
        plan = EditPlan(tokenize("a b c d"), [replace(1, 2, "x"), insert(2, "y")])
        with pytest.raises(ConflictError):
            apply_plan(plan)

    def test_source_untouched_on_conflict(self):
        source = tokenize("a b c d")
        plan = EditPlan(source, [replace(0, 2, "x"), replace(1, 2, "y")])
        with pytest.raises(ConflictError):
            apply_plan(plan)
        assert texts(source) == ["a", "b", "c", "d"]

    def test_agrees_with_left_to_right_oracle_fuzz(self):
        rng = np.random.default_rng(31)
        pool = [f"w{i}" for i in range(20)]
        for _ in range(300):
            n = int(rng.integers(2, 12))
            source = tokenize(" ".join(pool[i] for i in rng.integers(0, 20, size=n)))
            edits = []
            cursor = -1
            while cursor < n - 1:
                cursor += int(rng.integers(1, 4))
                if cursor >= n:
                    break
                kind = rng.random()
                if kind < 0.4:
                    length = int(rng.integers(1, min(3, n - cursor) + 1))
                    edits.append(replace(cursor, length, " ".join(rng.choice(pool, size=2))))
                    cursor += length - 1
                elif kind < 0.7:
                    edits.append(insert(cursor, " ".join(rng.choice(pool, size=int(rng.integers(1, 4))))))
            order = rng.permutation(len(edits))
            shuffled = [edits[i] for i in order]
            result = apply_plan(EditPlan(source, shuffled))
            expected = oracle_apply(source, edits)
            assert texts(result) == texts(expected)


class TestPlanFromPrediction:
    def test_pairs_spans_with_answers(self):
        question = tokenize("what did it do")
        context = tokenize("the storm hit town")
        spans = [QuestionSpan(2, 1, "replace")]
        answers = [ContextSpan(0, 1)]
        plan = plan_from_prediction(question, spans, answers, context)
        assert len(plan.edits) == 1
        assert texts(plan.edits[0].target) == ["the", "storm"]
        assert texts(apply_plan(plan)) == ["what", "did", "the", "storm", "do"]

    def test_orders_edits_by_start(self):
        question = tokenize("a b c d")
        context = tokenize("x y")
        spans = [QuestionSpan(2, 1, "replace"), QuestionSpan(0, 1, "replace")]
        answers = [ContextSpan(0, 0), ContextSpan(1, 1)]
        plan = plan_from_prediction(question, spans, answers, context)
        assert [e.q_span.start for e in plan.edits] == [0, 2]
        assert texts(apply_plan(plan)) == ["y", "b", "x", "d"]

    def test_length_mismatch_raises(self):
        with pytest.raises(ShapeError):
            plan_from_prediction(tokenize("a"), [QuestionSpan(0, 1, "replace")], [], tokenize("x"))

    def test_answer_past_context_raises(self):
        with pytest.raises(ShapeError):
            plan_from_prediction(
                tokenize("a b"),
                [QuestionSpan(0, 1, "replace")],
                [ContextSpan(1, 5)],
                tokenize("x y"),
            )

    def test_conflicting_edit_dropped_with_warning(self, caplog):
        question = tokenize("a b c d")
        context = tokenize("x y z")
        spans = [QuestionSpan(0, 3, "replace"), QuestionSpan(1, 1, "insert")]
        answers = [ContextSpan(0, 0), ContextSpan(1, 1)]
        with caplog.at_level(logging.WARNING, logger="convrewrite.editing"):
            plan = plan_from_prediction(question, spans, answers, context)
        assert len(plan.edits) == 1
        assert plan.edits[0].q_span == QuestionSpan(0, 3, "replace")
        assert any("conflicting edit" in message for message in caplog.messages)
        assert texts(apply_plan(plan)) == ["x", "d"]

    def test_insert_next_to_replace_is_kept(self):
        question = tokenize("a b c")
        context = tokenize("x y")
        spans = [QuestionSpan(1, 1, "replace"), QuestionSpan(0, 1, "insert")]
        answers = [ContextSpan(0, 0), ContextSpan(1, 1)]
        plan = plan_from_prediction(question, spans, answers, context)
        assert len(plan.edits) == 2
        assert texts(apply_plan(plan)) == ["a", "y", "x", "c"]

    def test_insert_hosted_inside_replace_is_dropped(self, caplog):
        question = tokenize("a b c")
        context = tokenize("x y")
        spans = [QuestionSpan(0, 1, "replace"), QuestionSpan(0, 1, "insert")]
        answers = [ContextSpan(0, 0), ContextSpan(1, 1)]
        with caplog.at_level(logging.WARNING, logger="convrewrite.editing"):
            plan = plan_from_prediction(question, spans, answers, context)
        assert [e.action for e in plan.edits] == ["replace"]
        assert texts(apply_plan(plan)) == ["x", "b", "c"]
