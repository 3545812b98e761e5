"""End-to-end rewriting of single examples with a trained model."""
from __future__ import annotations

from dataclasses import dataclass, field

from .comprehend import select_span, span_probs
from .corpus import Example, Token, assemble
from .detect import extract_spans, greedy_decode, tag_probs
from .editing import EditPlan, apply_plan, plan_from_prediction
from .encoder import ModelParams, encode
from .labeling import Invalid, derive_labels


@dataclass
class RewriteResult:
    """Everything one rewrite produced, for tracing and serialization."""

    example: Example
    prediction: list[Token]
    tags: list[str] = field(default_factory=list)
    plan: EditPlan | None = None
    error: str | None = None


def rewrite_example(
    params: ModelParams,
    example: Example,
    *,
    max_answer_len: int = 30,
    oracle: bool = False,
) -> RewriteResult:
    """Detect edit sites, ground each one in the context, apply the edits.

    One encoder pass serves both stages.  With ``oracle`` the gold labels
    derived from the example's own rewrite supply the edits instead of model
    predictions, which gives the upper-bound / round-trip path; an example
    whose labels are invalid then falls back to a copy with the reason
    recorded.
    """
    context_tokens = example.context_tokens
    if oracle:
        labeled = derive_labels(example)
        if isinstance(labeled, Invalid):
            return RewriteResult(
                example,
                list(example.question),
                error=f"invalid:{labeled.reason}",
            )
        tags = list(labeled.tags)
        spans = [span for span, _ in labeled.queries]
        answers = [ctx for _, ctx in labeled.queries]
    else:
        seq = assemble(example)
        output = encode(params, seq)
        tags = greedy_decode(tag_probs(params, output.question_vecs))
        spans = extract_spans(tags)
        answers = []
        for query_index, span in enumerate(spans):
            query_vec = output.question_vecs[span.start + 1]
            dist = span_probs(params, output.context_vecs, query_vec, query_index)
            answers.append(select_span(dist, max_answer_len))
    plan = plan_from_prediction(example.question, spans, answers, context_tokens)
    return RewriteResult(example, apply_plan(plan), tags, plan)
