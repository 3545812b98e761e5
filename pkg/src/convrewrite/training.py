"""Joint training of the tagging and span heads, plus the gradient checker.

The joint objective is a weighted sum of two cross-entropy terms: the tag
distribution against the gold tags (summed over positions, averaged over
examples) and the span start/end distributions against the gold context
spans (summed over queries, averaged over examples).  Per-example sums are
deliberately not length-normalized; a normalized variant sits behind a
config flag for experiments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .comprehend import SpanDistribution, span_head_backward, span_head_forward
from .corpus import assemble
from .detect import TAG_INDEX, TagDistribution, tag_head_backward, tag_logits
from .encoder import (
    EncoderConfig,
    ModelParams,
    backward_hidden,
    forward_hidden,
    init_params,
    softmax,
)
from .errors import DivergenceError, LabelError, ShapeError
from .labeling import LabeledExample

PROB_FLOOR = 1e-12


@dataclass
class LossConfig:
    """Weights of the two loss terms and the optional length normalization."""

    seq_weight: float = 5.0
    span_weight: float = 3.0
    normalize: bool = False

    def __post_init__(self):
        if self.seq_weight < 0 or self.span_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.seq_weight == 0 and self.span_weight == 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass
class OptimConfig:
    """Adam settings with a linear warm-up over the first fraction of steps."""

    learning_rate: float = 1e-3
    warmup_ratio: float = 0.1
    batch_size: int = 24
    epochs: int = 3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.warmup_ratio <= 1:
            raise ValueError("warmup_ratio must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class StepRecord:
    """One optimizer step of the loss history (CSV columns, in order)."""

    step: int
    l_seq: float
    l_span: float
    l_total: float


def _nll(prob: float) -> float:
    return -math.log(max(prob, PROB_FLOOR))


def seq_loss(
    dists: Sequence[TagDistribution],
    gold_tags: Sequence[Sequence[str]],
    normalize: bool = False,
) -> float:
    """Tagging cross entropy: per-example sum over positions, mean over examples."""
    if len(dists) != len(gold_tags):
        raise ShapeError(f"{len(dists)} distributions but {len(gold_tags)} tag lists")
    if not dists:
        raise ValueError("empty batch")
    total = 0.0
    for dist, tags in zip(dists, gold_tags):
        if dist.probs.shape[0] != len(tags):
            raise ShapeError(
                f"distribution covers {dist.probs.shape[0]} positions but got {len(tags)} tags"
            )
        value = 0.0
        for row, tag in zip(dist.probs, tags):
            idx = TAG_INDEX.get(tag)
            if idx is None:
                raise LabelError(f"unknown tag {tag!r}")
            value += _nll(row[idx])
        if normalize and len(tags):
            value /= len(tags)
        total += value
    return total / len(dists)


def span_loss(
    dists: Sequence[Sequence[SpanDistribution]],
    gold_spans: Sequence[Sequence[tuple[int, int]]],
    normalize: bool = False,
) -> float:
    """Span cross entropy: start plus end term per query, summed per example,
    mean over examples.  Examples with no queries contribute zero."""
    if len(dists) != len(gold_spans):
        raise ShapeError(f"{len(dists)} distribution lists but {len(gold_spans)} span lists")
    if not dists:
        raise ValueError("empty batch")
    total = 0.0
    for example_dists, example_gold in zip(dists, gold_spans):
        if len(example_dists) != len(example_gold):
            raise ShapeError(
                f"{len(example_dists)} query distributions but {len(example_gold)} gold spans"
            )
        value = 0.0
        for dist, (gold_start, gold_end) in zip(example_dists, example_gold):
            m = len(dist.start_probs)
            if not (0 <= gold_start < m and 0 <= gold_end < m):
                raise LabelError(f"gold span ({gold_start}, {gold_end}) outside context of {m}")
            value += _nll(dist.start_probs[gold_start]) + _nll(dist.end_probs[gold_end])
        if normalize and example_gold:
            value /= len(example_gold)
        total += value
    return total / len(dists)


def joint_loss(seq_value: float, span_value: float, config: LossConfig | None = None) -> float:
    config = config or LossConfig()
    return config.seq_weight * seq_value + config.span_weight * span_value


def _example_forward(params: ModelParams, item: LabeledExample):
    """Shared forward pass for loss and gradient computation."""
    seq = assemble(item.example)
    hidden, cache = forward_hidden(params, seq.ids)
    ctx_positions = seq.context_positions
    context_vecs = hidden[ctx_positions]
    question_vecs = hidden[seq.bos_index :]
    if question_vecs.shape[0] != len(item.tags):
        raise ShapeError(
            f"example {item.example.id!r}: {len(item.tags)} tags for "
            f"{question_vecs.shape[0]} question positions"
        )
    return seq, hidden, cache, ctx_positions, context_vecs, question_vecs


def example_losses(
    params: ModelParams, item: LabeledExample, normalize: bool = False
) -> tuple[float, float]:
    """Forward-only loss terms (unweighted) for one example."""
    _, _, _, _, context_vecs, question_vecs = _example_forward(params, item)
    probs = softmax(tag_logits(params, question_vecs))
    l_seq = sum(_nll(row[TAG_INDEX[tag]]) for row, tag in zip(probs, item.tags))
    if normalize and item.tags:
        l_seq /= len(item.tags)
    l_span = 0.0
    for q_span, ctx_span in item.queries:
        query_vec = question_vecs[q_span.start + 1]
        for head, gold in (("span_start", ctx_span.start), ("span_end", ctx_span.end)):
            scores, _ = span_head_forward(params, head, context_vecs, query_vec)
            l_span += _nll(softmax(scores)[gold])
    if normalize and item.queries:
        l_span /= len(item.queries)
    return l_seq, l_span


def example_losses_and_grads(
    params: ModelParams, item: LabeledExample, loss: LossConfig
) -> tuple[float, float, dict[str, np.ndarray]]:
    """Loss terms plus gradients of the weighted joint loss for one example.

    The returned gradients are of seq_weight * l_seq + span_weight * l_span
    before any batch averaging; the caller divides by the batch size.
    """
    _, hidden, cache, ctx_positions, context_vecs, question_vecs = _example_forward(params, item)
    grads = params.zeros_like()
    d_context = np.zeros_like(context_vecs)
    d_question = np.zeros_like(question_vecs)

    probs = softmax(tag_logits(params, question_vecs))
    l_seq = 0.0
    d_logits = probs.copy()
    for k, tag in enumerate(item.tags):
        idx = TAG_INDEX.get(tag)
        if idx is None:
            raise LabelError(f"unknown tag {tag!r}")
        l_seq += _nll(probs[k, idx])
        d_logits[k, idx] -= 1.0
    seq_norm = 1.0 / len(item.tags) if loss.normalize and item.tags else 1.0
    l_seq *= seq_norm
    d_logits *= loss.seq_weight * seq_norm
    d_q_head, head_grads = tag_head_backward(params, question_vecs, d_logits)
    d_question += d_q_head
    for name, grad in head_grads.items():
        grads[name] += grad

    l_span = 0.0
    span_norm = 1.0 / len(item.queries) if loss.normalize and item.queries else 1.0
    for q_span, ctx_span in item.queries:
        query_row = q_span.start + 1
        query_vec = question_vecs[query_row]
        for head, gold in (("span_start", ctx_span.start), ("span_end", ctx_span.end)):
            scores, head_cache = span_head_forward(params, head, context_vecs, query_vec)
            span_probs_row = softmax(scores)
            if not 0 <= gold < len(span_probs_row):
                raise LabelError(f"gold index {gold} outside context of {len(span_probs_row)}")
            l_span += _nll(span_probs_row[gold])
            d_scores = span_probs_row.copy()
            d_scores[gold] -= 1.0
            d_scores *= loss.span_weight * span_norm
            d_ctx, d_qvec, head_grads = span_head_backward(params, head, head_cache, d_scores)
            d_context += d_ctx
            d_question[query_row] += d_qvec
            for name, grad in head_grads.items():
                grads[name] += grad
    l_span *= span_norm

    d_hidden = np.zeros_like(hidden)
    if ctx_positions:
        d_hidden[ctx_positions] += d_context
    d_hidden[len(hidden) - len(d_question) :] += d_question
    enc_grads = backward_hidden(params, cache, d_hidden)
    for name, grad in enc_grads.items():
        grads[name] += grad
    return l_seq, l_span, grads


def _learning_rate(step: int, warmup_steps: int, base: float) -> float:
    if step < warmup_steps:
        return base * (step + 1) / warmup_steps
    return base


def train(
    corpus: Sequence[LabeledExample],
    encoder_config: EncoderConfig,
    optim: OptimConfig | None = None,
    loss: LossConfig | None = None,
    init: ModelParams | None = None,
) -> tuple[ModelParams, list[StepRecord]]:
    """Mini-batch Adam over the joint loss with linear warm-up.

    Deterministic for fixed seeds: initialization, shuffling, and update
    order are all driven by the configured seeds, and batch reductions run
    in a fixed order on a single thread.  Raises DivergenceError carrying
    the last finite parameters if the loss or a gradient stops being finite.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    optim = optim or OptimConfig()
    loss = loss or LossConfig()
    params = init.copy() if init is not None else init_params(encoder_config)
    n = len(corpus)
    steps_per_epoch = math.ceil(n / optim.batch_size)
    total_steps = optim.epochs * steps_per_epoch
    warmup_steps = int(optim.warmup_ratio * total_steps)
    rng = np.random.default_rng(optim.seed)
    adam_m = params.zeros_like()
    adam_v = params.zeros_like()
    history: list[StepRecord] = []
    step = 0
    for _ in range(optim.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, optim.batch_size):
            chunk = order[lo : lo + optim.batch_size]
            grad_sum = params.zeros_like()
            l_seq_sum = 0.0
            l_span_sum = 0.0
            try:
                for idx in chunk:
                    l_seq_i, l_span_i, grads = example_losses_and_grads(params, corpus[idx], loss)
                    l_seq_sum += l_seq_i
                    l_span_sum += l_span_i
                    for name, grad in grads.items():
                        grad_sum[name] += grad
            except FloatingPointError as exc:
                raise DivergenceError(
                    f"non-finite activations at step {step}: {exc}",
                    last_params=params.copy(),
                    history=history,
                ) from exc
            batch = len(chunk)
            l_seq_val = l_seq_sum / batch
            l_span_val = l_span_sum / batch
            l_total = joint_loss(l_seq_val, l_span_val, loss)
            finite = math.isfinite(l_total) and all(
                np.isfinite(grad).all() for grad in grad_sum.values()
            )
            if not finite:
                raise DivergenceError(
                    f"non-finite loss or gradient at step {step}",
                    last_params=params.copy(),
                    history=history,
                )
            lr = _learning_rate(step, warmup_steps, optim.learning_rate)
            t = step + 1
            bias1 = 1.0 - optim.beta1**t
            bias2 = 1.0 - optim.beta2**t
            for name, tensor in params.tensors.items():
                grad = grad_sum[name] / batch
                adam_m[name] = optim.beta1 * adam_m[name] + (1.0 - optim.beta1) * grad
                adam_v[name] = optim.beta2 * adam_v[name] + (1.0 - optim.beta2) * grad * grad
                m_hat = adam_m[name] / bias1
                v_hat = adam_v[name] / bias2
                tensor -= lr * m_hat / (np.sqrt(v_hat) + optim.epsilon)
            history.append(StepRecord(step, float(l_seq_val), float(l_span_val), float(l_total)))
            step += 1
    return params, history


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference gradient check."""

    max_rel_error: float
    tolerance: float
    probes: int
    passed: bool
    worst: str


def grad_check(
    params: ModelParams,
    item: LabeledExample,
    tolerance: float = 1e-4,
    probes: int = 100,
    step: float = 1e-5,
    loss: LossConfig | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic joint-loss gradients against central differences.

    Probes are spread over every tensor (at least one coordinate each, at
    least ``probes`` in total).  The error of a probe is measured relative
    to the larger of the two gradient magnitudes, floored at 1e-3 so that
    floating-point noise on near-zero coordinates cannot dominate the
    verdict.  The caller's parameters are left untouched.
    """
    loss = loss or LossConfig()
    work = params.copy()
    l_seq_val, l_span_val, analytic = example_losses_and_grads(work, item, loss)

    def loss_value() -> float:
        l_seq_i, l_span_i = example_losses(work, item, loss.normalize)
        return joint_loss(l_seq_i, l_span_i, loss)

    rng = np.random.default_rng(seed)
    names = list(work.tensors)
    per_tensor = max(1, math.ceil(probes / len(names)))
    max_rel = 0.0
    worst = ""
    count = 0
    for name in names:
        tensor = work.tensors[name]
        k = min(tensor.size, per_tensor)
        flats = rng.choice(tensor.size, size=k, replace=False)
        for flat in flats:
            original = tensor.flat[flat]
            tensor.flat[flat] = original + step
            upper = loss_value()
            tensor.flat[flat] = original - step
            lower = loss_value()
            tensor.flat[flat] = original
            fd = (upper - lower) / (2.0 * step)
            an = analytic[name].flat[flat]
            rel = abs(an - fd) / max(abs(an), abs(fd), 1e-3)
            count += 1
            if rel > max_rel:
                max_rel = rel
                worst = f"{name}[{flat}]"
    return GradCheckReport(
        max_rel_error=float(max_rel),
        tolerance=tolerance,
        probes=count,
        passed=bool(max_rel <= tolerance),
        worst=worst,
    )
