"""Answer-span scoring over the context tokens for each detected edit site."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import ModelParams, softmax
from .errors import EmptyContextError
from .labeling import ContextSpan


@dataclass
class SpanDistribution:
    """Start and end probabilities over the flattened context tokens."""

    start_probs: np.ndarray
    end_probs: np.ndarray
    query_index: int = 0


def span_head_forward(
    params: ModelParams, head: str, context_vecs: np.ndarray, query_vec: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Additive-attention scores of one head for every context token.

    Each context vector is concatenated with the query vector (context part
    first), pushed through tanh, and scored against the head's probe vector.
    """
    tensors = params.tensors
    paired = np.concatenate(
        [context_vecs, np.broadcast_to(query_vec, context_vecs.shape)], axis=1
    )
    hidden = np.tanh(paired @ tensors[head + ".w"].T + tensors[head + ".b"])
    scores = hidden @ tensors[head + ".v"]
    return scores, (paired, hidden)


def span_head_backward(
    params: ModelParams, head: str, cache: tuple, d_scores: np.ndarray
) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
    """Gradients of one span head.

    Returns the context cotangent (one row per context token), the query
    cotangent (a single vector), and the head tensor gradients.
    """
    tensors = params.tensors
    paired, hidden = cache
    width = paired.shape[1] // 2
    d_hidden = np.outer(d_scores, tensors[head + ".v"]) * (1.0 - hidden * hidden)
    grads = {
        head + ".v": hidden.T @ d_scores,
        head + ".w": d_hidden.T @ paired,
        head + ".b": d_hidden.sum(axis=0),
    }
    d_paired = d_hidden @ tensors[head + ".w"]
    return d_paired[:, :width], d_paired[:, width:].sum(axis=0), grads


def span_probs(
    params: ModelParams,
    context_vecs: np.ndarray,
    query_vec: np.ndarray,
    query_index: int = 0,
) -> SpanDistribution:
    """Start/end distributions for one query over the real context tokens.

    Separator positions never reach this function: the encoder output already
    projects them away, so probability mass is spent only on real tokens.
    """
    if context_vecs.shape[0] == 0:
        raise EmptyContextError("cannot score spans over an empty context")
    start_scores, _ = span_head_forward(params, "span_start", context_vecs, query_vec)
    end_scores, _ = span_head_forward(params, "span_end", context_vecs, query_vec)
    return SpanDistribution(softmax(start_scores), softmax(end_scores), query_index)


def select_span(dist: SpanDistribution, max_len: int = 30) -> ContextSpan:
    """Best (start, end) pair by product of the two marginals.

    Feasible pairs satisfy start <= end and cover at most ``max_len`` tokens;
    exact ties take the smallest start, then the smallest end.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    start_probs = dist.start_probs
    end_probs = dist.end_probs
    m = len(start_probs)
    best_score = -1.0
    best = (0, 0)
    for s in range(m):
        for e in range(s, min(s + max_len, m)):
            score = start_probs[s] * end_probs[e]
            if score > best_score:
                best_score = score
                best = (s, e)
    return ContextSpan(best[0], best[1])
