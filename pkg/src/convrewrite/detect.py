"""Per-token action tagging: distribution, greedy decoding, span extraction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .encoder import ModelParams, softmax
from .labeling import (
    QuestionSpan,
    TAG_B_INSERT,
    TAG_B_REPLACE,
    TAG_I,
    TAG_NAMES,
    TAG_O,
)

TAG_INDEX = {name: i for i, name in enumerate(TAG_NAMES)}
# Exact ties resolve toward doing nothing, then the begin tags, then inside.
_TIE_ORDER = tuple(TAG_INDEX[name] for name in (TAG_O, TAG_B_REPLACE, TAG_B_INSERT, TAG_I))


@dataclass
class TagDistribution:
    """Per-token probabilities over the four action tags.

    Row 0 scores the sentinel, row k question token k-1.  Columns follow
    TAG_NAMES order.
    """

    probs: np.ndarray


def tag_logits(params: ModelParams, question_vecs: np.ndarray) -> np.ndarray:
    """Raw head scores, one row per question position (sentinel included)."""
    tensors = params.tensors
    return question_vecs @ tensors["detect.w"].T + tensors["detect.b"]


def tag_head_backward(
    params: ModelParams, question_vecs: np.ndarray, d_logits: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Gradients of the tagging head: (question cotangent, head tensor grads)."""
    grads = {
        "detect.w": d_logits.T @ question_vecs,
        "detect.b": d_logits.sum(axis=0),
    }
    return d_logits @ params.tensors["detect.w"], grads


def tag_probs(params: ModelParams, question_vecs: np.ndarray) -> TagDistribution:
    """Softmax tag distribution from the linear head, independently per token."""
    return TagDistribution(softmax(tag_logits(params, question_vecs)))


def greedy_decode(dist: TagDistribution) -> list[str]:
    """Per-token argmax over the tag distribution."""
    tags = []
    for row in dist.probs:
        best = _TIE_ORDER[0]
        for idx in _TIE_ORDER[1:]:
            if row[idx] > row[best]:
                best = idx
        tags.append(TAG_NAMES[best])
    return tags


def extract_spans(tags: Sequence[str]) -> list[QuestionSpan]:
    """Candidate edit sites from a decoded tag sequence.

    The input includes the sentinel tag at index 0, so span starts are tag
    index minus one (sentinel = -1).  A begin-replace run absorbs the inside
    tags after it; begin-insert is always a single host position.  Inside
    tags with no open replace run count as keep, and so does begin-replace on
    the sentinel, which cannot cover a real token.
    """
    spans: list[QuestionSpan] = []
    i = 0
    while i < len(tags):
        tag = tags[i]
        if tag == TAG_B_REPLACE and i > 0:
            j = i + 1
            while j < len(tags) and tags[j] == TAG_I:
                j += 1
            spans.append(QuestionSpan(i - 1, j - i, "replace"))
            i = j
        elif tag == TAG_B_INSERT:
            spans.append(QuestionSpan(i - 1, 1, "insert"))
            i += 1
        else:
            i += 1
    return spans
