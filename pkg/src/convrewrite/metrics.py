"""N-gram overlap and exact-match evaluation for rewrite outputs.

Numbers here are for tracking runs of this toy pipeline, not for quoting
against published benchmarks: corpus-level BLEU is the headline score (a
per-sentence mean is reported alongside), ROUGE-N is recall against the
reference, and ROUGE-L is an F-measure with beta fixed at 1.2.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from math import exp, log
from typing import Sequence

from .corpus import Token
from .errors import ShapeError

logger = logging.getLogger(__name__)

ROUGE_L_BETA = 1.2


def _texts(seq: Sequence) -> list[str]:
    if isinstance(seq, str):
        return seq.split()
    return [item.text if isinstance(item, Token) else str(item) for item in seq]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(hyp_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - hyp_len), r))


def bleu(hyp: Sequence, refs: Sequence[Sequence], n: int = 4) -> float:
    """Sentence BLEU: modified n-gram precision with uniform weights.

    Geometric mean of clipped precisions for orders 1..n times the brevity
    penalty min(1, e^(1 - r/c)).  No smoothing: a zero precision at any
    order gives zero.
    """
    if not 1 <= n <= 4:
        raise ValueError("n must lie in 1..4")
    if not refs:
        raise ValueError("bleu needs at least one reference")
    hyp_tokens = _texts(hyp)
    ref_token_lists = [_texts(ref) for ref in refs]
    if not hyp_tokens:
        return 0.0
    log_precision_sum = 0.0
    for order in range(1, n + 1):
        hyp_counts = _ngrams(hyp_tokens, order)
        total = sum(hyp_counts.values())
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for ref_tokens in ref_token_lists:
            for gram, count in _ngrams(ref_tokens, order).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        clipped = sum(min(count, max_ref[gram]) for gram, count in hyp_counts.items())
        if clipped == 0:
            return 0.0
        log_precision_sum += log(clipped / total)
    c = len(hyp_tokens)
    r = _closest_ref_len(c, [len(ref) for ref in ref_token_lists])
    brevity = min(1.0, exp(1.0 - r / c))
    return brevity * exp(log_precision_sum / n)


def corpus_bleu(hyps: Sequence[Sequence], refs: Sequence[Sequence[Sequence]], n: int = 4) -> float:
    """Corpus BLEU over parallel hypothesis/reference-list pairs.

    Clipped counts and lengths are pooled over the corpus before the
    geometric mean, the standard corpus-level aggregation.
    """
    if not 1 <= n <= 4:
        raise ValueError("n must lie in 1..4")
    if len(hyps) != len(refs):
        raise ShapeError(f"{len(hyps)} hypotheses but {len(refs)} reference lists")
    clipped_totals = [0] * n
    gram_totals = [0] * n
    hyp_len_sum = 0
    ref_len_sum = 0
    for hyp, ref_list in zip(hyps, refs):
        if not ref_list:
            raise ValueError("every hypothesis needs at least one reference")
        hyp_tokens = _texts(hyp)
        ref_token_lists = [_texts(ref) for ref in ref_list]
        hyp_len_sum += len(hyp_tokens)
        ref_len_sum += _closest_ref_len(len(hyp_tokens), [len(r) for r in ref_token_lists])
        for order in range(1, n + 1):
            hyp_counts = _ngrams(hyp_tokens, order)
            gram_totals[order - 1] += sum(hyp_counts.values())
            max_ref: Counter = Counter()
            for ref_tokens in ref_token_lists:
                for gram, count in _ngrams(ref_tokens, order).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            clipped_totals[order - 1] += sum(
                min(count, max_ref[gram]) for gram, count in hyp_counts.items()
            )
    if hyp_len_sum == 0:
        return 0.0
    log_precision_sum = 0.0
    for clipped, total in zip(clipped_totals, gram_totals):
        if clipped == 0 or total == 0:
            return 0.0
        log_precision_sum += log(clipped / total)
    brevity = min(1.0, exp(1.0 - ref_len_sum / hyp_len_sum))
    return brevity * exp(log_precision_sum / n)


def rouge_n(hyp: Sequence, ref: Sequence, n: int) -> float:
    """ROUGE-N recall: clipped n-gram overlap over the reference n-gram count."""
    if n not in (1, 2):
        raise ValueError("rouge_n supports n in {1, 2}")
    hyp_tokens = _texts(hyp)
    ref_tokens = _texts(ref)
    ref_counts = _ngrams(ref_tokens, n)
    total = sum(ref_counts.values())
    if total == 0:
        logger.warning("reference shorter than %d tokens; rouge_%d set to 0", n, n)
        return 0.0
    hyp_counts = _ngrams(hyp_tokens, n)
    overlap = sum(min(count, hyp_counts[gram]) for gram, count in ref_counts.items())
    return overlap / total


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for item in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            if item == other:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(hyp: Sequence, ref: Sequence, beta: float = ROUGE_L_BETA) -> float:
    """Longest-common-subsequence F-measure with recall weighted by ``beta``."""
    hyp_tokens = _texts(hyp)
    ref_tokens = _texts(ref)
    if not hyp_tokens or not ref_tokens:
        return 0.0
    lcs = _lcs_len(hyp_tokens, ref_tokens)
    if lcs == 0:
        return 0.0
    recall = lcs / len(ref_tokens)
    precision = lcs / len(hyp_tokens)
    beta_sq = beta * beta
    return (1.0 + beta_sq) * recall * precision / (recall + beta_sq * precision)


def exact_match(hyp: Sequence, ref: Sequence) -> bool:
    """Token-sequence equality, case preserved; strings are whitespace-split."""
    return _texts(hyp) == _texts(ref)


@dataclass
class EvalReport:
    """Aggregate scores plus sample counts for one evaluation bucket."""

    em: float
    bleu: dict[int, float]
    sentence_bleu: dict[int, float]
    rouge: dict[str, float]
    total: int
    positive: int
    negative: int

    def to_dict(self) -> dict:
        return {
            "em": self.em,
            "bleu": {str(k): v for k, v in self.bleu.items()},
            "sentence_bleu": {str(k): v for k, v in self.sentence_bleu.items()},
            "rouge": dict(self.rouge),
            "counts": {"total": self.total, "positive": self.positive, "negative": self.negative},
        }


def evaluate_corpus(hyps: Sequence, refs: Sequence, questions: Sequence) -> EvalReport:
    """All metrics over parallel predictions, references, and source questions.

    A sample is positive when its question differs from the gold rewrite
    (some edit was required) and negative when they are token-identical.
    ROUGE scores and sentence BLEU are per-sample means; corpus BLEU pools
    counts.  An empty corpus yields zero scores and zero counts.
    """
    if not (len(hyps) == len(refs) == len(questions)):
        raise ShapeError(
            f"parallel lengths differ: {len(hyps)} predictions, "
            f"{len(refs)} references, {len(questions)} questions"
        )
    total = len(hyps)
    if total == 0:
        zeros = {k: 0.0 for k in range(1, 5)}
        return EvalReport(0.0, dict(zeros), dict(zeros), {"1": 0.0, "2": 0.0, "L": 0.0}, 0, 0, 0)
    positive = sum(1 for q, ref in zip(questions, refs) if not exact_match(q, ref))
    em = sum(1 for hyp, ref in zip(hyps, refs) if exact_match(hyp, ref)) / total
    wrapped_refs = [[ref] for ref in refs]
    bleu_scores = {k: corpus_bleu(hyps, wrapped_refs, k) for k in range(1, 5)}
    sentence_bleu = {
        k: sum(bleu(hyp, [ref], k) for hyp, ref in zip(hyps, refs)) / total for k in range(1, 5)
    }
    rouge = {
        "1": sum(rouge_n(hyp, ref, 1) for hyp, ref in zip(hyps, refs)) / total,
        "2": sum(rouge_n(hyp, ref, 2) for hyp, ref in zip(hyps, refs)) / total,
        "L": sum(rouge_l(hyp, ref) for hyp, ref in zip(hyps, refs)) / total,
    }
    return EvalReport(em, bleu_scores, sentence_bleu, rouge, total, positive, total - positive)


def split_report(hyps: Sequence, refs: Sequence, questions: Sequence) -> dict[str, EvalReport]:
    """Separate reports for samples that needed edits and samples that did not."""
    if not (len(hyps) == len(refs) == len(questions)):
        raise ShapeError("parallel lengths differ")
    pos_idx = [i for i in range(len(refs)) if not exact_match(questions[i], refs[i])]
    pos_set = set(pos_idx)
    neg_idx = [i for i in range(len(refs)) if i not in pos_set]
    def subset(indices):
        return (
            [hyps[i] for i in indices],
            [refs[i] for i in indices],
            [questions[i] for i in indices],
        )
    return {
        "positive": evaluate_corpus(*subset(pos_idx)),
        "negative": evaluate_corpus(*subset(neg_idx)),
    }
