"""Synthetic dialogue corpora with planted edits.

Used by the self-check CLI command and heavily by the tests: the generator
plants insert/replace edits whose gold tags and grounded targets are known
by construction.  In clean mode every sampled word is unique within the
sample, so the alignment provably recovers exactly the planted blocks; in
messy mode words repeat and some samples legitimately come out invalid,
which exercises the drop paths.
"""
from __future__ import annotations

import numpy as np


def _pool(prefix: str, size: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(size)]


def synthetic_record(
    rng: np.random.Generator,
    *,
    index: int = 0,
    clean: bool = True,
    word_pool: int = 40,
    negative: bool = False,
) -> dict:
    """One raw corpus record with planted edits.

    The rewrite is built first; the question drops some spans (insertions to
    recover) and swaps others for placeholder words (replacements).  Every
    planted target is embedded contiguously in one context utterance.
    """
    content = _pool("w", word_pool)
    fillers = _pool("f", word_pool)
    placeholders = _pool("p", 8)
    length = int(rng.integers(6, 13))
    if clean:
        rewrite = list(rng.choice(content, size=length, replace=False))
    else:
        rewrite = list(rng.choice(content, size=length, replace=True))

    if negative:
        question = list(rewrite)
        edit_spans: list[tuple[int, int, str]] = []
    else:
        # segment the rewrite into alternating keep/edit runs, keeps >= 1
        # between edits so the alignment cannot merge neighbouring gaps
        edit_spans = []
        cursor = 0
        first = True
        while cursor < length:
            want_edit = rng.random() < (0.45 if first else 0.4)
            first = False
            if want_edit and length - cursor >= 2:
                span_len = int(rng.integers(1, min(3, length - cursor) + 1))
                kind = "insert" if rng.random() < 0.5 else "replace"
                edit_spans.append((cursor, span_len, kind))
                cursor += span_len + 1  # skip one kept token after the edit
            else:
                cursor += 1
        question = []
        used_placeholders = list(rng.permutation(placeholders))
        edit_at = {start: (size, kind) for start, size, kind in edit_spans}
        pos = 0
        while pos < length:
            if pos in edit_at:
                size, kind = edit_at[pos]
                if kind == "replace":
                    question.append(used_placeholders.pop())
                pos += size
            else:
                question.append(rewrite[pos])
                pos += 1
        if not question:
            question = [used_placeholders.pop()]

    targets = [rewrite[start : start + size] for start, size, _ in edit_spans]
    utterances: list[list[str]] = [[] for _ in range(int(rng.integers(1, 4)))]
    for utterance in utterances:
        utterance.extend(rng.choice(fillers, size=int(rng.integers(1, 4))))
    for target in targets:
        slot = int(rng.integers(0, len(utterances)))
        utterances[slot].extend(target)
        utterances[slot].extend(rng.choice(fillers, size=int(rng.integers(0, 3))))
    return {
        "id": f"synth-{index}",
        "context": [" ".join(utterance) for utterance in utterances],
        "question": " ".join(question),
        "rewrite": " ".join(rewrite),
    }


def synthetic_corpus(
    n_samples: int,
    seed: int = 0,
    *,
    clean: bool = True,
    word_pool: int = 40,
    negative_fraction: float = 0.0,
) -> list[dict]:
    """A list of raw corpus records with planted edits, fully seeded."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_samples):
        negative = rng.random() < negative_fraction
        records.append(
            synthetic_record(rng, index=i, clean=clean, word_pool=word_pool, negative=negative)
        )
    return records
