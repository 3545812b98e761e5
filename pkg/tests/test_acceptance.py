"""Acceptance gate: the eight headline checks for the whole pipeline.

Each test prints exactly one [PASS]/[FAIL] line (outside the capture, so it
always shows up in the run log) and then asserts, so a red criterion is both
visible in the output and fails the suite.
"""
from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from convrewrite.cli import EXIT_OK, main
from convrewrite.comprehend import span_probs
from convrewrite.corpus import Vocabulary, detokenize
from convrewrite.detect import tag_probs
from convrewrite.encoder import EncoderConfig, init_params, softmax, zero_params
from convrewrite.errors import ConvRewriteError
from convrewrite.estimator import ActionRewriter
from convrewrite.labeling import Invalid, derive_labels, diff
from convrewrite.metrics import bleu, corpus_bleu, exact_match, rouge_l, rouge_n
from convrewrite.pipeline import rewrite_example
from convrewrite.synthetic import synthetic_corpus
from convrewrite.training import grad_check
from convrewrite.validation import check_samples

from test_labeling import oracle_diff

DATA_DIR = Path(__file__).parent / "data"


def _report(capsys, number: int, description: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {description} ({detail})"
    with capsys.disabled():
        print(line, flush=True)
    assert ok, line


def test_criterion_1_round_trip_of_planted_edits(capsys, tmp_path):
    started = time.monotonic()
    records = []
    records += synthetic_corpus(600, seed=101, clean=True, negative_fraction=0.2)
    records += synthetic_corpus(400, seed=102, clean=False, negative_fraction=0.1)
    records += [
        json.loads(line) for line in (DATA_DIR / "canard_style.jsonl").read_text().splitlines()
    ]
    examples = check_samples(records)
    params = zero_params(EncoderConfig(vocab_size=4, width=4, layers=0, heads=1))
    valid = 0
    invalid = 0
    mismatches = []
    for example in examples:
        if isinstance(derive_labels(example), Invalid):
            invalid += 1
            continue
        valid += 1
        result = rewrite_example(params, example, oracle=True)
        if result.error is not None or [t.text for t in result.prediction] != [
            t.text for t in example.rewrite
        ]:
            mismatches.append(example.id)
    elapsed = time.monotonic() - started
    ok = valid >= 900 and not mismatches and elapsed < 10.0
    _report(
        capsys,
        1,
        "derived labels rebuild every valid rewrite token for token",
        ok,
        f"{valid} valid, {invalid} invalid skipped, {len(mismatches)} mismatches, {elapsed:.1f}s",
    )


def test_criterion_2_alignment_matches_brute_force_oracle(capsys):
    started = time.monotonic()
    rng = np.random.default_rng(999)
    checked = 0
    disagreements = 0
    for _ in range(5000):
        alphabet = [chr(97 + i) for i in range(int(rng.integers(2, 7)))]
        a = list(rng.choice(alphabet, size=int(rng.integers(0, 13))))
        b = list(rng.choice(alphabet, size=int(rng.integers(0, 13))))
        if diff(a, b) != oracle_diff(a, b):
            disagreements += 1
        checked += 1
    elapsed = time.monotonic() - started
    ok = checked >= 5000 and disagreements == 0 and elapsed < 30.0
    _report(
        capsys,
        2,
        "alignment agrees with the exhaustive longest-block oracle",
        ok,
        f"{checked} pairs, {disagreements} disagreements, {elapsed:.1f}s",
    )


def test_criterion_3_joint_loss_gradients(capsys):
    started = time.monotonic()
    vocab = Vocabulary()
    records = synthetic_corpus(4, seed=0, clean=True)
    examples = check_samples(records, vocab=vocab)
    item = None
    for example in examples:
        labeled = derive_labels(example)
        if not isinstance(labeled, Invalid) and labeled.queries:
            item = labeled
            break
    assert item is not None
    vocab.freeze()
    config = EncoderConfig(vocab_size=len(vocab), width=8, layers=1, heads=2, seed=3)
    report = grad_check(init_params(config), item, tolerance=1e-4, probes=100, step=1e-5, seed=5)
    elapsed = time.monotonic() - started
    ok = report.passed and report.probes >= 100 and elapsed < 60.0
    _report(
        capsys,
        3,
        "analytic joint-loss gradients match finite differences",
        ok,
        f"max_rel_error={report.max_rel_error:.3e} over {report.probes} probes, "
        f"tolerance 1e-4, {elapsed:.1f}s",
    )


def test_criterion_4_overfit_small_corpus(capsys):
    started = time.monotonic()
    records = synthetic_corpus(32, seed=11, clean=True, negative_fraction=0.25)
    model = ActionRewriter(
        width=64,
        layers=2,
        heads=2,
        epochs=60,
        batch_size=8,
        learning_rate=1e-3,
        dtype="float64",
        seed=0,
    )
    model.fit(records)
    em = model.score(records)
    drop = 1.0 - model.history_[-1].l_total / model.history_[0].l_total
    elapsed = time.monotonic() - started
    ok = em >= 0.90 and drop >= 0.95 and elapsed < 300.0
    _report(
        capsys,
        4,
        "the full model overfits 32 planted samples",
        ok,
        f"train EM {em:.3f}, loss drop {100 * drop:.1f}%, {elapsed:.1f}s",
    )


def test_criterion_5_metric_fixtures(capsys):
    failures = []

    def expect(name, got, want):
        if abs(got - want) > 1e-6:
            failures.append(f"{name}: got {got!r}, want {want!r}")

    expect("bleu clipping", bleu("a a a a", ["a b"], n=1), 0.25)
    expect("rouge_l fixture", rouge_l("a b c d", "a c d"), 0.8798076923076923)
    same = "the cat sat on the mat"
    expect("bleu identical", bleu(same, [same]), 1.0)
    expect("corpus bleu identical", corpus_bleu([same], [[same]]), 1.0)
    expect("rouge_1 identical", rouge_n(same, same, 1), 1.0)
    expect("rouge_2 identical", rouge_n(same, same, 2), 1.0)
    expect("rouge_l identical", rouge_l(same, same), 1.0)
    expect("bleu disjoint", bleu("a b c d", ["w x y z"]), 0.0)
    expect("rouge_1 disjoint", rouge_n("a b", "c d", 1), 0.0)
    expect("rouge_l disjoint", rouge_l("a b", "c d"), 0.0)
    if not exact_match(same, same) or exact_match("a b", "a c"):
        failures.append("exact match misbehaves")
    _report(
        capsys,
        5,
        "metric fixtures reproduce hand-computed values within 1e-6",
        not failures,
        "; ".join(failures) if failures else "11 fixtures",
    )


def test_criterion_6_flagship_example_through_the_cli(tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    record = {
        "id": "fig1",
        "context": [
            "Phil Mickelson is an American professional golfer .",
            "He graduated from Arizona State University in 1992 .",
        ],
        "question": "What year did he graduate ?",
        "rewrite": "What year did Mickelson graduate from Arizona State University ?",
    }
    corpus.write_text(json.dumps(record) + "\n")
    labeled = tmp_path / "labeled.jsonl"
    checkpoint = tmp_path / "model.json"
    predictions = tmp_path / "predictions.jsonl"
    codes = [
        main(["prepare", str(corpus), str(labeled)]),
        main(["train", str(labeled), str(checkpoint), "--epochs", "1"]),
        main(["rewrite", "--oracle-edits", str(checkpoint), str(corpus), str(predictions)]),
    ]
    capsys.readouterr()
    prediction = ""
    if codes == [EXIT_OK] * 3:
        prediction = json.loads(predictions.read_text())["prediction"]
    expected = "What year did Mickelson graduate from Arizona State University ?"
    ok = codes == [EXIT_OK] * 3 and prediction == expected
    _report(
        capsys,
        6,
        "the worked example rewrites exactly through the CLI",
        ok,
        f"exit codes {codes}, prediction {prediction!r}",
    )


def test_criterion_7_untrained_model_copies_questions(capsys):
    records = synthetic_corpus(12, seed=5, clean=True, negative_fraction=1.0)
    vocab = Vocabulary()
    examples = check_samples(records, vocab=vocab)
    vocab.freeze()
    params = zero_params(EncoderConfig(vocab_size=len(vocab), width=8, layers=1, heads=2))
    copies = 0
    hits = 0
    problems = []
    for example in examples:
        try:
            result = rewrite_example(params, example)
        except ConvRewriteError as exc:
            problems.append(f"{example.id}: {exc}")
            continue
        if [t.text for t in result.prediction] == [t.text for t in example.question]:
            copies += 1
        if exact_match(
            detokenize(result.prediction, "word"), detokenize(example.rewrite, "word")
        ):
            hits += 1
    em = hits / len(examples)
    ok = not problems and copies == len(examples) and em == 1.0
    _report(
        capsys,
        7,
        "an all-zero model copies every question unchanged",
        ok,
        f"{copies}/{len(examples)} copies, EM {em:.3f}"
        + (f", errors: {problems}" if problems else ""),
    )


def test_criterion_8_softmax_normalization(capsys):
    rng = np.random.default_rng(777)
    rows_checked = 0
    worst = 0.0

    def check(sums):
        nonlocal rows_checked, worst
        sums = np.atleast_1d(sums)
        worst = max(worst, float(np.abs(sums - 1.0).max()))
        rows_checked += sums.size

    for _ in range(1600):
        cols = int(rng.integers(1, 16))
        scale = 10.0 ** rng.uniform(-3, 3)
        check(softmax(rng.normal(size=(5, cols)) * scale).sum(axis=-1))
    for extreme in (1e3, -1e3):
        check(softmax(np.full((10, 7), extreme)).sum(axis=-1))

    width = 6
    params = init_params(EncoderConfig(vocab_size=5, width=width, layers=0, heads=1, seed=2))
    for i in range(300):
        scale = 10.0 ** rng.uniform(-2, 2)
        for name in ("detect.w", "detect.b"):
            params.tensors[name] = rng.normal(size=params.tensors[name].shape) * scale
        question_vecs = rng.normal(size=(1 + i % 8, width)) * scale
        check(tag_probs(params, question_vecs).probs.sum(axis=-1))
    for _ in range(350):
        scale = 10.0 ** rng.uniform(-2, 2)
        for head in ("span_start", "span_end"):
            for suffix in (".w", ".b", ".v"):
                name = head + suffix
                params.tensors[name] = rng.normal(size=params.tensors[name].shape) * scale
        context_vecs = rng.normal(size=(int(rng.integers(1, 8)), width)) * scale
        dist = span_probs(params, context_vecs, rng.normal(size=width) * scale)
        check(dist.start_probs.sum())
        check(dist.end_probs.sum())

    ok = rows_checked >= 10_000 and worst <= 1e-9
    _report(
        capsys,
        8,
        "tag and span probability rows stay normalized across magnitudes",
        ok,
        f"{rows_checked} rows, worst deviation {worst:.2e}",
    )
