"""Command line interface: prepare, train, rewrite, evaluate, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data or validation error (including
a failed gradient check), 3 training divergence.  Every run is reproducible
from its config and seed; the train command writes the loss history next to
the checkpoint so runs can be compared.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .corpus import detokenize, load_corpus, tokenize, Vocabulary
from .encoder import EncoderConfig, init_params, load_checkpoint, save_checkpoint
from .errors import ConvRewriteError, DivergenceError, EmptyTextError, ParseError, SchemaError
from .labeling import (
    Invalid,
    augment,
    derive_labels,
    load_labeled,
    load_stopwords,
    write_labeled,
)
from .metrics import ROUGE_L_BETA, evaluate_corpus, split_report
from .pipeline import RewriteResult, rewrite_example
from .synthetic import synthetic_corpus
from .training import GradCheckReport, LossConfig, OptimConfig, grad_check, train
from .validation import check_samples

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    # exit code 1 for usage errors; 2 is reserved for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise SchemaError("config file must hold a JSON object")
    return config


def _settings(args) -> dict:
    """Merge the optional config file with command-line overrides."""
    settings = {
        "token_mode": "word",
        "seed": 0,
        "profile": "deterministic",
        "max_answer_len": 30,
        "encoder": {},
        "optim": {},
        "loss": {},
    }
    if getattr(args, "config", None):
        file_settings = _load_config_file(args.config)
        for key, value in file_settings.items():
            if key in ("encoder", "optim", "loss"):
                if not isinstance(value, dict):
                    raise SchemaError(f"config section {key!r} must be an object")
                settings[key].update(value)
            else:
                settings[key] = value
    for key in ("token_mode", "seed", "profile", "max_answer_len"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["profile"] not in ("deterministic", "fast"):
        raise SchemaError(f"unknown profile: {settings['profile']!r}")
    return settings


def _dtype_for(profile: str) -> str:
    return "float64" if profile == "deterministic" else "float32"


def cmd_prepare(args) -> int:
    settings = _settings(args)
    examples = load_corpus(args.input, token_mode=settings["token_mode"])
    stopwords = load_stopwords(args.stopwords)
    stats = {"valid": 0, "invalid": {}, "augmented": 0, "no_rewrite": 0}
    labeled = []
    for example in examples:
        if example.rewrite is None:
            stats["no_rewrite"] += 1
            continue
        result = derive_labels(example)
        if isinstance(result, Invalid):
            stats["invalid"][result.reason] = stats["invalid"].get(result.reason, 0) + 1
            continue
        labeled.append(result)
        stats["valid"] += 1
        if args.augment:
            for variant in augment(example, stopwords):
                variant_result = derive_labels(variant)
                if isinstance(variant_result, Invalid):
                    continue
                labeled.append(variant_result)
                stats["augmented"] += 1
    write_labeled(args.output, labeled, token_mode=settings["token_mode"])
    print(json.dumps(stats))
    return EXIT_OK


def _write_history(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l_seq", "l_span", "l_total"])
        for record in history:
            writer.writerow([record.step, repr(record.l_seq), repr(record.l_span), repr(record.l_total)])


def cmd_train(args) -> int:
    settings = _settings(args)
    vocab = Vocabulary()
    labeled = load_labeled(args.data, token_mode=settings["token_mode"], vocab=vocab)
    if not labeled:
        raise SchemaError("training file holds no usable samples")
    vocab.freeze()
    encoder_over = dict(settings["encoder"])
    encoder_config = EncoderConfig(
        vocab_size=len(vocab),
        dtype=_dtype_for(settings["profile"]),
        seed=settings["seed"],
        **encoder_over,
    )
    optim_over = dict(settings["optim"])
    for flag in ("learning_rate", "batch_size", "epochs"):
        value = getattr(args, flag, None)
        if value is not None:
            optim_over[flag] = value
    optim = OptimConfig(seed=settings["seed"], **optim_over)
    loss = LossConfig(**settings["loss"])
    history_path = args.history or str(args.checkpoint) + ".history.csv"
    try:
        params, history = train(labeled, encoder_config, optim, loss)
    except DivergenceError as exc:
        if exc.last_params is not None:
            save_checkpoint(args.checkpoint, exc.last_params, vocab)
            _write_history(history_path, exc.history)
            logger.error("training diverged: %s; last finite checkpoint at %s", exc, args.checkpoint)
        else:
            logger.error("training diverged before the first step: %s", exc)
        return EXIT_DIVERGED
    save_checkpoint(args.checkpoint, params, vocab)
    _write_history(history_path, history)
    final = history[-1].l_total if history else float("nan")
    print(json.dumps({"steps": len(history), "final_loss": final, "checkpoint": str(args.checkpoint)}))
    return EXIT_OK


def cmd_rewrite(args) -> int:
    settings = _settings(args)
    params, vocab = load_checkpoint(args.checkpoint)
    examples = load_corpus(args.input, token_mode=settings["token_mode"], vocab=vocab)
    failures = 0
    with open(args.output, "w", encoding="utf-8") as fh:
        for example in examples:
            try:
                result = rewrite_example(
                    params,
                    example,
                    max_answer_len=settings["max_answer_len"],
                    oracle=args.oracle_edits,
                )
            except (ConvRewriteError, FloatingPointError) as exc:
                logger.warning("rewrite failed for %r, copying the question: %s", example.id, exc)
                result = RewriteResult(example, list(example.question), error=str(exc))
            record = {
                "id": example.id,
                "prediction": detokenize(result.prediction, settings["token_mode"]),
                "edits": [
                    {
                        "action": edit.action,
                        "q_start": edit.q_span.start,
                        "q_len": edit.q_span.length,
                        "target": detokenize(edit.target, settings["token_mode"]),
                    }
                    for edit in (result.plan.edits if result.plan else [])
                ],
            }
            if result.error:
                record["error"] = result.error
                failures += 1
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
    print(json.dumps({"written": len(examples), "failures": failures}))
    return EXIT_OK


def _tokens_or_empty(text: str, mode: str):
    try:
        return tokenize(text, mode)
    except EmptyTextError:
        return []


def cmd_evaluate(args) -> int:
    settings = _settings(args)
    mode = settings["token_mode"]
    gold_examples = load_corpus(args.gold, token_mode=mode)
    predictions = []
    with open(args.predictions, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), line=line_no) from exc
            if not isinstance(record, dict) or not isinstance(record.get("prediction"), str):
                raise SchemaError("prediction records need a string 'prediction'", line=line_no)
            predictions.append(record["prediction"])
    if len(predictions) != len(gold_examples):
        raise SchemaError(
            f"{len(predictions)} predictions for {len(gold_examples)} gold samples"
        )
    refs = []
    for i, example in enumerate(gold_examples):
        if example.rewrite is None:
            raise SchemaError(f"gold sample {example.id or i} has no rewrite")
        refs.append(example.rewrite)
    hyps = [_tokens_or_empty(pred, mode) for pred in predictions]
    questions = [example.question for example in gold_examples]
    overall = evaluate_corpus(hyps, refs, questions)
    splits = split_report(hyps, refs, questions)
    report = {
        "overall": overall.to_dict(),
        "em_positive": splits["positive"].em,
        "rouge_l_beta": ROUGE_L_BETA,
        "bleu_aggregation": "corpus",
    }
    if args.split_pos_neg:
        report["positive"] = splits["positive"].to_dict()
        report["negative"] = splits["negative"].to_dict()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    lines = [
        f"samples        {overall.total} ({overall.positive} positive, {overall.negative} negative)",
        f"exact match    {overall.em:.4f} (positive only: {splits['positive'].em:.4f})",
        f"BLEU corpus    " + "  ".join(f"{k}:{overall.bleu[k]:.4f}" for k in sorted(overall.bleu)),
        f"ROUGE          1:{overall.rouge['1']:.4f}  2:{overall.rouge['2']:.4f}  "
        f"L:{overall.rouge['L']:.4f} (beta={ROUGE_L_BETA})",
    ]
    print("\n".join(lines))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    settings = _settings(args)
    vocab = Vocabulary()
    if args.data:
        labeled = load_labeled(args.data, token_mode=settings["token_mode"], vocab=vocab)
        if not labeled:
            raise SchemaError("gradcheck data file holds no samples")
        item = labeled[0]
    else:
        records = synthetic_corpus(4, seed=settings["seed"], clean=True)
        examples = check_samples(records, token_mode=settings["token_mode"], vocab=vocab)
        item = None
        for example in examples:
            result = derive_labels(example)
            if not isinstance(result, Invalid) and result.queries:
                item = result
                break
        if item is None:  # clean generation always grounds, but stay defensive
            raise SchemaError("could not build a synthetic sample with queries")
    vocab.freeze()
    config = EncoderConfig(
        vocab_size=len(vocab),
        width=args.width,
        layers=args.layers,
        heads=args.heads,
        dtype="float64",  # the check is only meaningful at full precision
        seed=settings["seed"],
    )
    params = init_params(config)
    report: GradCheckReport = grad_check(
        params,
        item,
        tolerance=args.tolerance,
        probes=args.probes,
        step=args.step,
        seed=settings["seed"],
    )
    verdict = "PASS" if report.passed else "FAIL"
    print(
        f"{verdict} max_rel_error={report.max_rel_error:.3e} tolerance={report.tolerance:.1e} "
        f"probes={report.probes} worst={report.worst}"
    )
    return EXIT_OK if report.passed else EXIT_DATA


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    parser.add_argument(
        "--profile",
        choices=("deterministic", "fast"),
        default=None,
        help="deterministic = float64 (default), fast = float32",
    )
    parser.add_argument(
        "--token-mode", dest="token_mode", choices=("word", "char"), default=None
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convrewrite", description=__doc__.splitlines()[0])
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("prepare", parents=[], help="derive labels from a raw corpus")
    p.add_argument("input", help="raw corpus JSONL")
    p.add_argument("output", help="labeled JSONL to write")
    p.add_argument("--augment", action="store_true", help="add stop-word-deletion variants")
    p.add_argument("--stopwords", default=None, help="override the built-in stop-word list")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = subparsers.add_parser("train", help="train from a labeled JSONL file")
    p.add_argument("data", help="labeled JSONL written by prepare")
    p.add_argument("checkpoint", help="checkpoint file to write")
    p.add_argument("--history", default=None, help="loss history CSV (default: <checkpoint>.history.csv)")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser("rewrite", help="rewrite questions with a trained checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("input", help="raw corpus JSONL")
    p.add_argument("output", help="predictions JSONL to write")
    p.add_argument(
        "--oracle-edits",
        dest="oracle_edits",
        action="store_true",
        help="use gold-derived edits instead of the model (upper bound)",
    )
    p.add_argument("--max-answer-len", dest="max_answer_len", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_rewrite)

    p = subparsers.add_parser("evaluate", help="score predictions against gold rewrites")
    p.add_argument("predictions", help="predictions JSONL from rewrite")
    p.add_argument("gold", help="gold corpus JSONL with rewrites")
    p.add_argument("--report", default=None, help="write the full report as JSON here")
    p.add_argument(
        "--split-pos-neg",
        dest="split_pos_neg",
        action="store_true",
        help="also report samples needing edits and copies separately",
    )
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = subparsers.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--data", default=None, help="labeled JSONL; default: a synthetic sample")
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        logger.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    except (ConvRewriteError, OSError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
