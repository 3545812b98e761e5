"""Scikit-learn style front end over the full train/rewrite pipeline."""
from __future__ import annotations

import json
import logging

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import Vocabulary, detokenize
from .encoder import EncoderConfig, load_checkpoint, save_checkpoint
from .errors import ConvRewriteError
from .labeling import Invalid, LabeledExample, augment, derive_labels, load_stopwords
from .metrics import exact_match
from .pipeline import RewriteResult, rewrite_example
from .training import LossConfig, OptimConfig, train
from .validation import check_samples

logger = logging.getLogger(__name__)


class ActionRewriter(BaseEstimator):
    """Context-aware question rewriter trained from (question, rewrite) pairs.

    Samples are dicts with ``context`` (list of strings), ``question``
    (string), and for fitting a gold ``rewrite`` string; Example objects
    work too.  fit() derives edit supervision from the rewrites, builds the
    vocabulary, and trains the encoder and heads jointly; predict() returns
    one rewritten question string per sample; score() is exact-match
    accuracy.

    Follows the scikit-learn estimator contract, so clone(), get_params()
    and set_params() behave as usual.

    >>> model = ActionRewriter(epochs=40, batch_size=8)
    >>> model.fit(train_samples).predict(test_samples)  # doctest: +SKIP
    """

    def __init__(
        self,
        width: int = 64,
        layers: int = 2,
        heads: int = 2,
        ff_width: int | None = None,
        max_len: int = 512,
        activation: str = "gelu",
        token_mode: str = "word",
        learning_rate: float = 1e-3,
        warmup_ratio: float = 0.1,
        batch_size: int = 24,
        epochs: int = 3,
        seq_weight: float = 5.0,
        span_weight: float = 3.0,
        normalize_loss: bool = False,
        max_answer_len: int = 30,
        augment: bool = False,
        dtype: str = "float64",
        seed: int = 0,
    ):
        self.width = width
        self.layers = layers
        self.heads = heads
        self.ff_width = ff_width
        self.max_len = max_len
        self.activation = activation
        self.token_mode = token_mode
        self.learning_rate = learning_rate
        self.warmup_ratio = warmup_ratio
        self.batch_size = batch_size
        self.epochs = epochs
        self.seq_weight = seq_weight
        self.span_weight = span_weight
        self.normalize_loss = normalize_loss
        self.max_answer_len = max_answer_len
        self.augment = augment
        self.dtype = dtype
        self.seed = seed

    def fit(self, X, y=None):
        """Derive labels from the samples' rewrites and train the model.

        Samples whose rewrite cannot be expressed as grounded insert/replace
        edits are dropped (counted in ``n_invalid_``).
        """
        vocab = Vocabulary()
        examples = check_samples(X, token_mode=self.token_mode, vocab=vocab, require_rewrite=True)
        if self.augment:
            stopwords = load_stopwords()
            for example in list(examples):
                examples.extend(augment(example, stopwords))
        labeled: list[LabeledExample] = []
        invalid = 0
        for example in examples:
            result = derive_labels(example)
            if isinstance(result, Invalid):
                invalid += 1
            else:
                labeled.append(result)
        if not labeled:
            raise ValueError("no sample could be labeled; nothing to train on")
        if invalid:
            logger.info("dropped %d unlabelable samples", invalid)
        vocab.freeze()
        config = EncoderConfig(
            vocab_size=len(vocab),
            width=self.width,
            layers=self.layers,
            heads=self.heads,
            ff_width=self.ff_width,
            max_len=self.max_len,
            activation=self.activation,
            dtype=self.dtype,
            seed=self.seed,
        )
        optim = OptimConfig(
            learning_rate=self.learning_rate,
            warmup_ratio=self.warmup_ratio,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
        )
        loss = LossConfig(
            seq_weight=self.seq_weight,
            span_weight=self.span_weight,
            normalize=self.normalize_loss,
        )
        params, history = train(labeled, config, optim, loss)
        self.vocab_ = vocab
        self.params_ = params
        self.history_ = history
        self.n_samples_ = len(labeled)
        self.n_invalid_ = invalid
        return self

    def _rewrite(self, example) -> RewriteResult:
        try:
            return rewrite_example(self.params_, example, max_answer_len=self.max_answer_len)
        except (ConvRewriteError, FloatingPointError) as exc:
            logger.warning("rewrite failed for %r, copying the question: %s", example.id, exc)
            return RewriteResult(example, list(example.question), error=str(exc))

    def predict(self, X) -> list[str]:
        """One rewritten question string per sample; failures fall back to a copy."""
        check_is_fitted(self, "params_")
        examples = check_samples(X, token_mode=self.token_mode, vocab=self.vocab_)
        return [detokenize(self._rewrite(ex).prediction, self.token_mode) for ex in examples]

    def score(self, X, y=None) -> float:
        """Exact-match accuracy against ``y`` or the samples' own rewrites."""
        check_is_fitted(self, "params_")
        examples = check_samples(X, token_mode=self.token_mode, vocab=self.vocab_)
        if y is None:
            refs = []
            for i, example in enumerate(examples):
                if example.rewrite is None:
                    raise ValueError(f"sample {i} has no rewrite and no y was given")
                refs.append(example.rewrite)
        else:
            refs = list(y)
            if len(refs) != len(examples):
                raise ValueError(f"y has {len(refs)} entries for {len(examples)} samples")
        predictions = [self._rewrite(ex).prediction for ex in examples]
        hits = sum(1 for pred, ref in zip(predictions, refs) if exact_match(pred, ref))
        return hits / len(examples)

    def save(self, path) -> None:
        """Write the fitted model as one checkpoint file."""
        check_is_fitted(self, "params_")
        save_checkpoint(path, self.params_, self.vocab_, meta=self.get_params())

    @classmethod
    def load(cls, path) -> "ActionRewriter":
        """Rebuild a fitted estimator from a checkpoint written by save()."""
        params, vocab = load_checkpoint(path)
        with open(path, encoding="utf-8") as fh:
            meta = json.load(fh).get("meta") or {}
        known = cls().get_params()
        estimator = cls(**{k: v for k, v in meta.items() if k in known})
        estimator.params_ = params
        estimator.vocab_ = vocab
        estimator.history_ = []
        return estimator
