"""Small trainable self-attention encoder with exact hand-written gradients.

The rest of the pipeline only needs two things from an encoder: per-token
vectors for a joint sequence (``encode``) and exact parameter gradients given
an output cotangent (``encode_with_grad``).  This implementation is plain
numpy: learned token and position embeddings, a stack of post-norm
self-attention blocks, and three small heads (tagging plus span start/end)
whose tensors live in the same parameter dictionary.  The backward pass is
derived by hand and checked against central finite differences in the test
suite; float64 is the default so runs are deterministic enough to compare
bit-for-bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.special import erf

from .corpus import JointSequence, Vocabulary
from .errors import LengthError, SchemaError, ShapeError
from .labeling import TAG_NAMES

NUM_TAGS = len(TAG_NAMES)

_LN_EPS = 1e-5
_SQRT_HALF = math.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

CHECKPOINT_FORMAT = "convrewrite-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class EncoderConfig:
    """Sizes and switches for the encoder and its heads."""

    vocab_size: int
    width: int = 64
    layers: int = 2
    heads: int = 2
    ff_width: int | None = None
    max_len: int = 512
    activation: str = "gelu"  # gelu | tanh
    span_hidden: int | None = None  # hidden width of the span-scoring heads
    dtype: str = "float64"  # float64 | float32
    seed: int = 0

    def __post_init__(self):
        if self.ff_width is None:
            self.ff_width = 4 * self.width
        if self.span_hidden is None:
            self.span_hidden = self.width
        for name in ("vocab_size", "width", "heads", "ff_width", "max_len", "span_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.width % self.heads:
            raise ValueError("width must be divisible by heads")
        if self.activation not in ("gelu", "tanh"):
            raise ValueError(f"unknown activation: {self.activation!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported dtype: {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


@dataclass
class ModelParams:
    """Every trainable tensor of the model, keyed by a dotted name."""

    config: EncoderConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def _tensor_specs(config: EncoderConfig) -> dict[str, tuple[tuple[int, ...], str, int]]:
    """Shape, init kind, and fan-in for every tensor, in a fixed order."""
    d = config.width
    specs: dict[str, tuple[tuple[int, ...], str, int]] = {}

    def weight(name, shape, fan_in):
        specs[name] = (shape, "uniform", fan_in)

    def zeros(name, shape):
        specs[name] = (shape, "zeros", 0)

    def ones(name, shape):
        specs[name] = (shape, "ones", 0)

    weight("tok_emb", (config.vocab_size, d), d)
    weight("pos_emb", (config.max_len, d), d)
    for i in range(config.layers):
        p = f"layers.{i}."
        for nm in ("w_query", "w_key", "w_value", "w_out"):
            weight(p + "attn." + nm, (d, d), d)
        for nm in ("b_query", "b_key", "b_value", "b_out"):
            zeros(p + "attn." + nm, (d,))
        ones(p + "norm1.gain", (d,))
        zeros(p + "norm1.bias", (d,))
        weight(p + "ff.w_in", (d, config.ff_width), d)
        zeros(p + "ff.b_in", (config.ff_width,))
        weight(p + "ff.w_out", (config.ff_width, d), config.ff_width)
        zeros(p + "ff.b_out", (d,))
        ones(p + "norm2.gain", (d,))
        zeros(p + "norm2.bias", (d,))
    weight("detect.w", (NUM_TAGS, d), d)
    zeros("detect.b", (NUM_TAGS,))
    for head in ("span_start", "span_end"):
        weight(head + ".w", (config.span_hidden, 2 * d), 2 * d)
        zeros(head + ".b", (config.span_hidden,))
        weight(head + ".v", (config.span_hidden,), config.span_hidden)
    return specs


def init_params(config: EncoderConfig) -> ModelParams:
    """Seeded random initialization.

    Weights are uniform in +-1/sqrt(fan_in), norm gains start at one, and
    every bias starts at zero.  The draw order is the fixed tensor order, so
    one seed fully determines the parameters.
    """
    rng = np.random.default_rng(config.seed)
    dtype = config.np_dtype
    tensors: dict[str, np.ndarray] = {}
    for name, (shape, kind, fan_in) in _tensor_specs(config).items():
        if kind == "uniform":
            limit = 1.0 / math.sqrt(fan_in)
            tensors[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        elif kind == "ones":
            tensors[name] = np.ones(shape, dtype)
        else:
            tensors[name] = np.zeros(shape, dtype)
    return ModelParams(config, tensors)


def zero_params(config: EncoderConfig) -> ModelParams:
    """All-zero parameters; encodes everything to zero vectors, so every head
    yields a uniform distribution."""
    dtype = config.np_dtype
    tensors = {
        name: np.zeros(shape, dtype) for name, (shape, _, _) in _tensor_specs(config).items()
    }
    return ModelParams(config, tensors)


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis``."""
    shifted = scores - scores.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


def _activation_forward(kind: str, pre: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and elementwise derivative of the feed-forward nonlinearity."""
    if kind == "gelu":
        cdf = 0.5 * (1.0 + erf(pre * _SQRT_HALF))
        value = pre * cdf
        grad = cdf + pre * _INV_SQRT_2PI * np.exp(-0.5 * pre * pre)
        return value, grad
    value = np.tanh(pre)
    return value, 1.0 - value * value


def _layernorm_forward(x, gain, bias):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    normed = centered * inv
    return normed * gain + bias, (normed, inv, gain)


def _layernorm_backward(cache, d_out):
    normed, inv, gain = cache
    d_gain = (d_out * normed).sum(axis=0)
    d_bias = d_out.sum(axis=0)
    d_normed = d_out * gain
    d_x = inv * (
        d_normed
        - d_normed.mean(axis=-1, keepdims=True)
        - normed * (d_normed * normed).mean(axis=-1, keepdims=True)
    )
    return d_x, d_gain, d_bias


def _attention_forward(config, tensors, prefix, x):
    n_tok, d = x.shape
    n_heads = config.heads
    head_dim = d // n_heads
    q = x @ tensors[prefix + "w_query"] + tensors[prefix + "b_query"]
    k = x @ tensors[prefix + "w_key"] + tensors[prefix + "b_key"]
    v = x @ tensors[prefix + "w_value"] + tensors[prefix + "b_value"]
    qh = q.reshape(n_tok, n_heads, head_dim).transpose(1, 0, 2)
    kh = k.reshape(n_tok, n_heads, head_dim).transpose(1, 0, 2)
    vh = v.reshape(n_tok, n_heads, head_dim).transpose(1, 0, 2)
    scores = (qh @ kh.transpose(0, 2, 1)) / math.sqrt(head_dim)
    weights = softmax(scores)
    mixed = weights @ vh
    merged = mixed.transpose(1, 0, 2).reshape(n_tok, d)
    out = merged @ tensors[prefix + "w_out"] + tensors[prefix + "b_out"]
    return out, (x, qh, kh, vh, weights, merged)


def _attention_backward(config, tensors, prefix, cache, d_out, grads):
    x, qh, kh, vh, weights, merged = cache
    n_tok, d = x.shape
    n_heads = config.heads
    head_dim = d // n_heads
    grads[prefix + "w_out"] += merged.T @ d_out
    grads[prefix + "b_out"] += d_out.sum(axis=0)
    d_merged = d_out @ tensors[prefix + "w_out"].T
    d_mixed = d_merged.reshape(n_tok, n_heads, head_dim).transpose(1, 0, 2)
    d_weights = d_mixed @ vh.transpose(0, 2, 1)
    d_vh = weights.transpose(0, 2, 1) @ d_mixed
    d_scores = weights * (d_weights - (d_weights * weights).sum(axis=-1, keepdims=True))
    d_scores /= math.sqrt(head_dim)
    d_qh = d_scores @ kh
    d_kh = d_scores.transpose(0, 2, 1) @ qh
    d_q = d_qh.transpose(1, 0, 2).reshape(n_tok, d)
    d_k = d_kh.transpose(1, 0, 2).reshape(n_tok, d)
    d_v = d_vh.transpose(1, 0, 2).reshape(n_tok, d)
    grads[prefix + "w_query"] += x.T @ d_q
    grads[prefix + "b_query"] += d_q.sum(axis=0)
    grads[prefix + "w_key"] += x.T @ d_k
    grads[prefix + "b_key"] += d_k.sum(axis=0)
    grads[prefix + "w_value"] += x.T @ d_v
    grads[prefix + "b_value"] += d_v.sum(axis=0)
    d_x = (
        d_q @ tensors[prefix + "w_query"].T
        + d_k @ tensors[prefix + "w_key"].T
        + d_v @ tensors[prefix + "w_value"].T
    )
    return d_x


def _ff_forward(config, tensors, prefix, x):
    pre = x @ tensors[prefix + "w_in"] + tensors[prefix + "b_in"]
    act, act_grad = _activation_forward(config.activation, pre)
    out = act @ tensors[prefix + "w_out"] + tensors[prefix + "b_out"]
    return out, (x, act, act_grad)


def _ff_backward(tensors, prefix, cache, d_out, grads):
    x, act, act_grad = cache
    grads[prefix + "w_out"] += act.T @ d_out
    grads[prefix + "b_out"] += d_out.sum(axis=0)
    d_act = d_out @ tensors[prefix + "w_out"].T
    d_pre = d_act * act_grad
    grads[prefix + "w_in"] += x.T @ d_pre
    grads[prefix + "b_in"] += d_pre.sum(axis=0)
    return d_pre @ tensors[prefix + "w_in"].T


def forward_hidden(params: ModelParams, ids: Sequence[int]) -> tuple[np.ndarray, dict]:
    """Hidden states for a full id sequence plus the backward-pass cache."""
    config = params.config
    tensors = params.tensors
    n_tok = len(ids)
    if n_tok == 0:
        raise ValueError("cannot encode an empty sequence")
    if n_tok > config.max_len:
        raise LengthError(f"sequence length {n_tok} exceeds max_len {config.max_len}")
    id_arr = np.asarray(ids, dtype=np.intp)
    if id_arr.min() < 0 or id_arr.max() >= config.vocab_size:
        raise ValueError("token id out of vocabulary range")
    x = tensors["tok_emb"][id_arr] + tensors["pos_emb"][:n_tok]
    cache: dict = {"ids": id_arr, "layers": []}
    for i in range(config.layers):
        p = f"layers.{i}."
        attn_out, attn_cache = _attention_forward(config, tensors, p + "attn.", x)
        res1 = x + attn_out
        h1, ln1_cache = _layernorm_forward(res1, tensors[p + "norm1.gain"], tensors[p + "norm1.bias"])
        ff_out, ff_cache = _ff_forward(config, tensors, p + "ff.", h1)
        res2 = h1 + ff_out
        h2, ln2_cache = _layernorm_forward(res2, tensors[p + "norm2.gain"], tensors[p + "norm2.bias"])
        if not np.isfinite(h2).all():
            raise FloatingPointError(f"non-finite activations after encoder layer {i}")
        cache["layers"].append((attn_cache, ln1_cache, ff_cache, ln2_cache))
        x = h2
    if config.layers == 0 and not np.isfinite(x).all():
        raise FloatingPointError("non-finite embeddings")
    return x, cache


def backward_hidden(params: ModelParams, cache: dict, d_hidden: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given the cotangent of the hidden states.

    Returns a gradient array for every tensor in ``params``; tensors that do
    not influence the hidden states (the head tensors) come back zero.
    """
    config = params.config
    tensors = params.tensors
    grads = params.zeros_like()
    d_x = np.array(d_hidden, dtype=config.np_dtype)
    for i in reversed(range(config.layers)):
        p = f"layers.{i}."
        attn_cache, ln1_cache, ff_cache, ln2_cache = cache["layers"][i]
        d_res2, d_gain2, d_bias2 = _layernorm_backward(ln2_cache, d_x)
        grads[p + "norm2.gain"] += d_gain2
        grads[p + "norm2.bias"] += d_bias2
        d_h1 = d_res2 + _ff_backward(tensors, p + "ff.", ff_cache, d_res2, grads)
        d_res1, d_gain1, d_bias1 = _layernorm_backward(ln1_cache, d_h1)
        grads[p + "norm1.gain"] += d_gain1
        grads[p + "norm1.bias"] += d_bias1
        d_x = d_res1 + _attention_backward(config, tensors, p + "attn.", attn_cache, d_res1, grads)
    ids = cache["ids"]
    np.add.at(grads["tok_emb"], ids, d_x)
    grads["pos_emb"][: len(ids)] += d_x
    return grads


@dataclass
class EncoderOutput:
    """Per-token vectors for the context stream and the question segment.

    ``question_vecs`` row 0 is the sentinel and row k is question token k-1;
    the sentinel stays addressable because it can host an insertion.
    ``context_vecs`` covers the real context tokens only, separators skipped.
    """

    context_vecs: np.ndarray
    question_vecs: np.ndarray


def encode(params: ModelParams, seq: JointSequence) -> EncoderOutput:
    """Per-token vectors for one joint sequence, split back into segments."""
    hidden, _ = forward_hidden(params, seq.ids)
    return EncoderOutput(
        context_vecs=hidden[seq.context_positions],
        question_vecs=hidden[seq.bos_index :],
    )


def encode_with_grad(
    params: ModelParams, seq: JointSequence, upstream: EncoderOutput
) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of :func:`encode`.

    ``upstream`` carries the cotangents of the two output blocks in an
    EncoderOutput shell; shapes must match what encode would return.
    Separator positions receive no upstream signal.
    """
    config = params.config
    hidden, cache = forward_hidden(params, seq.ids)
    ctx_positions = seq.context_positions
    n_question = len(seq.tokens) - seq.bos_index
    if upstream.context_vecs.shape != (len(ctx_positions), config.width):
        raise ShapeError(
            f"context cotangent has shape {upstream.context_vecs.shape}, "
            f"expected {(len(ctx_positions), config.width)}"
        )
    if upstream.question_vecs.shape != (n_question, config.width):
        raise ShapeError(
            f"question cotangent has shape {upstream.question_vecs.shape}, "
            f"expected {(n_question, config.width)}"
        )
    d_hidden = np.zeros_like(hidden)
    if ctx_positions:
        d_hidden[ctx_positions] += upstream.context_vecs
    d_hidden[seq.bos_index :] += upstream.question_vecs
    return backward_hidden(params, cache, d_hidden)


def save_checkpoint(path, params: ModelParams, vocab: Vocabulary, meta: dict | None = None) -> None:
    """Write parameters, config, and vocabulary as one versioned JSON file.

    Float64 values round-trip exactly through JSON's decimal repr, so a
    save/load cycle is bit-for-bit faithful in the default profile.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "vocab": vocab.to_texts(),
        "tensors": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in params.tensors.items()
        },
    }
    if meta:
        payload["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> tuple[ModelParams, Vocabulary]:
    """Read a checkpoint written by :func:`save_checkpoint`, validating shapes."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise SchemaError("not a recognized checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise SchemaError(f"unsupported checkpoint version: {payload.get('version')!r}")
    config = EncoderConfig(**payload["config"])
    specs = _tensor_specs(config)
    raw = payload["tensors"]
    if set(raw) != set(specs):
        raise SchemaError("checkpoint tensors do not match the config")
    tensors: dict[str, np.ndarray] = {}
    for name, (shape, _, _) in specs.items():
        entry = raw[name]
        if tuple(entry["shape"]) != shape:
            raise ShapeError(f"tensor {name} has shape {entry['shape']}, expected {list(shape)}")
        arr = np.asarray(entry["data"], dtype=config.np_dtype).reshape(shape)
        tensors[name] = arr
    vocab = Vocabulary.from_texts(payload["vocab"], frozen=True)
    if len(vocab) != config.vocab_size:
        raise SchemaError(
            f"vocabulary size {len(vocab)} does not match config vocab_size {config.vocab_size}"
        )
    return ModelParams(config, tensors), vocab
