"""Action-based rewriting of context-dependent conversational questions.

Instead of generating a rewrite token by token, the model predicts a small
set of edits: per-token action tags on the question mark where something is
inserted or replaced, and a pointer head grounds each edit's target tokens
in the dialogue context.  Applying the edits yields the self-contained
question.  The package ships the full pipeline (labeling, a small trainable
encoder with exact gradients, joint training, inference, metrics), an
``ActionRewriter`` estimator with a scikit-learn interface, and a CLI.
"""
from . import errors
from .comprehend import SpanDistribution, select_span, span_probs
from .corpus import (
    Example,
    JointSequence,
    Token,
    Vocabulary,
    assemble,
    detokenize,
    load_corpus,
    tokenize,
)
from .detect import TagDistribution, extract_spans, greedy_decode, tag_probs
from .editing import Edit, EditPlan, apply_plan, plan_from_prediction
from .encoder import (
    EncoderConfig,
    EncoderOutput,
    ModelParams,
    encode,
    encode_with_grad,
    init_params,
    load_checkpoint,
    save_checkpoint,
    zero_params,
)
from .estimator import ActionRewriter
from .labeling import (
    ContextSpan,
    DiffBlock,
    Invalid,
    LabeledExample,
    QuestionSpan,
    augment,
    derive_labels,
    diff,
    find_answer,
    load_labeled,
    load_stopwords,
    write_labeled,
)
from .metrics import (
    EvalReport,
    bleu,
    corpus_bleu,
    evaluate_corpus,
    exact_match,
    rouge_l,
    rouge_n,
    split_report,
)
from .pipeline import RewriteResult, rewrite_example
from .training import (
    GradCheckReport,
    LossConfig,
    OptimConfig,
    StepRecord,
    grad_check,
    joint_loss,
    seq_loss,
    span_loss,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ActionRewriter",
    "ContextSpan",
    "DiffBlock",
    "Edit",
    "EditPlan",
    "EncoderConfig",
    "EncoderOutput",
    "EvalReport",
    "Example",
    "GradCheckReport",
    "Invalid",
    "JointSequence",
    "LabeledExample",
    "LossConfig",
    "ModelParams",
    "OptimConfig",
    "QuestionSpan",
    "RewriteResult",
    "SpanDistribution",
    "StepRecord",
    "TagDistribution",
    "Token",
    "Vocabulary",
    "apply_plan",
    "assemble",
    "augment",
    "bleu",
    "corpus_bleu",
    "derive_labels",
    "detokenize",
    "diff",
    "encode",
    "encode_with_grad",
    "errors",
    "evaluate_corpus",
    "exact_match",
    "extract_spans",
    "find_answer",
    "grad_check",
    "greedy_decode",
    "init_params",
    "joint_loss",
    "load_checkpoint",
    "load_corpus",
    "load_labeled",
    "load_stopwords",
    "plan_from_prediction",
    "rewrite_example",
    "rouge_l",
    "rouge_n",
    "save_checkpoint",
    "select_span",
    "seq_loss",
    "span_loss",
    "span_probs",
    "split_report",
    "tag_probs",
    "tokenize",
    "train",
    "write_labeled",
    "zero_params",
]
