"""Desk-scale abstractive summarization laboratory.

Trains a miniature encoder-decoder with a composite objective: token-level
negative log-likelihood, a transport-based reverse attention penalty, and
two entropy regularizers computed over named-entity token spans.
"""

from infosum.autograd import Tensor, GradReport, finite_difference, grad_check
from infosum.bpe import MergeTable, train_merges, encode_words, decode
from infosum.corpus import (
    AnnotatedDocument,
    EntitySpan,
    TokenEntitySpan,
    TrainingExample,
    load_annotated,
    filter_entities,
    map_entity_spans,
    build_example,
)
from infosum.model import ModelConfig, BeamSettings, init_params, forward, beam_search
from infosum.objectives import (
    LossBundle,
    mle_loss,
    ot_cost,
    ot_plan,
    ot_loss,
    entropy_series,
    anig_loss,
    je_loss,
    total_loss,
    example_loss,
)
from infosum.trainer import TrainConfig, ValidationHistory, train, lr_at_step, early_stop_select
from infosum.evalsuite import RougeScore, rouge_n, rouge_lsum, normalize_whitespace
from infosum.estimator import TransformerSummarizer

__all__ = [
    "Tensor",
    "GradReport",
    "finite_difference",
    "grad_check",
    "MergeTable",
    "train_merges",
    "encode_words",
    "decode",
    "AnnotatedDocument",
    "EntitySpan",
    "TokenEntitySpan",
    "TrainingExample",
    "load_annotated",
    "filter_entities",
    "map_entity_spans",
    "build_example",
    "ModelConfig",
    "BeamSettings",
    "init_params",
    "forward",
    "beam_search",
    "LossBundle",
    "mle_loss",
    "ot_cost",
    "ot_plan",
    "ot_loss",
    "entropy_series",
    "anig_loss",
    "je_loss",
    "total_loss",
    "example_loss",
    "TrainConfig",
    "ValidationHistory",
    "train",
    "lr_at_step",
    "early_stop_select",
    "RougeScore",
    "rouge_n",
    "rouge_lsum",
    "normalize_whitespace",
    "TransformerSummarizer",
]
