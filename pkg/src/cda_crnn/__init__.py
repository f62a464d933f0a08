"""Convolutional recurrent networks for concurrent dialogue act recognition."""

from .corpus import (
    TAXONOMY,
    Corpus,
    Dialogue,
    Utterance,
    Vocabulary,
    build_vocab,
    gen_long_range,
    gen_synthetic,
    load_corpus,
    load_embeddings,
    save_corpus,
    split_corpus,
    tokenize,
)
from .metrics import compute_metrics, group_by_dialogue_length, group_by_ref_count, hamming_score, micro_prf, paired_t_test
from .models import Model, ModelConfig, load_checkpoint, predict_labels, save_checkpoint
from .numeric import GradReport, ParameterStore, grad_check, make_rng, uniform_init
from .training import AdamState, TrainReport, adam_step, bce_loss, evaluate, train
from .transitions import TransitionMatrix, render_transition_table, transition_matrix

__all__ = [
    "AdamState",
    "Corpus",
    "Dialogue",
    "GradReport",
    "Model",
    "ModelConfig",
    "ParameterStore",
    "TAXONOMY",
    "TrainReport",
    "TransitionMatrix",
    "Utterance",
    "Vocabulary",
    "adam_step",
    "bce_loss",
    "build_vocab",
    "compute_metrics",
    "evaluate",
    "gen_long_range",
    "gen_synthetic",
    "grad_check",
    "group_by_dialogue_length",
    "group_by_ref_count",
    "hamming_score",
    "load_checkpoint",
    "load_corpus",
    "load_embeddings",
    "make_rng",
    "micro_prf",
    "paired_t_test",
    "predict_labels",
    "render_transition_table",
    "save_checkpoint",
    "save_corpus",
    "split_corpus",
    "tokenize",
    "train",
    "transition_matrix",
    "uniform_init",
]

__version__ = "0.1.0"
