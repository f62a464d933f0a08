"""Binary cross-entropy, Adam, and the dialogue-level training loop."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .corpus import Corpus, Vocabulary, build_vocab
from .layers import EmbeddingTable
from .metrics import MetricsReport, compute_metrics, hamming_score, micro_prf
from .models import Model, ModelConfig, backward, forward, predict_labels
from .numeric import DTYPE, ParameterStore, make_rng

log = logging.getLogger(__name__)

LOSS_EPS = 1e-12


class TrainingDiverged(FloatingPointError):
    pass


def bce_loss(probs, refs, eps: float = LOSS_EPS) -> float:
    """Mean binary cross-entropy over all ``s * c`` entries, probabilities clamped to ``[eps, 1 - eps]``."""
    probs = np.asarray(probs, dtype=DTYPE)
    refs = np.asarray(refs, dtype=DTYPE)
    if probs.shape != refs.shape:
        raise ValueError(f"probs {probs.shape} and refs {refs.shape} differ in shape")
    p = np.clip(probs, eps, 1.0 - eps)
    return float(-np.mean(refs * np.log(p) + (1.0 - refs) * np.log(1.0 - p)))


def bce_loss_grad(probs, refs, eps: float = LOSS_EPS) -> np.ndarray:
    """``d bce_loss / d probs``; zero where the clamp is active."""
    probs = np.asarray(probs, dtype=DTYPE)
    refs = np.asarray(refs, dtype=DTYPE)
    p = np.clip(probs, eps, 1.0 - eps)
    g = -(refs / p - (1.0 - refs) / (1.0 - p)) / probs.size
    g[(probs < eps) | (probs > 1.0 - eps)] = 0.0
    return g


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update, in place. Parameters without a gradient are left alone."""
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainReport:
    initial_loss: float
    losses: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    val_f1: list = field(default_factory=list)
    best_epoch: int = 0
    wall_time: float = 0.0

    def log_lines(self) -> list[str]:
        lines = [f"epoch=0 loss={self.initial_loss:.6f}"]
        for k, (loss, acc, f1) in enumerate(zip(self.losses, self.val_accuracy, self.val_f1), start=1):
            lines.append(f"epoch={k} loss={loss:.6f} val_accuracy={acc:.6f} val_f1={f1:.6f}")
        lines.append(f"best_epoch={self.best_epoch} wall_time={self.wall_time:.2f}s")
        return lines

    def to_dict(self) -> dict:
        return {
            "initial_loss": self.initial_loss,
            "losses": self.losses,
            "val_accuracy": self.val_accuracy,
            "val_f1": self.val_f1,
            "best_epoch": self.best_epoch,
            "wall_time": self.wall_time,
        }


def dialogue_loss_and_grads(model: Model, tokens, refs, mode="train", rng=None):
    probs, cache = forward(tokens, model.config, model.params, mode, rng)
    loss = bce_loss(probs, refs)
    grads = backward(bce_loss_grad(probs, refs), cache, model.config, model.params)
    return loss, grads


def predict_corpus(model: Model, corpus: Corpus, threshold: float = 0.5) -> list[list[frozenset]]:
    return [model.predict(d, threshold) for d in corpus]


def evaluate(model: Model, corpus: Corpus, threshold: float = 0.5) -> MetricsReport:
    preds = predict_corpus(model, corpus, threshold)
    return compute_metrics([d.label_sets for d in corpus], preds)


def _quick_scores(model, encoded, refs_sets, threshold):
    refs, preds = [], []
    for tokens, rsets in zip(encoded, refs_sets):
        probs = forward(tokens, model.config, model.params, "eval")[0]
        preds.extend(predict_labels(probs, threshold, model.taxonomy))
        refs.extend(rsets)
    acc = float(np.mean([hamming_score(r, p) for r, p in zip(refs, preds)]))
    return acc, micro_prf(refs, preds)[2]


def train(
    train_set: Corpus,
    validation_set: Corpus,
    config: ModelConfig,
    epochs: int,
    *,
    lr: float = 1e-3,
    patience: int | None = None,
    threshold: float = 0.5,
    vocab: Vocabulary | None = None,
    min_count: int = 1,
    embeddings: EmbeddingTable | Callable[[Vocabulary], EmbeddingTable] | None = None,
    on_epoch: Callable[[int, float, float, float], None] | None = None,
) -> tuple[Model, TrainReport]:
    """Train ``config`` on ``train_set`` with one Adam step per dialogue.

    Dialogues are reshuffled every epoch from a generator seeded with
    ``config.seed``; dropout is active during updates. After each epoch the
    model is scored on ``validation_set`` in eval mode, and the parameters of
    the epoch with the highest validation micro-F1 (earliest on ties) are
    returned. Training stops early after ``patience`` epochs without
    improvement. ``embeddings`` may be a table or a callable building one from
    the vocabulary.
    """
    if len(train_set) == 0 or len(validation_set) == 0:
        raise ValueError("training and validation sets must be nonempty")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    started = time.perf_counter()
    vocab = build_vocab(train_set, min_count) if vocab is None else vocab
    if callable(embeddings):
        embeddings = embeddings(vocab)
    model = Model.init(config, vocab, embeddings, taxonomy=train_set.taxonomy, rng=make_rng(config.seed))
    train_rng = make_rng(config.seed + 1)

    enc_train = [model.encode(d) for d in train_set]
    Y_train = [train_set.label_matrix(d) for d in train_set]
    enc_val = [model.encode(d) for d in validation_set]
    val_refs = [d.label_sets for d in validation_set]

    initial = float(np.mean([bce_loss(forward(x, config, model.params, "eval")[0], y)
                             for x, y in zip(enc_train, Y_train)]))
    report = TrainReport(initial_loss=initial)
    state = AdamState(lr=lr)
    best_f1 = -1.0
    best_params: ParameterStore = model.params.copy()

    for epoch in range(1, epochs + 1):
        order = train_rng.permutation(len(enc_train))
        losses = []
        for i in order:
            loss, grads = dialogue_loss_and_grads(model, enc_train[i], Y_train[i], "train", train_rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch} on dialogue {train_set.dialogues[i].id}")
            adam_step(model.params, grads, state)
            losses.append(loss)
        epoch_loss = float(np.mean(losses))
        acc, f1 = _quick_scores(model, enc_val, val_refs, threshold)
        report.losses.append(epoch_loss)
        report.val_accuracy.append(acc)
        report.val_f1.append(f1)
        log.info("epoch=%d loss=%.6f val_accuracy=%.6f val_f1=%.6f", epoch, epoch_loss, acc, f1)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss, acc, f1)
        if f1 > best_f1:
            best_f1 = f1
            report.best_epoch = epoch
            best_params = model.params.copy()
        elif patience is not None and epoch - report.best_epoch >= patience:
            break

    model.params = best_params
    report.wall_time = time.perf_counter() - started
    return model, report
