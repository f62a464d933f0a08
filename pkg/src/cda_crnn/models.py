"""Dialogue-level models: three CRNN variants and two CNN baselines.

Variants
--------
``crnn_v1``  conv -> max-over-time -> BiRNN -> sigmoid head
``crnn_v2``  as v1, head sees ``[BiRNN output ++ utterance vector]``
``crnn_v3``  as v2 with dynamic k-max pooling (``pool_k`` chunks)
``cnn_kim``  context-free: three same-width filter groups -> max-over-time -> head
``cnn_cr``   cnn_kim utterance vectors, head sees a window of neighbours

A dialogue is a list of int64 token-index arrays, one per utterance, each
at least as long as the widest filter.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import layers as L
from ._io import atomic_write_dir
from .corpus import TAXONOMY, Vocabulary
from .layers import EmbeddingTable, RecurrentCell
from .numeric import DTYPE, ParameterStore, make_rng, uniform_init

VARIANTS = ("crnn_v1", "crnn_v2", "crnn_v3", "cnn_kim", "cnn_cr")
CELLS = ("lstm", "gru")
FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    variant: str = "crnn_v3"
    cell: str = "lstm"
    widths: tuple = (3, 4, 5)
    filters: int = 100
    cnn_dropout: float = 0.4
    hidden: int = 900
    layers: int = 2
    rnn_dropout: float = 0.15
    pool_k: int = 2
    num_labels: int = len(TAXONOMY)
    embed_dim: int = 300
    window: int = 3
    kim_width: int = 3
    train_embeddings: bool = True
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.cell not in CELLS:
            raise ValueError(f"unknown cell {self.cell!r}; choose from {CELLS}")
        if not self.widths or min(self.widths) < 1:
            raise ValueError("filter widths must be positive")
        for name in ("filters", "hidden", "layers", "pool_k", "num_labels", "embed_dim", "kim_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("context window must be a positive odd number")
        for name in ("cnn_dropout", "rnn_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")

    @property
    def is_recurrent(self) -> bool:
        return self.variant.startswith("crnn")

    @property
    def group_widths(self) -> tuple:
        """Width of each convolutional filter group."""
        if self.is_recurrent:
            return self.widths
        return (self.kim_width,) * 3

    @property
    def max_width(self) -> int:
        return max(self.group_widths)

    @property
    def pool_chunks(self) -> int:
        return self.pool_k if self.variant == "crnn_v3" else 1

    @property
    def utterance_dim(self) -> int:
        return len(self.group_widths) * self.filters * self.pool_chunks

    @property
    def head_input_dim(self) -> int:
        if self.variant == "crnn_v1":
            return 2 * self.hidden
        if self.variant in ("crnn_v2", "crnn_v3"):
            return 2 * self.hidden + self.utterance_dim
        if self.variant == "cnn_kim":
            return self.utterance_dim
        return self.window * self.utterance_dim

    def hyperparameter_tuple(self) -> str:
        """``(filters, cnn dropout, rnn units, rnn layers, rnn dropout, k)``."""
        return f"({self.filters}, {self.cnn_dropout}, {self.hidden}, {self.layers}, {self.rnn_dropout}, {self.pool_k})"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def rnn_param_names(layer: int, direction: str) -> tuple[str, str, str]:
    prefix = f"rnn.{layer}.{direction}"
    return f"{prefix}.W", f"{prefix}.U", f"{prefix}.b"


def init_params(config: ModelConfig, vocab_size: int, rng: np.random.Generator,
                embeddings: EmbeddingTable | None = None) -> ParameterStore:
    """Fresh parameters in canonical order.

    Order: ``embedding``; ``conv.{g}.weight``, ``conv.{g}.bias`` per filter
    group; for recurrent variants ``rnn.{layer}.{fwd,bwd}.{W,U,b}``; then
    ``head.weight``, ``head.bias``. Ranges are U(-a, a) with ``a = 0.25`` for
    embeddings and ``1/sqrt(fan_in)`` elsewhere.
    """
    e = config.embed_dim
    params = ParameterStore()
    if embeddings is not None:
        if embeddings.weights.shape != (vocab_size, e):
            raise ValueError(f"embedding table {embeddings.weights.shape} does not match ({vocab_size}, {e})")
        table = embeddings.weights.copy()
    else:
        table = uniform_init((vocab_size, e), -0.25, 0.25, rng)
    table[L.PAD] = 0.0
    params["embedding"] = table
    for g, d in enumerate(config.group_widths):
        a = 1.0 / np.sqrt(d * e)
        params[f"conv.{g}.weight"] = uniform_init((config.filters, d, e), -a, a, rng)
        params[f"conv.{g}.bias"] = uniform_init((config.filters,), -a, a, rng)
    if config.is_recurrent:
        n_in = config.utterance_dim
        for layer in range(config.layers):
            for direction in ("fwd", "bwd"):
                cell = RecurrentCell.init(config.cell, n_in, config.hidden, rng)
                for name, arr in zip(rnn_param_names(layer, direction), (cell.W, cell.U, cell.b)):
                    params[name] = arr
            n_in = 2 * config.hidden
    a = 1.0 / np.sqrt(config.head_input_dim)
    params["head.weight"] = uniform_init((config.num_labels, config.head_input_dim), -a, a, rng)
    params["head.bias"] = uniform_init((config.num_labels,), -a, a, rng)
    return params


def param_shapes(config: ModelConfig, vocab_size: int) -> list[tuple[str, tuple]]:
    """Names and shapes of :func:`init_params` output, without allocating."""
    e, F, H = config.embed_dim, config.filters, config.hidden
    shapes = [("embedding", (vocab_size, e))]
    for g, d in enumerate(config.group_widths):
        shapes += [(f"conv.{g}.weight", (F, d, e)), (f"conv.{g}.bias", (F,))]
    if config.is_recurrent:
        G = L.GATE_BLOCKS[config.cell]
        n_in = config.utterance_dim
        for layer in range(config.layers):
            for direction in ("fwd", "bwd"):
                w, u, b = rnn_param_names(layer, direction)
                shapes += [(w, (G * H, n_in)), (u, (G * H, H)), (b, (G * H,))]
            n_in = 2 * H
    shapes += [("head.weight", (config.num_labels, config.head_input_dim)), ("head.bias", (config.num_labels,))]
    return shapes


def check_params(config: ModelConfig, params: ParameterStore) -> None:
    vocab_size = params["embedding"].shape[0] if "embedding" in params else 0
    want = param_shapes(config, vocab_size)
    have = params.shapes()
    if want != have:
        bad = next((w, h) for w, h in zip(want + [None] * len(have), have + [None] * len(want)) if w != h)
        raise ValueError(f"parameters do not match config: expected {bad[0]}, got {bad[1]}")


def _rnn_layers(config, params):
    return [
        tuple(RecurrentCell(config.cell, *(params[n] for n in rnn_param_names(layer, direction)))
              for direction in ("fwd", "bwd"))
        for layer in range(config.layers)
    ]


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def context_window_forward(V, window: int):
    """Row ``t`` is ``[V[t-h] ++ ... ++ V[t+h]]`` with zero rows past the ends, ``h = window // 2``."""
    s, D = V.shape
    half = window // 2
    Z = np.zeros((s, window * D), dtype=DTYPE)
    for k, off in enumerate(range(-half, half + 1)):
        lo, hi = max(0, -off), min(s, s - off)
        Z[lo:hi, k * D:(k + 1) * D] = V[lo + off:hi + off]
    return Z


def context_window_backward(dZ, window: int, D: int):
    s = dZ.shape[0]
    half = window // 2
    dV = np.zeros((s, D), dtype=DTYPE)
    for k, off in enumerate(range(-half, half + 1)):
        lo, hi = max(0, -off), min(s, s - off)
        dV[lo + off:hi + off] += dZ[lo:hi, k * D:(k + 1) * D]
    return dV


def forward(dialogue, config: ModelConfig, params: ParameterStore, mode: str = "eval",
            rng: np.random.Generator | None = None):
    """Per-utterance label probabilities ``(s, c)`` and a cache for :func:`backward`."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if len(dialogue) == 0:
        raise ValueError("dialogue has no utterances")
    table = params["embedding"]
    groups = [(params[f"conv.{g}.weight"], params[f"conv.{g}.bias"]) for g in range(len(config.group_widths))]
    p = config.pool_chunks

    utt_caches = []
    vectors = []
    for tokens in dialogue:
        if len(tokens) < config.max_width:
            raise ValueError(f"utterance of {len(tokens)} tokens is shorter than the widest filter "
                             f"({config.max_width}); pad it first")
        X, c_emb = L.embed_forward(tokens, table)
        pooled, c_conv = [], []
        for W, b in groups:
            K, cc = L.conv_forward(X, W, b)
            P, cp = L.kmax_forward(K, p)
            pooled.append(P.ravel())
            c_conv.append((cc, cp))
        vectors.append(np.concatenate(pooled))
        utt_caches.append((c_emb, c_conv))
    V = np.vstack(vectors)
    V_drop, cnn_mask = L.dropout_forward(V, config.cnn_dropout, train, rng)

    rnn_cache = None
    if config.is_recurrent:
        Hs, rnn_cache = L.birnn_forward(V_drop, _rnn_layers(config, params), config.rnn_dropout, train, rng)
        Z = Hs if config.variant == "crnn_v1" else L.highway_join(Hs, V_drop)
    elif config.variant == "cnn_kim":
        Z = V_drop
    else:
        Z = context_window_forward(V_drop, config.window)
    probs, head_cache = L.dense_sigmoid_forward(Z, params["head.weight"], params["head.bias"])
    return probs, (utt_caches, cnn_mask, rnn_cache, head_cache, V.shape[1])


def backward(dprobs, cache, config: ModelConfig, params: ParameterStore, want_inputs: bool = False):
    """Gradients of a scalar loss given ``dprobs = dloss/dprobs``.

    Returns a dict of parameter gradients; with ``want_inputs`` also the list
    of per-utterance ``d loss / d embedded rows``. The embedding gradient is
    omitted when ``config.train_embeddings`` is false.
    """
    utt_caches, cnn_mask, rnn_cache, head_cache, D = cache
    grads = {}
    dZ, grads["head.weight"], grads["head.bias"] = L.dense_sigmoid_backward(dprobs, head_cache)

    if config.is_recurrent:
        if config.variant == "crnn_v1":
            dHs, dV = dZ, 0.0
        else:
            dHs, dV = L.highway_split(dZ, 2 * config.hidden)
        dV_rnn, rnn_grads = L.birnn_backward(dHs, rnn_cache)
        dV = dV + dV_rnn
        for layer, pair in enumerate(rnn_grads):
            for direction, g in zip(("fwd", "bwd"), pair):
                for name, arr in zip(rnn_param_names(layer, direction), g):
                    grads[name] = arr
    elif config.variant == "cnn_kim":
        dV = dZ
    else:
        dV = context_window_backward(dZ, config.window, D)
    dV = L.dropout_backward(dV, cnn_mask)

    n_groups = len(config.group_widths)
    F = config.filters
    p = config.pool_chunks
    for g in range(n_groups):
        grads[f"conv.{g}.weight"] = np.zeros_like(params[f"conv.{g}.weight"])
        grads[f"conv.{g}.bias"] = np.zeros_like(params[f"conv.{g}.bias"])
    dtable = np.zeros_like(params["embedding"]) if config.train_embeddings else None
    d_inputs = []
    for t, (c_emb, c_conv) in enumerate(utt_caches):
        dX = None
        for g, (cc, cp) in enumerate(c_conv):
            dP = dV[t, g * F * p:(g + 1) * F * p].reshape(F, p)
            dK = L.kmax_backward(dP, cp)
            dXg, dW, db = L.conv_backward(dK, cc)
            grads[f"conv.{g}.weight"] += dW
            grads[f"conv.{g}.bias"] += db
            dX = dXg if dX is None else dX + dXg
        if dtable is not None:
            dtable += L.embed_backward(dX, c_emb)
        if want_inputs:
            d_inputs.append(dX)
    if dtable is not None:
        grads["embedding"] = dtable
    ordered = {name: grads[name] for name in params if name in grads}
    return (ordered, d_inputs) if want_inputs else ordered


def crnn_forward(dialogue, config, params, mode="eval", rng=None) -> np.ndarray:
    if not config.is_recurrent:
        raise ValueError(f"{config.variant} is not a CRNN variant")
    return forward(dialogue, config, params, mode, rng)[0]


def cnn_kim_forward(dialogue, config, params, mode="eval", rng=None) -> np.ndarray:
    if config.variant != "cnn_kim":
        raise ValueError(f"config variant is {config.variant}, not cnn_kim")
    return forward(dialogue, config, params, mode, rng)[0]


def cnn_cr_forward(dialogue, config, params, mode="eval", rng=None) -> np.ndarray:
    if config.variant != "cnn_cr":
        raise ValueError(f"config variant is {config.variant}, not cnn_cr")
    return forward(dialogue, config, params, mode, rng)[0]


def predict_labels(probs, threshold: float = 0.5, taxonomy=TAXONOMY) -> list[frozenset]:
    """Threshold each row; an empty row falls back to its argmax (lowest index on ties)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    probs = np.atleast_2d(np.asarray(probs, dtype=DTYPE))
    if probs.shape[1] != len(taxonomy):
        raise ValueError(f"{probs.shape[1]} probability columns for {len(taxonomy)} labels")
    out = []
    for row in probs:
        idx = np.flatnonzero(row >= threshold)
        if idx.size == 0:
            idx = [int(np.argmax(row))]
        out.append(frozenset(taxonomy[j] for j in idx))
    return out


# ---------------------------------------------------------------------------
# model bundle and checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Model:
    """A configuration, its parameters, and the vocabulary they were trained with."""

    config: ModelConfig
    params: ParameterStore
    vocab: Vocabulary
    taxonomy: tuple = TAXONOMY

    @classmethod
    def init(cls, config: ModelConfig, vocab: Vocabulary, embeddings=None, taxonomy=TAXONOMY, rng=None):
        if len(taxonomy) != config.num_labels:
            raise ValueError(f"{len(taxonomy)} taxonomy codes but num_labels={config.num_labels}")
        rng = make_rng(config.seed) if rng is None else rng
        return cls(config, init_params(config, len(vocab), rng, embeddings), vocab, tuple(taxonomy))

    def encode(self, dialogue) -> list[np.ndarray]:
        return self.vocab.encode_dialogue(dialogue, self.config.max_width)

    def predict_proba(self, dialogue) -> np.ndarray:
        """Eval-mode probabilities for a corpus :class:`~cda_crnn.corpus.Dialogue`."""
        return forward(self.encode(dialogue), self.config, self.params, "eval")[0]

    def predict(self, dialogue, threshold: float = 0.5) -> list[frozenset]:
        return predict_labels(self.predict_proba(dialogue), threshold, self.taxonomy)

    def save(self, path) -> None:
        save_checkpoint(path, self)


MANIFEST = "manifest.txt"
PARAMS_FILE = "params.bin"


def save_checkpoint(path, model: Model) -> None:
    """Write ``manifest.txt`` and ``params.bin`` (little-endian float64) into directory ``path``."""
    lines = [f"format_version = {FORMAT_VERSION}"]
    for key, value in model.config.to_dict().items():
        if key == "widths":
            value = ",".join(str(w) for w in value)
        lines.append(f"config.{key} = {value}")
    lines.append(f"hyperparameters = {model.config.hyperparameter_tuple()}")
    lines.append(f"taxonomy = {' '.join(model.taxonomy)}")
    for name, shape in model.params.shapes():
        lines.append(f"param = {name} {','.join(str(s) for s in shape)}")
    lines.append(f"vocab_size = {len(model.vocab)}")
    for tok in model.vocab.itos:
        lines.append(f"vocab = {tok}")
    blob = model.params.flatten().astype("<f8").tobytes()
    atomic_write_dir(path, {MANIFEST: ("\n".join(lines) + "\n").encode("utf-8"), PARAMS_FILE: blob})


def _parse_config_value(key, raw, default):
    if key == "widths":
        return tuple(int(w) for w in raw.split(","))
    if isinstance(default, bool):
        if raw not in ("True", "False"):
            raise ValueError(f"bad boolean {raw!r} for {key}")
        return raw == "True"
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def load_checkpoint(path) -> Model:
    manifest = os.path.join(path, MANIFEST)
    try:
        with open(manifest, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ValueError(f"cannot read checkpoint manifest {manifest}: {exc}") from exc
    defaults = ModelConfig().to_dict()
    cfg, shapes, vocab_tokens, taxonomy = {}, [], [], TAXONOMY
    version = None
    for line in lines:
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise ValueError(f"malformed manifest line {line!r}")
        if key == "format_version":
            version = int(value)
        elif key.startswith("config."):
            name = key[len("config."):]
            if name not in defaults:
                raise ValueError(f"unknown config field {name!r} in manifest")
            cfg[name] = _parse_config_value(name, value, defaults[name])
        elif key == "param":
            name, dims = value.split(" ")
            shapes.append((name, tuple(int(s) for s in dims.split(","))))
        elif key == "vocab":
            vocab_tokens.append(value)
        elif key == "taxonomy":
            taxonomy = tuple(value.split())
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version}")
    config = ModelConfig(**cfg)
    if vocab_tokens[:2] != [Vocabulary.PAD_TOKEN, Vocabulary.OOV_TOKEN]:
        raise ValueError("checkpoint vocabulary lacks reserved PAD/OOV entries")
    vocab = Vocabulary(vocab_tokens[2:])
    params = ParameterStore((name, np.zeros(shape, dtype=DTYPE)) for name, shape in shapes)
    check_params(config, params)
    with open(os.path.join(path, PARAMS_FILE), "rb") as fh:
        flat = np.frombuffer(fh.read(), dtype="<f8")
    params.load_flat(flat.astype(DTYPE))
    return Model(config, params, vocab, taxonomy)
