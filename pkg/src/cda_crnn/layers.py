"""Building blocks of the convolutional recurrent classifier.

Each differentiable layer comes as a ``*_forward`` function returning
``(output, cache)`` and a matching ``*_backward`` that consumes the upstream
gradient and the cache. The short names (:func:`embed`,
:func:`convolve`, :func:`dynamic_kmax_pool`, ...) are forward-only
conveniences around these pairs.

Shapes used throughout::

    n   tokens in an utterance        e   embedding width
    d   filter width                  F   filters per group
    m   feature-map length n - d + 1  p   pooling chunks
    s   utterances in a dialogue      H   recurrent hidden size
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numeric import DTYPE, sigmoid, uniform_init

PAD = 0
OOV = 1


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingTable:
    weights: np.ndarray
    trainable: bool = True
    pad_index: int = PAD
    oov_index: int = OOV

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=DTYPE)
        self.weights[self.pad_index] = 0.0

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def embed_forward(tokens, table: np.ndarray, pad_index: int = PAD):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1:
        raise ValueError("tokens must be a 1-d index sequence")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= table.shape[0]):
        raise IndexError(f"token index out of range for vocabulary of {table.shape[0]}")
    keep = (tokens != pad_index)[:, None]
    # PAD rows are masked in the forward pass so the PAD row stays inert
    # even if the table entry drifts.
    X = table[tokens] * keep
    return X, (tokens, table.shape, pad_index)


def embed_backward(dX, cache):
    tokens, shape, pad_index = cache
    dtable = np.zeros(shape, dtype=DTYPE)
    np.add.at(dtable, tokens, dX)
    dtable[pad_index] = 0.0
    return dtable


def embed(tokens, table: EmbeddingTable) -> np.ndarray:
    return embed_forward(tokens, table.weights, table.pad_index)[0]


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv_forward(X, W, b):
    """Narrow 1-d convolution with tanh.

    ``X`` is ``(n, e)``, ``W`` is ``(F, d, e)``, ``b`` is ``(F,)``. Returns
    the ``(m, F)`` matrix whose column ``f`` is filter ``f``'s feature map.
    """
    n, e = X.shape
    F, d, e_w = W.shape
    if e_w != e:
        raise ValueError(f"filter width {e_w} does not match embedding dim {e}")
    if n < d:
        raise ValueError(f"utterance of {n} tokens is shorter than filter width {d}")
    m = n - d + 1
    # (m, e, d) -> (m, d, e) -> (m, d*e), row i is x_{i:i+d-1} concatenated
    windows = sliding_window_view(X, d, axis=0).transpose(0, 2, 1).reshape(m, d * e)
    K = np.tanh(windows @ W.reshape(F, d * e).T + b)
    return K, (windows, W, K, n)


def conv_backward(dK, cache):
    windows, W, K, n = cache
    F, d, e = W.shape
    m = K.shape[0]
    dpre = dK * (1.0 - K * K)
    dW = (dpre.T @ windows).reshape(F, d, e)
    db = dpre.sum(axis=0)
    dwin = (dpre @ W.reshape(F, d * e)).reshape(m, d, e)
    dX = np.zeros((n, e), dtype=DTYPE)
    for j in range(d):
        dX[j:j + m] += dwin[:, j, :]
    return dX, dW, db


def convolve(embeds, filters):
    """Apply each ``(W, b)`` filter group in ``filters`` to ``embeds``.

    Returns one ``(m_g, F)`` feature-map matrix per group.
    """
    return [conv_forward(embeds, W, b)[0] for W, b in filters]


# ---------------------------------------------------------------------------
# pooling
# ---------------------------------------------------------------------------

def chunk_bounds(m: int, p: int) -> list[tuple[int, int]]:
    """Half-open 0-based bounds of the ``p`` equal-partition chunks of ``m`` positions.

    Chunk ``j`` spans ``[floor(j*m/p), floor((j+1)*m/p))``; the first chunk is
    ``1..floor(m/p)`` and the last ``floor(m - m/p) + 1..m`` in 1-based terms.
    Requires ``m >= p``.
    """
    if p <= 0:
        raise ValueError(f"chunk count must be positive, got {p}")
    return [(j * m // p, (j + 1) * m // p) for j in range(p)]


def kmax_forward(K, p: int):
    """Dynamic k-max pooling over the rows of an ``(m, F)`` feature-map matrix.

    Output is ``(F, p)``: entry ``[f, j]`` is the max of filter ``f``'s map over
    chunk ``j``. Maps shorter than ``p`` are right-padded with zeros first.
    Gradient goes to the first maximal position of each chunk.
    """
    if p <= 0:
        raise ValueError(f"chunk count must be positive, got {p}")
    K = np.asarray(K, dtype=DTYPE)
    m, F = K.shape
    if m == 0:
        raise ValueError("empty feature map")
    padded = K
    if m < p:
        padded = np.vstack([K, np.zeros((p - m, F), dtype=DTYPE)])
    bounds = chunk_bounds(padded.shape[0], p)
    out = np.empty((F, p), dtype=DTYPE)
    argmax = np.empty((F, p), dtype=np.int64)
    cols = np.arange(F)
    for j, (lo, hi) in enumerate(bounds):
        idx = lo + np.argmax(padded[lo:hi], axis=0)
        argmax[:, j] = idx
        out[:, j] = padded[idx, cols]
    return out, (argmax, m)


def kmax_backward(dP, cache):
    argmax, m = cache
    F, p = argmax.shape
    dK = np.zeros((max(m, p), F), dtype=DTYPE)
    cols = np.broadcast_to(np.arange(F)[:, None], (F, p))
    np.add.at(dK, (argmax, cols), dP)
    return dK[:m]


def dynamic_kmax_pool(feature_map, p: int) -> np.ndarray:
    """Pool a single feature map (1-d) into ``p`` chunk maxima."""
    k = np.asarray(feature_map, dtype=DTYPE)
    if k.ndim != 1:
        raise ValueError("expected a 1-d feature map")
    return kmax_forward(k[:, None], p)[0][0]


def max_over_time(feature_map) -> float:
    k = np.asarray(feature_map, dtype=DTYPE)
    if k.size == 0:
        raise ValueError("empty feature map")
    return float(dynamic_kmax_pool(k, 1)[0])


# ---------------------------------------------------------------------------
# recurrent cells
# ---------------------------------------------------------------------------

GATE_BLOCKS = {"lstm": 4, "gru": 3}


@dataclass
class RecurrentCell:
    """Weights of one recurrent cell.

    Gate blocks are stacked along the first axis of ``W`` (input), ``U``
    (recurrent) and ``b``: ``i, f, g, o`` for LSTM, ``z, r, n`` for GRU.
    """

    kind: str
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.kind not in GATE_BLOCKS:
            raise ValueError(f"unknown cell kind {self.kind!r}")
        G = GATE_BLOCKS[self.kind]
        H = self.U.shape[1]
        if self.U.shape != (G * H, H) or self.W.shape[0] != G * H or self.b.shape != (G * H,):
            raise ValueError(f"inconsistent {self.kind} weight shapes {self.W.shape}, {self.U.shape}, {self.b.shape}")

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]

    @classmethod
    def init(cls, kind, input_size, hidden_size, rng, scale=None):
        G = GATE_BLOCKS[kind]
        scale = 1.0 / np.sqrt(hidden_size) if scale is None else scale
        return cls(
            kind,
            uniform_init((G * hidden_size, input_size), -scale, scale, rng),
            uniform_init((G * hidden_size, hidden_size), -scale, scale, rng),
            uniform_init((G * hidden_size,), -scale, scale, rng),
        )


def lstm_forward(xs, W, U, b, reverse=False):
    """Run an LSTM over the rows of ``xs`` from zero state.

    With ``reverse=True`` the sequence is consumed last-to-first and the
    returned row ``t`` is the state after consuming inputs ``s..t``.
    """
    xs = np.asarray(xs, dtype=DTYPE)
    if reverse:
        hs, cache = lstm_forward(xs[::-1], W, U, b)
        return hs[::-1], ("rev", cache)
    s = xs.shape[0]
    H = U.shape[1]
    XW = xs @ W.T + b
    hs = np.zeros((s + 1, H), dtype=DTYPE)
    cs = np.zeros((s + 1, H), dtype=DTYPE)
    gates = np.empty((s, 4 * H), dtype=DTYPE)
    for t in range(s):
        a = XW[t] + U @ hs[t]
        i = sigmoid(a[:H])
        f = sigmoid(a[H:2 * H])
        g = np.tanh(a[2 * H:3 * H])
        o = sigmoid(a[3 * H:])
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t] = np.concatenate([i, f, g, o])
    return hs[1:], ("fwd", (xs, W, U, hs, cs, gates))


def lstm_backward(dhs, cache):
    direction, inner = cache
    if direction == "rev":
        dxs, dW, dU, db = lstm_backward(dhs[::-1], inner)
        return dxs[::-1], dW, dU, db
    xs, W, U, hs, cs, gates = inner
    s = xs.shape[0]
    H = U.shape[1]
    DA = np.empty((s, 4 * H), dtype=DTYPE)
    dh_next = np.zeros(H, dtype=DTYPE)
    dc_next = np.zeros(H, dtype=DTYPE)
    for t in range(s - 1, -1, -1):
        i, f, g, o = (gates[t, k * H:(k + 1) * H] for k in range(4))
        dh = dhs[t] + dh_next
        tc = np.tanh(cs[t + 1])
        dc = dc_next + dh * o * (1.0 - tc * tc)
        DA[t, :H] = dc * g * i * (1.0 - i)
        DA[t, H:2 * H] = dc * cs[t] * f * (1.0 - f)
        DA[t, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        DA[t, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = U.T @ DA[t]
    dW = DA.T @ xs
    dU = DA.T @ hs[:-1]
    db = DA.sum(axis=0)
    dxs = DA @ W
    return dxs, dW, dU, db


def gru_forward(xs, W, U, b, reverse=False):
    """Run a GRU over the rows of ``xs`` from zero state.

    ``h' = (1 - z) * h + z * tanh(W_n x + U_n (r * h) + b_n)``.
    """
    xs = np.asarray(xs, dtype=DTYPE)
    if reverse:
        hs, cache = gru_forward(xs[::-1], W, U, b)
        return hs[::-1], ("rev", cache)
    s = xs.shape[0]
    H = U.shape[1]
    XW = xs @ W.T + b
    hs = np.zeros((s + 1, H), dtype=DTYPE)
    gates = np.empty((s, 3 * H), dtype=DTYPE)
    rh = np.empty((s, H), dtype=DTYPE)
    for t in range(s):
        h = hs[t]
        a_zr = XW[t, :2 * H] + U[:2 * H] @ h
        z = sigmoid(a_zr[:H])
        r = sigmoid(a_zr[H:])
        rh[t] = r * h
        n = np.tanh(XW[t, 2 * H:] + U[2 * H:] @ rh[t])
        hs[t + 1] = (1.0 - z) * h + z * n
        gates[t] = np.concatenate([z, r, n])
    return hs[1:], ("fwd", (xs, W, U, hs, gates, rh))


def gru_backward(dhs, cache):
    direction, inner = cache
    if direction == "rev":
        dxs, dW, dU, db = gru_backward(dhs[::-1], inner)
        return dxs[::-1], dW, dU, db
    xs, W, U, hs, gates, rh = inner
    s = xs.shape[0]
    H = U.shape[1]
    DA = np.empty((s, 3 * H), dtype=DTYPE)
    dh_next = np.zeros(H, dtype=DTYPE)
    for t in range(s - 1, -1, -1):
        z, r, n = (gates[t, k * H:(k + 1) * H] for k in range(3))
        h = hs[t]
        dh = dhs[t] + dh_next
        da_n = dh * z * (1.0 - n * n)
        drh = U[2 * H:].T @ da_n
        DA[t, :H] = dh * (n - h) * z * (1.0 - z)
        DA[t, H:2 * H] = drh * h * r * (1.0 - r)
        DA[t, 2 * H:] = da_n
        dh_next = dh * (1.0 - z) + drh * r + U[:2 * H].T @ DA[t, :2 * H]
    dW = DA.T @ xs
    dU = np.empty_like(U)
    dU[:2 * H] = DA[:, :2 * H].T @ hs[:-1]
    dU[2 * H:] = DA[:, 2 * H:].T @ rh
    db = DA.sum(axis=0)
    dxs = DA @ W
    return dxs, dW, dU, db


_RUNNERS = {"lstm": (lstm_forward, lstm_backward), "gru": (gru_forward, gru_backward)}


def rnn_forward(xs, cell: RecurrentCell, reverse=False):
    fwd, _ = _RUNNERS[cell.kind]
    if np.shape(xs)[-1] != cell.input_size:
        raise ValueError(f"input size {np.shape(xs)[-1]} does not match cell input {cell.input_size}")
    hs, cache = fwd(xs, cell.W, cell.U, cell.b, reverse=reverse)
    return hs, (cell.kind, cache)


def rnn_backward(dhs, cache):
    kind, inner = cache
    return _RUNNERS[kind][1](dhs, inner)


def cell_step(x, state, cell: RecurrentCell):
    """Advance ``cell`` by one input.

    ``state`` is ``(h, c)`` for LSTM and ``h`` for GRU; returns the same form.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != (cell.input_size,):
        raise ValueError(f"input of shape {x.shape} does not match cell input {cell.input_size}")
    H = cell.hidden_size
    if cell.kind == "lstm":
        h, c = (np.asarray(v, dtype=DTYPE) for v in state)
        if h.shape != (H,) or c.shape != (H,):
            raise ValueError("state does not match hidden size")
        a = cell.W @ x + cell.U @ h + cell.b
        i, f, o = sigmoid(a[:H]), sigmoid(a[H:2 * H]), sigmoid(a[3 * H:])
        g = np.tanh(a[2 * H:3 * H])
        c_next = f * c + i * g
        return o * np.tanh(c_next), c_next
    h = np.asarray(state, dtype=DTYPE)
    if h.shape != (H,):
        raise ValueError("state does not match hidden size")
    a_zr = cell.W[:2 * H] @ x + cell.U[:2 * H] @ h + cell.b[:2 * H]
    z, r = sigmoid(a_zr[:H]), sigmoid(a_zr[H:])
    n = np.tanh(cell.W[2 * H:] @ x + cell.U[2 * H:] @ (r * h) + cell.b[2 * H:])
    return (1.0 - z) * h + z * n


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout_forward(x, rate: float, train: bool, rng: np.random.Generator | None):
    """Inverted dropout. Returns ``(y, mask)``; ``mask`` is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=DTYPE)
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def dropout(x, rate: float, mode: str = "eval", rng=None) -> np.ndarray:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return dropout_forward(x, rate, mode == "train", rng)[0]


# ---------------------------------------------------------------------------
# bidirectional stack
# ---------------------------------------------------------------------------

def birnn_forward(xs, layers, dropout_rate=0.0, train=False, rng=None):
    """Stacked bidirectional RNN.

    ``layers`` is a list of ``(forward_cell, backward_cell)`` pairs. Row ``t``
    of the result is ``[h_fwd_t ++ h_bwd_t]`` of the top layer. Dropout is
    applied to the output of every layer except the last, in training mode.
    """
    xs = np.asarray(xs, dtype=DTYPE)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("bi_rnn needs a nonempty (s, input) sequence")
    caches = []
    out = xs
    for depth, (fcell, bcell) in enumerate(layers):
        hf, cf = rnn_forward(out, fcell)
        hb, cb = rnn_forward(out, bcell, reverse=True)
        out = np.concatenate([hf, hb], axis=1)
        mask = None
        if depth < len(layers) - 1:
            out, mask = dropout_forward(out, dropout_rate, train, rng)
        caches.append((cf, cb, mask, fcell.hidden_size))
    return out, caches


def birnn_backward(dout, caches):
    """Returns ``(dxs, [(grads_fwd, grads_bwd), ...])`` with ``grads = (dW, dU, db)``."""
    grads = [None] * len(caches)
    for depth in range(len(caches) - 1, -1, -1):
        cf, cb, mask, H = caches[depth]
        dout = dropout_backward(dout, mask)
        dxf, *gf = rnn_backward(dout[:, :H], cf)
        dxb, *gb = rnn_backward(dout[:, H:], cb)
        grads[depth] = (tuple(gf), tuple(gb))
        dout = dxf + dxb
    return dout, grads


def bi_rnn(sequence, layers, dropout_rate=0.0, mode="eval", rng=None) -> np.ndarray:
    return birnn_forward(sequence, layers, dropout_rate, mode == "train", rng)[0]


# ---------------------------------------------------------------------------
# highway join and output head
# ---------------------------------------------------------------------------

def highway_join(recurrent_out, conv_out):
    """Skip path: ``[recurrent_out ++ conv_out]`` along the last axis."""
    return np.concatenate([np.asarray(recurrent_out, dtype=DTYPE), np.asarray(conv_out, dtype=DTYPE)], axis=-1)


def highway_split(dz, recurrent_dim: int):
    return dz[..., :recurrent_dim], dz[..., recurrent_dim:]


def dense_sigmoid_forward(x, W, b):
    """``sigmoid(x @ W.T + b)`` for ``x`` of shape ``(..., D)`` and ``W`` of ``(c, D)``."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != W.shape[1]:
        raise ValueError(f"input dim {x.shape[-1]} does not match head input {W.shape[1]}")
    probs = sigmoid(x @ W.T + b)
    return probs, (x, W, probs)


def dense_sigmoid_backward(dprobs, cache):
    x, W, probs = cache
    dlogits = dprobs * probs * (1.0 - probs)
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dlogits.reshape(-1, W.shape[0])
    dW = d2.T @ x2
    db = d2.sum(axis=0)
    dx = (d2 @ W).reshape(x.shape)
    return dx, dW, db


def dense_sigmoid(x, W, b) -> np.ndarray:
    return dense_sigmoid_forward(x, W, b)[0]
