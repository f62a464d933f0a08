"""Finite-difference checks for every layer and every model variant.

Each check builds small random inputs, wraps them (inputs included) in a
:class:`ParameterStore`, reduces the layer output to a scalar with fixed
random weights, and runs :func:`grad_check` on the result.
"""

from __future__ import annotations

import numpy as np

from . import layers as L
from .models import VARIANTS, ModelConfig, backward, forward, init_params
from .numeric import GradReport, ParameterStore, grad_check, make_rng
from .training import bce_loss, bce_loss_grad


def _projection(rng, shape):
    return rng.normal(size=shape)


def check_embed(seed, eps=1e-4, tol=1e-4):
    rng = make_rng(seed)
    tokens = np.array([2, 0, 3, 2, 1])
    ps = ParameterStore(table=rng.normal(size=(5, 3)))
    R = _projection(rng, (5, 3))

    def fn(p):
        X, cache = L.embed_forward(tokens, p["table"])
        return float(np.sum(R * X)), {"table": L.embed_backward(R, cache)}
    return grad_check(fn, ps, eps, tol)


def check_conv(seed, eps=1e-4, tol=1e-4):
    rng = make_rng(seed)
    ps = ParameterStore(X=rng.normal(size=(6, 3)), W=rng.normal(size=(4, 3, 3)) * 0.5, b=rng.normal(size=4))
    R = _projection(rng, (4, 4))

    def fn(p):
        K, cache = L.conv_forward(p["X"], p["W"], p["b"])
        dX, dW, db = L.conv_backward(R, cache)
        return float(np.sum(R * K)), {"X": dX, "W": dW, "b": db}
    return grad_check(fn, ps, eps, tol)


def check_kmax(seed, eps=1e-4, tol=1e-4):
    rng = make_rng(seed)
    # spacing > 2*eps keeps every argmax stable under perturbation
    K = rng.permutation(21)[:14].reshape(7, 2) * 0.01
    ps = ParameterStore(K=K.astype(np.float64))
    reports = []
    for p_chunks in (1, 2, 3):
        R = _projection(rng, (2, p_chunks))

        def fn(p, p_chunks=p_chunks, R=R):
            P, cache = L.kmax_forward(p["K"], p_chunks)
            return float(np.sum(R * P)), {"K": L.kmax_backward(R, cache)}
        reports.append(grad_check(fn, ps, eps, tol))
    return _merge(reports)


def check_cell(kind, seed, eps=1e-4, tol=1e-4):
    """Full sequence (both directions), which exercises every per-step gradient."""
    rng = make_rng(seed)
    cell = L.RecurrentCell.init(kind, 3, 4, rng, scale=0.8)
    ps = ParameterStore(xs=rng.normal(size=(5, 3)), W=cell.W, U=cell.U, b=cell.b)
    R = _projection(rng, (5, 4))
    reports = []
    for reverse in (False, True):
        def fn(p, reverse=reverse):
            c = L.RecurrentCell(kind, p["W"], p["U"], p["b"])
            hs, cache = L.rnn_forward(p["xs"], c, reverse=reverse)
            dxs, dW, dU, db = L.rnn_backward(R, cache)
            return float(np.sum(R * hs)), {"xs": dxs, "W": dW, "U": dU, "b": db}
        reports.append(grad_check(fn, ps, eps, tol))
    return _merge(reports)


def check_birnn(kind, seed, eps=1e-4, tol=1e-4):
    rng = make_rng(seed)
    H = 3
    ps = ParameterStore(xs=rng.normal(size=(4, 5)))
    n_in = 5
    for layer in range(2):
        for direction in ("fwd", "bwd"):
            c = L.RecurrentCell.init(kind, n_in, H, rng, scale=0.8)
            ps[f"{layer}.{direction}.W"], ps[f"{layer}.{direction}.U"], ps[f"{layer}.{direction}.b"] = c.W, c.U, c.b
        n_in = 2 * H
    R = _projection(rng, (4, 2 * H))

    def fn(p):
        stack = [tuple(L.RecurrentCell(kind, p[f"{k}.{d}.W"], p[f"{k}.{d}.U"], p[f"{k}.{d}.b"])
                       for d in ("fwd", "bwd")) for k in range(2)]
        # same dropout mask on every evaluation
        out, caches = L.birnn_forward(p["xs"], stack, 0.3, True, make_rng(seed + 99))
        dxs, grads = L.birnn_backward(R, caches)
        g = {"xs": dxs}
        for k, pair in enumerate(grads):
            for d, (dW, dU, db) in zip(("fwd", "bwd"), pair):
                g[f"{k}.{d}.W"], g[f"{k}.{d}.U"], g[f"{k}.{d}.b"] = dW, dU, db
        return float(np.sum(R * out)), g
    return grad_check(fn, ps, eps, tol)


def check_head(seed, eps=1e-4, tol=1e-4):
    """Highway join feeding the dense sigmoid head, under BCE."""
    rng = make_rng(seed)
    ps = ParameterStore(h=rng.normal(size=(3, 4)), v=rng.normal(size=(3, 2)),
                        W=rng.normal(size=(5, 6)) * 0.5, b=rng.normal(size=5))
    Y = (rng.random((3, 5)) < 0.4).astype(np.float64)

    def fn(p):
        z = L.highway_join(p["h"], p["v"])
        probs, cache = L.dense_sigmoid_forward(z, p["W"], p["b"])
        dz, dW, db = L.dense_sigmoid_backward(bce_loss_grad(probs, Y), cache)
        dh, dv = L.highway_split(dz, 4)
        return bce_loss(probs, Y), {"h": dh, "v": dv, "W": dW, "b": db}
    return grad_check(fn, ps, eps, tol)


def check_dropout(seed, eps=1e-4, tol=1e-4):
    rng = make_rng(seed)
    ps = ParameterStore(x=rng.normal(size=(3, 4)))
    R = _projection(rng, (3, 4))

    def fn(p):
        y, mask = L.dropout_forward(p["x"], 0.5, True, make_rng(seed + 7))
        return float(np.sum(R * np.tanh(y))), {"x": L.dropout_backward(R * (1 - np.tanh(y) ** 2), mask)}
    return grad_check(fn, ps, eps, tol)


def layer_checks(seed: int, eps=1e-4, tol=1e-4) -> dict[str, GradReport]:
    return {
        "embed": check_embed(seed, eps, tol),
        "convolve": check_conv(seed, eps, tol),
        "dynamic_kmax_pool": check_kmax(seed, eps, tol),
        "lstm": check_cell("lstm", seed, eps, tol),
        "gru": check_cell("gru", seed, eps, tol),
        "bi_rnn[lstm]": check_birnn("lstm", seed, eps, tol),
        "bi_rnn[gru]": check_birnn("gru", seed, eps, tol),
        "highway+dense_sigmoid+bce": check_head(seed, eps, tol),
        "dropout": check_dropout(seed, eps, tol),
    }


def tiny_config(variant: str, cell: str = "lstm", seed: int = 0) -> ModelConfig:
    return ModelConfig(variant=variant, cell=cell, widths=(1, 2), filters=2, hidden=3, layers=2,
                       embed_dim=3, kim_width=2, pool_k=2, seed=seed)


def synthetic_dialogue(rng, vocab_size=8, lengths=(4, 2, 5)):
    dialogue = [rng.integers(0, vocab_size, size=n) for n in lengths]
    dialogue[min(1, len(dialogue) - 1)][0] = L.PAD
    return dialogue


def model_check(variant: str, cell: str, seed: int, eps=1e-4, tol=1e-4) -> GradReport:
    """End-to-end BCE gradient of one variant on a 3-utterance random dialogue."""
    cfg = tiny_config(variant, cell, seed)
    rng = make_rng(seed)
    vocab_size = 8
    params = init_params(cfg, vocab_size, rng)
    dialogue = synthetic_dialogue(rng, vocab_size)
    Y = (rng.random((len(dialogue), cfg.num_labels)) < 0.3).astype(np.float64)

    def fn(p):
        probs, cache = forward(dialogue, cfg, p, "eval")
        return bce_loss(probs, Y), backward(bce_loss_grad(probs, Y), cache, cfg, p)
    return grad_check(fn, params, eps, tol)


def model_checks(seed: int, eps=1e-4, tol=1e-4) -> dict[str, GradReport]:
    out = {}
    for variant in VARIANTS:
        cells = ("lstm", "gru") if variant.startswith("crnn") else ("lstm",)
        for cell in cells:
            key = f"{variant}[{cell}]" if variant.startswith("crnn") else variant
            out[key] = model_check(variant, cell, seed, eps, tol)
    return out


def _merge(reports):
    worst = max(reports, key=lambda r: r.max_error)
    errors = {}
    for r in reports:
        for k, v in r.errors.items():
            errors[k] = max(errors.get(k, 0.0), v)
    return GradReport(errors, worst.max_error, worst.worst, worst.tol, sum(r.checked for r in reports))
