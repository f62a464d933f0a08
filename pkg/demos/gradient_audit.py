"""Finite-difference audit of every hand-written backward pass.

Each layer and each of the five model variants is checked by central
differences (eps 1e-4) in float64. A relative error near 1e-6 or below is
what a correct gradient looks like; a wrong one typically lands above 1e-2.
"""

import time

import numpy as np

from cda_crnn import gradcheck
from cda_crnn.models import backward, forward, init_params
from cda_crnn.numeric import grad_check, make_rng
from cda_crnn.training import bce_loss, bce_loss_grad

started = time.perf_counter()
for seed in (0, 1, 2):
    print(f"seed {seed}")
    checks = {**gradcheck.layer_checks(seed), **gradcheck.model_checks(seed)}
    for name, report in checks.items():
        print(f"  {name:<28} {report.max_error:.2e}  {'ok' if report.passed else 'FAILED'}")
print(f"{time.perf_counter() - started:.0f}s")

# A deliberately broken gradient for contrast: scale the analytic head gradient.
cfg = gradcheck.tiny_config("crnn_v3")
rng = make_rng(0)
params = init_params(cfg, 8, rng)
dialogue = gradcheck.synthetic_dialogue(rng)
Y = np.zeros((3, 12))
Y[:, 0] = 1


def broken(p):
    probs, cache = forward(dialogue, cfg, p)
    grads = backward(bce_loss_grad(probs, Y), cache, cfg, p)
    grads["head.weight"] = grads["head.weight"] * 1.01
    return bce_loss(probs, Y), grads


print("\nhead gradient off by 1%:", grad_check(broken, params))
