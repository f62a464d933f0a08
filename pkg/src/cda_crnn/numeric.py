"""Numeric substrate: seeded RNG, initialization, parameter storage and gradient checking.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Every
differentiable operation in the package is written as a forward/backward
pair; :func:`grad_check` compares the analytic backward pass against
central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

DTYPE = np.float64


def make_rng(seed: int) -> np.random.Generator:
    """Return a PCG64-backed generator.

    PCG64 output and ``Generator.random`` are specified bit-for-bit by numpy,
    so a given seed yields the same stream on every platform.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


def uniform_init(shape, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    shape = (shape,) if isinstance(shape, int) else tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ValueError(f"shape must be nonempty with positive extents, got {shape}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    out = lo + (hi - lo) * rng.random(shape)
    # lo + (hi - lo) * u can round up to hi for u close to 1
    return np.minimum(out, np.nextafter(hi, lo))


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=DTYPE)
    ex = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))


class ParameterStore(dict):
    """Ordered mapping ``name -> float64 array``.

    Insertion order is the canonical parameter order; checkpoints serialize
    parameters in exactly this order.
    """

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, tuple(arr.shape)) for name, arr in self.items()]

    def num_scalars(self) -> int:
        return int(sum(arr.size for arr in self.values()))

    def copy(self) -> "ParameterStore":
        return ParameterStore((k, v.copy()) for k, v in self.items())

    def zeros_like(self) -> "ParameterStore":
        return ParameterStore((k, np.zeros_like(v)) for k, v in self.items())

    def flatten(self) -> np.ndarray:
        if not self:
            return np.zeros(0, dtype=DTYPE)
        return np.concatenate([v.ravel() for v in self.values()])

    def load_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=DTYPE)
        if flat.size != self.num_scalars():
            raise ValueError(f"expected {self.num_scalars()} values, got {flat.size}")
        offset = 0
        for name, arr in self.items():
            arr[...] = flat[offset:offset + arr.size].reshape(arr.shape)
            offset += arr.size


@dataclass
class GradReport:
    """Outcome of a finite-difference gradient check."""

    errors: dict[str, float]
    max_error: float
    worst: tuple[str, tuple[int, ...]] | None
    tol: float
    checked: int = 0
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.max_error <= self.tol)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        where = f" at {self.worst[0]}{list(self.worst[1])}" if self.worst else ""
        return f"{status} max rel err {self.max_error:.3e}{where} over {self.checked} scalars (tol {self.tol:g})"


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps gradients that are zero up to roundoff from producing
    spurious huge ratios.
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    function: Callable[[ParameterStore], tuple[float, dict[str, np.ndarray]]],
    params: ParameterStore,
    eps: float = 1e-4,
    tol: float = 1e-4,
    names: Iterable[str] | None = None,
    floor: float = 1e-6,
) -> GradReport:
    """Compare analytic gradients with central differences.

    ``function(params)`` must return ``(loss, grads)`` where ``grads`` maps
    parameter names to arrays shaped like the parameters. Every scalar of
    every checked parameter is perturbed by ``±eps`` in place and restored
    afterwards.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    loss, grads = function(params)
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite function value {loss}")
    grads = {k: np.array(v, dtype=DTYPE, copy=True) for k, v in grads.items()}

    errors: dict[str, float] = {}
    worst = None
    max_err = 0.0
    checked = 0
    for name in (list(names) if names is not None else list(params)):
        arr = params[name]
        analytic = grads.get(name)
        if analytic is None:
            analytic = np.zeros_like(arr)
        name_err = 0.0
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            plus = function(params)[0]
            arr[idx] = orig - eps
            minus = function(params)[0]
            arr[idx] = orig
            if not (math.isfinite(plus) and math.isfinite(minus)):
                raise FloatingPointError(f"non-finite function value perturbing {name}{list(idx)}")
            numeric = (plus - minus) / (2.0 * eps)
            err = relative_error(float(analytic[idx]), numeric, floor)
            checked += 1
            if err > name_err:
                name_err = err
            if worst is None or err > max_err:
                max_err = err
                worst = (name, idx)
        errors[name] = name_err
    return GradReport(errors=errors, max_error=max_err, worst=worst, tol=tol, checked=checked)
