import math

import numpy as np
import pytest

from cda_crnn.numeric import GradReport, ParameterStore, grad_check, make_rng, relative_error, sigmoid, uniform_init


def test_uniform_init_range_and_shape():
    x = uniform_init([3], -0.25, 0.25, make_rng(0))
    assert x.shape == (3,)
    assert x.dtype == np.float64
    assert np.all(x >= -0.25) and np.all(x < 0.25)


def test_uniform_init_degenerate_range():
    x = uniform_init([2, 2], 0.0, 1e-300, make_rng(0))
    assert np.all(np.abs(x) < 1e-299)


def test_uniform_init_is_deterministic():
    a = uniform_init([4, 5], -1, 1, make_rng(42))
    b = uniform_init([4, 5], -1, 1, make_rng(42))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, uniform_init([4, 5], -1, 1, make_rng(43)))


@pytest.mark.parametrize("shape, lo, hi", [([], 0, 1), ([2], 1, 1), ([2], 1, 0)])
def test_uniform_init_rejects_bad_arguments(shape, lo, hi):
    with pytest.raises(ValueError):
        uniform_init(shape, lo, hi, make_rng(0))


def test_rng_stream_is_frozen():
    # PCG64(0) is specified by numpy independent of platform
    assert make_rng(0).random(3).tolist() == [0.6369616873214543, 0.2697867137638703, 0.04097352393619469]


def _scalar_fn(f, df):
    def fn(p):
        t = p["theta"]
        return float(f(t).sum()), {"theta": df(t)}
    return fn


def test_grad_check_tanh_at_zero():
    ps = ParameterStore(theta=np.zeros(1))
    rep = grad_check(_scalar_fn(np.tanh, lambda t: 1 - np.tanh(t) ** 2), ps)
    assert rep.passed and rep.max_error < 1e-8
    assert ps["theta"][0] == 0.0  # restored after perturbation


def test_grad_check_sigmoid_at_zero():
    assert sigmoid(np.zeros(1))[0] * (1 - sigmoid(np.zeros(1))[0]) == 0.25
    rep = grad_check(_scalar_fn(sigmoid, lambda t: sigmoid(t) * (1 - sigmoid(t))), ParameterStore(theta=np.zeros(1)))
    assert rep.passed


def test_grad_check_flags_wrong_gradient():
    rep = grad_check(_scalar_fn(np.tanh, lambda t: 0.9 * np.ones_like(t)), ParameterStore(theta=np.zeros(2)))
    assert not rep.passed
    assert rep.worst[0] == "theta"
    assert str(rep).startswith("FAIL")


def test_grad_check_rejects_non_finite_loss():
    def fn(p):
        return math.inf, {"theta": np.zeros(1)}
    with pytest.raises(FloatingPointError):
        grad_check(fn, ParameterStore(theta=np.zeros(1)))


def test_grad_report_pass_flag_follows_tolerance():
    assert GradReport({"a": 1e-5}, 1e-5, ("a", (0,)), 1e-4, 1).passed
    assert not GradReport({"a": 2e-4}, 2e-4, ("a", (0,)), 1e-4, 1).passed


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1e-9, 0.0) == pytest.approx(1e-3)
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)


def test_sigmoid_is_stable_at_extremes():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(s))
    assert s.tolist() == [0.0, 0.5, 1.0]


def test_parameter_store_flat_round_trip():
    rng = make_rng(3)
    ps = ParameterStore(a=rng.normal(size=(2, 3)), b=rng.normal(size=4))
    flat = ps.flatten()
    assert flat.shape == (ps.num_scalars(),) == (10,)
    other = ps.zeros_like()
    other.load_flat(flat)
    assert all(np.array_equal(ps[k], other[k]) for k in ps)
    assert [n for n, _ in ps.shapes()] == ["a", "b"]
    with pytest.raises(ValueError):
        other.load_flat(flat[:-1])
