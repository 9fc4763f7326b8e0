import numpy as np
import pytest

from rivercast import autodiff as ad
from rivercast.optim import OptimizerState, adam_step, zero_grads


def make_params(values):
    return {name: ad.parameter(np.array(v), name) for name, v in values.items()}


def test_zero_gradient_leaves_fresh_params_unchanged():
    params = make_params({"w": [1.0, -2.0, 3.0]})
    state = OptimizerState.for_params(params)
    params["w"].grad = np.zeros(3)
    before = params["w"].data.copy()
    adam_step(params, state)
    assert np.array_equal(params["w"].data, before)
    assert state.step == 1


def test_single_step_matches_closed_form():
    params = make_params({"w": [0.5, -1.5]})
    state = OptimizerState.for_params(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8)
    g = np.array([0.3, -0.7])
    params["w"].grad = g.copy()
    before = params["w"].data.copy()
    adam_step(params, state)
    m = (1 - 0.9) * g
    v = (1 - 0.999) * g * g
    m_hat = m / (1 - 0.9)
    v_hat = v / (1 - 0.999)
    expected = before - 1e-3 * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert np.allclose(params["w"].data, expected, atol=1e-12, rtol=0)


def test_constant_gradient_moves_against_its_sign():
    params = make_params({"w": [0.0, 0.0]})
    state = OptimizerState.for_params(params, lr=1e-2)
    g = np.array([0.4, -0.9])
    for _ in range(50):
        params["w"].grad = g.copy()
        adam_step(params, state)
    assert params["w"].data[0] < 0.0
    assert params["w"].data[1] > 0.0


def test_missing_gradient_treated_as_zero():
    params = make_params({"a": [1.0], "b": [2.0]})
    state = OptimizerState.for_params(params)
    params["a"].grad = np.array([1.0])
    adam_step(params, state)
    assert params["b"].data[0] == 2.0
    assert params["a"].data[0] != 1.0


def test_state_shape_mismatch_rejected():
    params = make_params({"w": [1.0, 2.0]})
    state = OptimizerState.for_params(params)
    params["w"].data = np.zeros(3)
    with pytest.raises(ValueError):
        adam_step(params, state)


def test_updates_deterministic():
    def run():
        params = make_params({"w": [0.1, 0.2, 0.3]})
        state = OptimizerState.for_params(params, lr=5e-3)
        rng = np.random.default_rng(0)
        for _ in range(20):
            params["w"].grad = rng.standard_normal(3)
            adam_step(params, state)
        return params["w"].data.copy()

    assert np.array_equal(run(), run())


def test_zero_grads_clears():
    params = make_params({"w": [1.0]})
    params["w"].grad = np.array([5.0])
    zero_grads(params)
    assert params["w"].grad is None
