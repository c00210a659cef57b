import numpy as np
import pytest

from daylight_net.errors import DimensionError
from daylight_net.nn import Adam, Tensor, adam_step, init_adam


def test_zero_gradient_leaves_params_unchanged():
    p = np.array([1.5, -2.0])
    state = init_adam([p], lr=0.01)
    adam_step([p], [np.zeros(2)], state)
    assert np.array_equal(p, [1.5, -2.0])
    assert state.t == 1


def test_first_step_with_unit_gradient_moves_by_lr():
    # m_hat = 1, v_hat = 1 after the first step, so the update is lr/(1+eps)
    p = np.array([1.0])
    state = init_adam([p], lr=0.001)
    adam_step([p], [np.array([1.0])], state)
    assert p[0] == pytest.approx(1.0 - 0.001, rel=1e-6)


def test_constant_gradient_keeps_unit_corrected_moments():
    # with g == 1 every step, m_hat == v_hat == 1 exactly, so after n steps
    # the parameter has moved by n*lr/(1+eps)
    p = np.array([0.0])
    state = init_adam([p], lr=0.001)
    for _ in range(10):
        adam_step([p], [np.array([1.0])], state)
    assert state.t == 10
    assert p[0] == pytest.approx(-0.01, rel=1e-6)


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(99)
        p = rng.normal(size=16)
        state = init_adam([p], lr=0.005)
        for _ in range(50):
            g = np.sin(p) + 0.1 * p
            adam_step([p], [g], state)
        return p

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_shape_mismatch_raises():
    p = np.zeros(3)
    state = init_adam([p])
    with pytest.raises(DimensionError):
        adam_step([p], [np.zeros(4)], state)


def test_wrapper_reads_tensor_grads():
    t = Tensor(np.array([2.0]), requires_grad=True)
    opt = Adam([t], lr=0.1)
    opt.zero_grad()
    t.grad[:] = 1.0
    opt.step()
    assert t.data[0] == pytest.approx(1.9, rel=1e-6)
    # missing grad is treated as zero (momentum may still move the value)
    t.grad = None
    opt.step()
    assert opt.state.t == 2


def test_float32_state_stays_float32():
    p = np.zeros(4, dtype=np.float32)
    state = init_adam([p])
    adam_step([p], [np.ones(4, dtype=np.float32)], state)
    assert p.dtype == np.float32
    assert state.m[0].dtype == np.float32
