import numpy as np
import pytest

from daylight_net import nn
from daylight_net.errors import InternalError, NumericError
from daylight_net.nn import GradTape, Tensor


def test_tape_visits_each_node_once():
    x = Tensor(np.ones(3), requires_grad=True)
    a = nn.mul(x, 2.0)
    b = nn.concat([a, a])  # diamond: a feeds the graph twice
    loss = nn.sum_all(b)
    tape = GradTape.trace(loss)
    ids = [id(n) for n in tape.nodes]
    assert len(ids) == len(set(ids))
    nn.backward(loss)
    assert np.array_equal(x.grad, np.full(3, 4.0))


def test_cycle_detection():
    x = Tensor(np.ones(2), requires_grad=True)
    y = nn.mul(x, 1.0)
    y._parents = (y,)  # corrupt the graph on purpose
    with pytest.raises(InternalError):
        GradTape.trace(y)


def test_check_finite():
    Tensor(np.ones(3)).check_finite("ok")
    with pytest.raises(NumericError, match="layer3"):
        Tensor(np.array([1.0, np.nan])).check_finite("layer3")
    with pytest.raises(NumericError):
        Tensor(np.array([np.inf])).check_finite()


def test_shape_invariant():
    t = Tensor(np.zeros((2, 3)))
    assert t.shape == (2, 3)
    assert t.data.size == 6


def test_grad_toggle_restored_after_exception():
    assert nn.grad_enabled()
    try:
        with nn.no_grad():
            assert not nn.grad_enabled()
            raise RuntimeError
    except RuntimeError:
        pass
    assert nn.grad_enabled()
