"""Adam optimizer with bias correction."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment estimates plus the step counter."""

    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 0.001


def init_adam(params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    arrays = [p.data if isinstance(p, Tensor) else np.asarray(p) for p in params]
    return AdamState(
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
        t=0,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        lr=lr,
    )


def adam_step(params, grads, state):
    """One Adam update, in place on ``params``; returns the mutated state.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) with the standard
    1/(1-beta^t) bias corrections.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and state must have equal lengths")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionError(f"grad shape {g.shape} does not match param {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


class Adam:
    """Convenience wrapper binding an AdamState to a list of Tensors."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = init_adam(self.params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
