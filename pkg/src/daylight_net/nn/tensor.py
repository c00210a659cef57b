"""Reverse-mode automatic differentiation on numpy arrays.

Every operation in :mod:`daylight_net.nn.ops` returns a :class:`Tensor` whose
backward closure knows how to push its output adjoint to its parents.  Calling
:func:`backward` on a scalar loss traces the graph into a :class:`GradTape`
(reverse topological order, each node once) and replays the closures.
"""

import contextlib

import numpy as np

from ..errors import InternalError, NumericError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable recording of backward closures inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def check_finite(self, context=""):
        if not np.all(np.isfinite(self.data)):
            where = f" in {context}" if context else ""
            raise NumericError(f"non-finite values{where}")
        return self

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def record(out, parents, bwd):
    """Attach a backward closure to ``out`` if recording is active."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


class GradTape:
    """Ordered record of the operations reachable from one output tensor.

    ``nodes`` is a topological order (inputs before outputs); replaying in
    reverse visits every node exactly once.
    """

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root):
        nodes = []
        state = {}  # id -> 0 visiting, 1 done
        stack = [(root, iter(root._parents))]
        state[id(root)] = 0
        while stack:
            node, it = stack[-1]
            advanced = False
            for parent in it:
                if parent._bwd is None and not parent._parents:
                    continue
                s = state.get(id(parent))
                if s == 0:
                    raise InternalError("cycle detected in autodiff graph")
                if s is None:
                    state[id(parent)] = 0
                    stack.append((parent, iter(parent._parents)))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                state[id(node)] = 1
                nodes.append(node)
        return cls(nodes)

    def replay(self):
        for node in reversed(self.nodes):
            if node._bwd is not None:
                node._bwd()


def backward(loss):
    """Populate ``.grad`` on every tensor reachable from a scalar loss."""
    if loss.data.size != 1:
        raise InternalError("backward expects a scalar loss")
    loss.grad = np.ones_like(loss.data)
    GradTape.trace(loss).replay()
