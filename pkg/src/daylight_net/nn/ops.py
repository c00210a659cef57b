"""Differentiable primitives: convolution, pooling, dense, activations, loss.

Spatial operations accept either a single sample shaped ``[C, H, W]`` or a
batch in the internal ``[B, H, W, C]`` layout (see :mod:`.kernels`); the
returned tensor keeps the caller's convention.  Convolution uses the
cross-correlation convention (no kernel flip).
"""

import numpy as np

from ..errors import DimensionError, ParameterError
from . import kernels
from .tensor import Tensor, record


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _sum_to_shape(g, shape):
    """Reduce a broadcast gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def conv2d(x, w, b, padding=0, stride=1):
    """2-D cross-correlation with zero padding.

    x: [C_in, H, W] or [B, H, W, C_in]; w: [C_out, C_in, k, k]; b: [C_out].
    Output spatial size is floor((H + 2*padding - k) / stride) + 1.
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ParameterError(f"padding must be >= 0, got {padding}")
    single = x.data.ndim == 3
    xd = x.data.transpose(1, 2, 0)[None] if single else x.data
    if xd.ndim != 4:
        raise DimensionError(f"conv2d input must be 3-D or 4-D, got {x.data.ndim}-D")
    B, H, W, ci = xd.shape
    co, ciw, k, k2 = w.data.shape
    if k != k2:
        raise DimensionError(f"kernels must be square, got {k}x{k2}")
    if ciw != ci:
        raise DimensionError(f"input has {ci} channels but kernels expect {ciw}")
    if b.data.shape != (co,):
        raise DimensionError(f"bias must have shape ({co},), got {b.data.shape}")
    if k > H + 2 * padding or k > W + 2 * padding:
        raise DimensionError(f"kernel size {k} exceeds padded input {H + 2 * padding}x{W + 2 * padding}")

    xp = np.pad(xd, ((0, 0), (padding, padding), (padding, padding), (0, 0))) if padding else xd
    y4, saved = kernels.conv2d_forward(xp, w.data, stride)
    y4 = y4 + b.data
    out = Tensor(y4[0].transpose(2, 0, 1) if single else y4)

    def bwd():
        dy4 = out.grad.transpose(1, 2, 0)[None] if single else out.grad
        dy4 = np.ascontiguousarray(dy4)
        dxp, dw = kernels.conv2d_backward(saved, xp.shape, w.data, dy4, stride, x.requires_grad)
        if b.requires_grad:
            b.accumulate_grad(dy4.sum(axis=(0, 1, 2)))
        if w.requires_grad:
            w.accumulate_grad(dw)
        if x.requires_grad:
            dxd = dxp[:, padding:padding + H, padding:padding + W, :] if padding else dxp
            x.accumulate_grad(dxd[0].transpose(2, 0, 1) if single else dxd)

    return record(out, (x, w, b), bwd)


def maxpool2d(x, window):
    """Non-overlapping max pooling; H and W must be divisible by ``window``.

    Backward routes each cell's gradient to the first maximum of its window
    in row-major order.
    """
    x = _as_tensor(x)
    if window < 1:
        raise ParameterError(f"window must be >= 1, got {window}")
    single = x.data.ndim == 3
    xd = x.data.transpose(1, 2, 0)[None] if single else x.data
    B, H, W, C = xd.shape
    if H % window or W % window:
        raise DimensionError(f"spatial size {H}x{W} not divisible by window {window}")
    y4, arg = kernels.maxpool_forward(np.ascontiguousarray(xd), window)
    out = Tensor(y4[0].transpose(2, 0, 1) if single else y4)

    def bwd():
        dy4 = out.grad.transpose(1, 2, 0)[None] if single else out.grad
        dx4 = kernels.maxpool_backward(arg, np.ascontiguousarray(dy4), window, H, W)
        x.accumulate_grad(dx4[0].transpose(2, 0, 1) if single else dx4)

    return record(out, (x,), bwd)


def dense(x, w, b):
    """Affine map w @ x + b; x: [n] or [B, n], w: [m, n], b: [m]."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    m, n = w.data.shape
    if x.data.shape[-1] != n:
        raise DimensionError(f"dense expects {n} input features, got {x.data.shape[-1]}")
    if b.data.shape != (m,):
        raise DimensionError(f"bias must have shape ({m},), got {b.data.shape}")
    single = x.data.ndim == 1
    xd = x.data[None] if single else x.data
    y = xd @ w.data.T + b.data
    out = Tensor(y[0] if single else y)

    def bwd():
        dy = out.grad[None] if single else out.grad
        if b.requires_grad:
            b.accumulate_grad(dy.sum(axis=0))
        if w.requires_grad:
            w.accumulate_grad(dy.T @ xd)
        if x.requires_grad:
            dx = dy @ w.data
            x.accumulate_grad(dx[0] if single else dx)

    return record(out, (x, w, b), bwd)


def relu(x):
    """Elementwise max(0, x); the subgradient at 0 is taken as 0."""
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0))

    def bwd():
        x.accumulate_grad(out.grad * (x.data > 0))

    return record(out, (x,), bwd)


def dropout(x, rate, training, rng):
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    Identity in eval mode (and for rate 0), so inference needs no rescaling.
    """
    x = _as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    keep *= 1.0 / (1.0 - rate)
    out = Tensor(x.data * keep)

    def bwd():
        x.accumulate_grad(out.grad * keep)

    return record(out, (x,), bwd)


def global_avg_pool(x):
    """Mean over the spatial plane: [C, H, W] -> [C] or [B, H, W, C] -> [B, C]."""
    x = _as_tensor(x)
    single = x.data.ndim == 3
    if single:
        C, H, W = x.data.shape
    else:
        B, H, W, C = x.data.shape
    out = Tensor(x.data.mean(axis=(1, 2)))
    scale = 1.0 / (H * W)

    def bwd():
        if single:
            g = np.broadcast_to(out.grad[:, None, None] * scale, x.data.shape)
        else:
            g = np.broadcast_to(out.grad[:, None, None, :] * scale, x.data.shape)
        x.accumulate_grad(g)

    return record(out, (x,), bwd)


def mse_loss(pred, target):
    """Mean squared error over all entries of equally shaped arrays."""
    pred = _as_tensor(pred)
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target)
    if pred.data.shape != tgt.shape:
        raise DimensionError(f"mse_loss shapes differ: {pred.data.shape} vs {tgt.shape}")
    diff = pred.data - tgt
    out = Tensor(np.asarray((diff * diff).mean(), dtype=pred.data.dtype))

    def bwd():
        pred.accumulate_grad(out.grad * (2.0 / diff.size) * diff)

    return record(out, (pred,), bwd)


def concat(parts, axis=-1):
    """Concatenate tensors along ``axis``."""
    parts = [_as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def bwd():
        for p, g in zip(parts, np.split(out.grad, bounds, axis=axis)):
            if p.requires_grad:
                p.accumulate_grad(g)

    return record(out, tuple(parts), bwd)


def sum_all(x):
    """Sum of all entries, as a scalar tensor."""
    x = _as_tensor(x)
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))

    def bwd():
        x.accumulate_grad(np.broadcast_to(out.grad, x.data.shape))

    return record(out, (x,), bwd)


def mul(x, c):
    """Elementwise product with a constant (scalar or broadcastable array)."""
    x = _as_tensor(x)
    c = np.asarray(c)
    out = Tensor(x.data * c)

    def bwd():
        x.accumulate_grad(_sum_to_shape(out.grad * c, x.data.shape))

    return record(out, (x,), bwd)
