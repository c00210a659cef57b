"""Inner loops of conv2d and maxpool2d.

Activations use an NHWC layout ([batch, height, width, channel]) so that an
im2col row is a sequence of contiguous ``kernel * channels`` runs, which keeps
the gather/scatter kernels memory-friendly.  Matrix products are delegated to
the BLAS behind ``numpy`` in both paths; what differs is how the column matrix
is built:

* numba backend: compiled im2col / col2im / pooling loops (default),
* numpy backend: shift-and-matmul without an explicit column matrix.

Set ``DAYLIGHT_NET_NO_NUMBA=1`` to force the numpy backend (the same path is
used automatically when numba is not importable).  Kernels are single-threaded
by design so results are bit-reproducible; any multithreading comes from BLAS
and can be capped with ``DAYLIGHT_NET_THREADS`` (see the CLI).
"""

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("DAYLIGHT_NET_NO_NUMBA", "").strip() not in ("", "0")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _np_conv2d_forward(xp, w, stride):
    """Correlate padded input xp [B,Hp,Wp,Ci] with w [Co,Ci,k,k].

    Returns (y [B,Ho,Wo,Co], saved) where saved holds the per-offset input
    slices reused by the backward pass.
    """
    B, Hp, Wp, Ci = xp.shape
    Co, _, k, _ = w.shape
    Ho = (Hp - k) // stride + 1
    Wo = (Wp - k) // stride + 1
    y2 = np.zeros((B * Ho * Wo, Co), dtype=xp.dtype)
    slices = []
    for u in range(k):
        for v in range(k):
            xs = xp[:, u:u + stride * Ho:stride, v:v + stride * Wo:stride, :]
            xs = np.ascontiguousarray(xs).reshape(-1, Ci)
            slices.append(xs)
            y2 += xs @ w[:, :, u, v].T
    return y2.reshape(B, Ho, Wo, Co), slices


def _np_conv2d_backward(saved, xp_shape, w, dy, stride, need_dx):
    B, Hp, Wp, Ci = xp_shape
    Co, _, k, _ = w.shape
    _, Ho, Wo, _ = dy.shape
    dy2 = dy.reshape(-1, Co)
    dw = np.empty_like(w)
    dxp = np.zeros(xp_shape, dtype=dy.dtype) if need_dx else None
    idx = 0
    for u in range(k):
        for v in range(k):
            xs = saved[idx]
            idx += 1
            dw[:, :, u, v] = dy2.T @ xs
            if need_dx:
                contrib = (dy2 @ w[:, :, u, v]).reshape(B, Ho, Wo, Ci)
                dxp[:, u:u + stride * Ho:stride, v:v + stride * Wo:stride, :] += contrib
    return dxp, dw


def _np_maxpool_forward(x, win):
    B, H, W, C = x.shape
    Ho, Wo = H // win, W // win
    xr = x.reshape(B, Ho, win, Wo, win, C).transpose(0, 1, 3, 2, 4, 5)
    xr = xr.reshape(B, Ho, Wo, win * win, C)
    # argmax returns the first occurrence, i.e. the smallest row-major
    # window offset u*win+v, which is the tie rule the backward pass needs
    arg = xr.argmax(axis=3)
    y = np.take_along_axis(xr, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return y, arg


def _np_maxpool_backward(arg, dy, win, H, W):
    B, Ho, Wo, C = dy.shape
    buf = np.zeros((B, Ho, Wo, win * win, C), dtype=dy.dtype)
    np.put_along_axis(buf, arg[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
    buf = buf.reshape(B, Ho, Wo, win, win, C).transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(buf.reshape(B, H, W, C))


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _im2col(xf, k, C, stride, Ho, Wo, cols):
        # xf: [B, Hp, Wp*C] contiguous view of the padded input
        B = xf.shape[0]
        kc = k * C
        for n in range(B):
            for i in range(Ho):
                ii = i * stride
                r0 = (n * Ho + i) * Wo
                for u in range(k):
                    row = xf[n, ii + u]
                    off = u * kc
                    for j in range(Wo):
                        r = r0 + j
                        q = j * stride * C
                        for c in range(kc):
                            cols[r, off + c] = row[q + c]

    @njit(cache=True)
    def _col2im(dcols, dxf, k, C, stride, Ho, Wo):
        B = dxf.shape[0]
        kc = k * C
        for n in range(B):
            for i in range(Ho):
                ii = i * stride
                r0 = (n * Ho + i) * Wo
                for u in range(k):
                    drow = dxf[n, ii + u]
                    off = u * kc
                    for j in range(Wo):
                        r = r0 + j
                        q = j * stride * C
                        for c in range(kc):
                            drow[q + c] += dcols[r, off + c]

    @njit(cache=True)
    def _pool_max(x, win, y, arg):
        B, H, W, C = x.shape
        Ho = H // win
        Wo = W // win
        for n in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        best = x[n, i * win, j * win, c]
                        pos = 0
                        for u in range(win):
                            for v in range(win):
                                val = x[n, i * win + u, j * win + v, c]
                                if val > best:
                                    best = val
                                    pos = u * win + v
                        y[n, i, j, c] = best
                        arg[n, i, j, c] = pos

    @njit(cache=True)
    def _pool_scatter(arg, dy, win, dx):
        B, Ho, Wo, C = dy.shape
        for n in range(B):
            for i in range(Ho):
                for j in range(Wo):
                    for c in range(C):
                        p = arg[n, i, j, c]
                        dx[n, i * win + p // win, j * win + p % win, c] += dy[n, i, j, c]

    def _nb_conv2d_forward(xp, w, stride):
        B, Hp, Wp, Ci = xp.shape
        Co, _, k, _ = w.shape
        Ho = (Hp - k) // stride + 1
        Wo = (Wp - k) // stride + 1
        cols = np.empty((B * Ho * Wo, k * k * Ci), dtype=xp.dtype)
        _im2col(xp.reshape(B, Hp, Wp * Ci), k, Ci, stride, Ho, Wo, cols)
        w2 = np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(k * k * Ci, Co))
        y2 = cols @ w2
        return y2.reshape(B, Ho, Wo, Co), cols

    def _nb_conv2d_backward(saved, xp_shape, w, dy, stride, need_dx):
        B, Hp, Wp, Ci = xp_shape
        Co, _, k, _ = w.shape
        _, Ho, Wo, _ = dy.shape
        cols = saved
        dy2 = dy.reshape(-1, Co)
        dw2 = cols.T @ dy2  # [k*k*Ci, Co]
        dw = np.ascontiguousarray(dw2.reshape(k, k, Ci, Co).transpose(3, 2, 0, 1))
        dxp = None
        if need_dx:
            w2 = np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(k * k * Ci, Co))
            dcols = dy2 @ w2.T
            dxp = np.zeros(xp_shape, dtype=dy.dtype)
            _col2im(dcols, dxp.reshape(B, Hp, Wp * Ci), k, Ci, stride, Ho, Wo)
        return dxp, dw

    def _nb_maxpool_forward(x, win):
        B, H, W, C = x.shape
        Ho, Wo = H // win, W // win
        y = np.empty((B, Ho, Wo, C), dtype=x.dtype)
        arg = np.empty((B, Ho, Wo, C), dtype=np.int64)
        _pool_max(x, win, y, arg)
        return y, arg

    def _nb_maxpool_backward(arg, dy, win, H, W):
        B = dy.shape[0]
        C = dy.shape[3]
        dx = np.zeros((B, H, W, C), dtype=dy.dtype)
        _pool_scatter(arg, dy, win, dx)
        return dx


BACKEND = "numba" if (HAS_NUMBA and not _FORCE_NUMPY) else "numpy"

if BACKEND == "numba":
    conv2d_forward = _nb_conv2d_forward
    conv2d_backward = _nb_conv2d_backward
    maxpool_forward = _nb_maxpool_forward
    maxpool_backward = _nb_maxpool_backward
else:
    conv2d_forward = _np_conv2d_forward
    conv2d_backward = _np_conv2d_backward
    maxpool_forward = _np_maxpool_forward
    maxpool_backward = _np_maxpool_backward
