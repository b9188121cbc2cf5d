"""Forward/backward primitives on ``(batch, time, channels)`` arrays."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def expand_grouped(w):
    """Grouped weights (G, Cin, K, Cout) -> block-diagonal (G*Cin, K, G*Cout).

    Input channel ``g*Cin + c`` only reaches output channels of group ``g``;
    ``G = n_features`` gives per-feature filtering, ``G = 1`` a full
    convolution.
    """
    g, cin, k, cout = w.shape
    if g == 1:
        return w[0]
    full = np.zeros((g * cin, k, g * cout), dtype=w.dtype)
    for i in range(g):
        full[i * cin:(i + 1) * cin, :, i * cout:(i + 1) * cout] = w[i]
    return full


def collapse_grouped(dfull, shape):
    """Gradient of the block-diagonal weight back to grouped layout."""
    g, cin, k, cout = shape
    if g == 1:
        return dfull[None]
    return np.stack([dfull[i * cin:(i + 1) * cin, :, i * cout:(i + 1) * cout]
                     for i in range(g)])


def _im2col(x, k):
    n, t, c = x.shape
    return sliding_window_view(x, k, axis=1).reshape(n * (t - k + 1), c * k)


def conv1d_forward(x, w, b):
    """Valid 1D cross-correlation along time.

    x: (N, T, C), w: (C, K, Cout), b: (Cout,) -> y: (N, T-K+1, Cout)

    Narrow inputs (C <= Cout) go through an im2col GEMM.  Wide inputs use a
    single GEMM producing every tap's contribution ``z[n, s, j] = x[n, s] @
    w[:, j]``, summed at the tap shifts; that avoids a large patch matrix.
    """
    n, t, c = x.shape
    cin, k, cout = w.shape
    if c != cin:
        raise ValueError(f"conv expects {cin} input channels, got {c}")
    if t < k:
        raise ValueError(f"sequence of length {t} shorter than kernel {k}")
    tp = t - k + 1
    if c <= cout:
        cols = _im2col(x, k)
        y = (cols @ w.reshape(c * k, cout)).reshape(n, tp, cout) + b
        return y, ("im2col", x, cols)
    z = (x.reshape(n * t, c) @ w.reshape(c, k * cout)).reshape(n, t, k, cout)
    y = z[:, :tp, 0].copy()
    for j in range(1, k):
        y += z[:, j:j + tp, j]
    y += b
    return y, ("shift", x, None)


def conv1d_backward(dy, w, cache, need_dx=True):
    """Returns ``(dx, dw, db)``; ``dx`` is None when ``need_dx`` is False."""
    mode, x, cols = cache
    n, t, c = x.shape
    cin, k, cout = w.shape
    tp = t - k + 1
    db = dy.sum(axis=(0, 1))
    if mode == "im2col":
        dw = (cols.T @ dy.reshape(n * tp, cout)).reshape(cin, k, cout)
        if not need_dx:
            return None, dw, db
        # full correlation of dy with the time-flipped kernel
        pad = np.zeros((n, t + k - 1, cout), dtype=dy.dtype)
        pad[:, k - 1:t] = dy
        wt = w[:, ::-1, :].transpose(2, 1, 0).reshape(cout * k, cin)
        return (_im2col(pad, k) @ wt).reshape(n, t, cin), dw, db
    dz = np.zeros((n, t, k, cout), dtype=dy.dtype)
    for j in range(k):
        dz[:, j:j + tp, j] = dy
    dz = dz.reshape(n * t, k * cout)
    dw = (x.reshape(n * t, c).T @ dz).reshape(cin, k, cout)
    if not need_dx:
        return None, dw, db
    return (dz @ w.reshape(c, k * cout).T).reshape(n, t, c), dw, db


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(dy, x, w):
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def activation_forward(name, z):
    if name == "relu":
        return np.maximum(z, 0)
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {name!r}")


def activation_backward(name, dy, z, a):
    if name == "relu":
        return dy * (z > 0)
    if name == "tanh":
        return dy * (1 - a * a)
    raise ValueError(f"unknown activation {name!r}")


def pool_forward(mode, x, last=None):
    """Temporal pooling of ``(N, T, C)`` down to ``(N, C)``.

    ``last`` restricts the pool to the final ``last`` time steps.
    """
    seg = x if last is None else x[:, -last:]
    if mode == "max":
        arg = seg.argmax(axis=1)
        out = np.take_along_axis(seg, arg[:, None, :], axis=1)[:, 0]
        return out, (mode, x.shape, seg.shape[1], arg)
    if mode == "mean":
        return seg.mean(axis=1), (mode, x.shape, seg.shape[1], None)
    raise ValueError(f"unknown pooling {mode!r}")


def pool_backward(dy, cache):
    mode, shape, span, arg = cache
    dx = np.zeros(shape, dtype=dy.dtype)
    off = shape[1] - span
    if mode == "max":
        n, c = dy.shape
        np.put_along_axis(dx, (arg + off)[:, None, :], dy[:, None, :], axis=1)
    else:
        dx[:, off:] = dy[:, None, :] / span
    return dx


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
