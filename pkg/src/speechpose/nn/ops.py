"""Strided convolution and batchnorm forward/backward kernels.

Convolutions are im2col + one matmul; the column buffer is kept by the
backward closures so the weight gradient is a single matmul too, and
the input gradient is a small per-tap matmul loop feeding a strided
overlap-add (the exact adjoint of the window gather). The transposed
conv is exactly the adjoint of conv1d with the same hyperparameters:
<conv(x), y> = <x, tconv(y)> for a shared weight array, which is how
its gradient and its forward relate.

Cross-correlation semantics throughout (no kernel flip).

Shapes
  conv1d   x (N, Cin, L),  w (Cout, Cin, K)     -> (N, Cout, L')
  tconv1d  x (N, Cin, L),  w (Cin, Cout, K)     -> (N, Cout, (L-1)*s - 2p + K)
  conv2d   x (N, Cin, H, W), w (Cout, Cin, Kh, Kw)
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor


def conv1d_out_len(length, k, stride, pad):
    return (length + 2 * pad - k) // stride + 1


def tconv1d_out_len(length, k, stride, pad):
    return (length - 1) * stride - 2 * pad + k


def _gather1d(xp, k, stride):
    """(N, C, Lp) -> contiguous col (N, T, C, K)."""
    v = sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    return np.ascontiguousarray(v.transpose(0, 2, 1, 3))


def _scatter1d(cols, length, stride):
    """Adjoint of _gather1d: cols (N, T, C, K) -> (N, C, length).
    Accumulates in time-major layout so the K strided adds touch
    contiguous channel runs."""
    n, t, c, k = cols.shape
    out = np.zeros((n, length, c))
    hi = stride * (t - 1) + 1
    for j in range(k):
        out[:, j : j + hi : stride, :] += cols[:, :, :, j]
    return np.ascontiguousarray(out.transpose(0, 2, 1))


def conv1d(x, w, b=None, stride=1, pad=0):
    xd, wd = x.data, w.data
    n, cin, length = xd.shape
    cout, cin_w, k = wd.shape
    if cin != cin_w:
        raise ValueError(f"conv1d channels mismatch: input {cin}, weight {cin_w}")
    if length + 2 * pad < k:
        raise ValueError(f"conv1d input too short: L={length}, pad={pad}, K={k}")
    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad))) if pad else xd
    t_out = conv1d_out_len(length, k, stride, pad)
    col = _gather1d(xp, k, stride).reshape(n * t_out, cin * k)
    w_mat = wd.reshape(cout, cin * k)
    out_mat = col @ w_mat.T
    if b is not None:
        out_mat = out_mat + b.data
    out = out_mat.reshape(n, t_out, cout).transpose(0, 2, 1)

    memo = {}

    def _g_rows(g):
        got = memo.get(id(g))
        if got is None:
            got = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(n * t_out, cout)
            memo[id(g)] = got
        return got

    def grad_x(g):
        gcols = (_g_rows(g) @ w_mat).reshape(n, t_out, cin, k)
        gxp = _scatter1d(gcols, length + 2 * pad, stride)
        return gxp[:, :, pad : pad + length] if pad else gxp

    def grad_w(g):
        return (_g_rows(g).T @ col).reshape(cout, cin, k)

    parents = [x, w]
    fns = [grad_x, grad_w]
    if b is not None:
        parents.append(b)
        fns.append(lambda g: g.sum(axis=(0, 2)))
    return Tensor(out, _parents=tuple(parents), _grad_fns=tuple(fns))


def conv_transpose1d(x, w, b=None, stride=1, pad=0):
    xd, wd = x.data, w.data
    n, cin, length = xd.shape
    cin_w, cout, k = wd.shape
    if cin != cin_w:
        raise ValueError(f"tconv1d channels mismatch: input {cin}, weight {cin_w}")
    full = (length - 1) * stride + k
    l_out = full - 2 * pad
    if l_out < 1:
        raise ValueError(f"tconv1d output length {l_out} < 1")
    x_rows = np.ascontiguousarray(xd.transpose(0, 2, 1)).reshape(n * length, cin)
    w_mat = wd.reshape(cin, cout * k)
    cols = (x_rows @ w_mat).reshape(n, length, cout, k)
    spread = _scatter1d(cols, full, stride)
    out = spread[:, :, pad : full - pad]
    if b is not None:
        out = out + b.data[None, :, None]

    memo = {}

    def _g_cols(g):
        got = memo.get(id(g))
        if got is None:
            gf = np.pad(g, ((0, 0), (0, 0), (pad, pad))) if pad else g
            got = _gather1d(gf, k, stride).reshape(n * length, cout * k)
            memo[id(g)] = got
        return got

    def grad_x(g):
        gx = (_g_cols(g) @ w_mat.T).reshape(n, length, cin)
        return np.ascontiguousarray(gx.transpose(0, 2, 1))

    def grad_w(g):
        return (x_rows.T @ _g_cols(g)).reshape(cin, cout, k)

    parents = [x, w]
    fns = [grad_x, grad_w]
    if b is not None:
        parents.append(b)
        fns.append(lambda g: g.sum(axis=(0, 2)))
    return Tensor(out, _parents=tuple(parents), _grad_fns=tuple(fns))


def conv2d(x, w, b=None, stride=(1, 1), pad=(0, 0)):
    xd, wd = x.data, w.data
    n, cin, h, wid = xd.shape
    cout, cin_w, kh, kw = wd.shape
    sh, sw = stride
    ph, pw = pad
    if cin != cin_w:
        raise ValueError(f"conv2d channels mismatch: input {cin}, weight {cin_w}")
    if h + 2 * ph < kh or wid + 2 * pw < kw:
        raise ValueError("conv2d input smaller than kernel")
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else xd
    h_out = conv1d_out_len(h, kh, sh, ph)
    w_out = conv1d_out_len(wid, kw, sw, pw)
    v = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    col = np.ascontiguousarray(v.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * h_out * w_out, cin * kh * kw
    )
    w_mat = wd.reshape(cout, cin * kh * kw)
    out_mat = col @ w_mat.T
    if b is not None:
        out_mat = out_mat + b.data
    out = out_mat.reshape(n, h_out, w_out, cout).transpose(0, 3, 1, 2)

    memo = {}

    def _g_rows(g):
        got = memo.get(id(g))
        if got is None:
            got = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(
                n * h_out * w_out, cout
            )
            memo[id(g)] = got
        return got

    def grad_x(g):
        g_rows = _g_rows(g)
        gxp = np.zeros((n, h + 2 * ph, wid + 2 * pw, cin))
        hi_h = sh * (h_out - 1) + 1
        hi_w = sw * (w_out - 1) + 1
        w_taps = wd.reshape(cout, cin, kh * kw)
        for i in range(kh):
            for j in range(kw):
                tap = g_rows @ w_taps[:, :, i * kw + j]  # (N*H'*W', Cin)
                gxp[:, i : i + hi_h : sh, j : j + hi_w : sw, :] += tap.reshape(
                    n, h_out, w_out, cin
                )
        gx = gxp[:, ph : ph + h, pw : pw + wid, :] if ph or pw else gxp
        return np.ascontiguousarray(gx.transpose(0, 3, 1, 2))

    def grad_w(g):
        return (_g_rows(g).T @ col).reshape(cout, cin, kh, kw)

    parents = [x, w]
    fns = [grad_x, grad_w]
    if b is not None:
        parents.append(b)
        fns.append(lambda g: g.sum(axis=(0, 2, 3)))
    return Tensor(out, _parents=tuple(parents), _grad_fns=tuple(fns))


def batchnorm_train(x, gamma, beta, eps):
    """Fused batch normalization over every axis except 1, population
    variance. Returns (y, batch_mean, batch_var) with the closed-form
    gradient wired in; the caller owns running-stat bookkeeping."""
    xd = x.data
    axes = (0,) + tuple(range(2, xd.ndim))
    cshape = (1, -1) + (1,) * (xd.ndim - 2)
    mu = xd.mean(axis=axes, keepdims=True)
    xc = xd - mu
    var = np.mean(xc * xc, axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    g_ = gamma.data.reshape(cshape)
    y = xhat * g_ + beta.data.reshape(cshape)

    def grad_x(g):
        dxhat = g * g_
        t1 = dxhat.mean(axis=axes, keepdims=True)
        t2 = (dxhat * xhat).mean(axis=axes, keepdims=True)
        return inv * (dxhat - t1 - xhat * t2)

    def grad_gamma(g):
        return (g * xhat).sum(axis=axes)

    def grad_beta(g):
        return g.sum(axis=axes)

    out = Tensor(y, _parents=(x, gamma, beta),
                 _grad_fns=(grad_x, grad_gamma, grad_beta))
    return out, mu.reshape(-1), var.reshape(-1)


def batchnorm_eval(x, gamma, beta, running_mean, running_var, eps):
    """Affine normalization by fixed running stats."""
    xd = x.data
    cshape = (1, -1) + (1,) * (xd.ndim - 2)
    axes = (0,) + tuple(range(2, xd.ndim))
    inv = 1.0 / np.sqrt(running_var + eps)
    scale = (gamma.data * inv).reshape(cshape)
    mu = running_mean.reshape(cshape)
    y = (xd - mu) * scale + beta.data.reshape(cshape)

    def grad_x(g):
        return g * scale

    def grad_gamma(g):
        return (g * (xd - mu) * inv.reshape(cshape)).sum(axis=axes)

    def grad_beta(g):
        return g.sum(axis=axes)

    return Tensor(y, _parents=(x, gamma, beta),
                  _grad_fns=(grad_x, grad_gamma, grad_beta))
