"""Differentiable kernels used by the model.

Image-like tensors are laid out N x C x H x W; a 3-d C x H x W input is
treated as a batch of one and the batch axis is dropped again on output.
Convolutions are cross-correlations (no kernel flip).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, concat, sigmoid_np

BN_EPS = 1e-5
BCE_CLAMP = 1e-7


def _as4d(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected a C x H x W or N x C x H x W tensor, got shape {x.shape}")
    return x, False


def _restore(out: Tensor, squeezed: bool) -> Tensor:
    return out.reshape(out.shape[1:]) if squeezed else out


def _out_size(n: int, k: int, stride: int, pad: int) -> int:
    size = (n + 2 * pad - k) // stride + 1
    if size < 1:
        raise ShapeError(f"kernel {k} (stride {stride}, pad {pad}) does not fit input of size {n}")
    return size


def _pad(a: np.ndarray, pad: int, value: float = 0.0) -> np.ndarray:
    if pad == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=value)


def _window(a: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    return a[:, :, kh : kh + stride * (ho - 1) + 1 : stride, kw : kw + stride * (wo - 1) + 1 : stride]


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Standard 2-d convolution with ``weight`` of shape N x C x K x K."""
    x, squeezed = _as4d(as_tensor(x))
    weight = as_tensor(weight)
    n, c, h, w = x.shape
    if weight.ndim != 4 or weight.shape[1] != c or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"filters {weight.shape} incompatible with input channels {c}")
    o, _, k, _ = weight.shape
    ho, wo = _out_size(h, k, stride, padding), _out_size(w, k, stride, padding)
    xp = _pad(x.data, padding)
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    wd = weight.data
    out = np.tensordot(cols, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def back(g):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        gcols = np.tensordot(g, wd, axes=([1], [0]))  # n, ho, wo, c, k, k
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                _window(gxp, i, j, stride, ho, wo)[...] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, padding : padding + h, padding : padding + w]
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return _restore(Tensor._make(out, parents, back), squeezed)


def pointwise_conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """1 x 1 convolution; ``weight`` is an N x C matrix."""
    x, squeezed = _as4d(as_tensor(x))
    weight = as_tensor(weight)
    n, c, h, w = x.shape
    if weight.ndim != 2 or weight.shape[1] != c:
        raise ShapeError(f"pointwise weights {weight.shape} incompatible with input channels {c}")
    xf = x.data.reshape(n, c, h * w)
    wd = weight.data
    out = wd @ xf
    if bias is not None:
        out = out + bias.data[None, :, None]
    out = out.reshape(n, wd.shape[0], h, w)

    def back(g):
        gf = g.reshape(n, wd.shape[0], h * w)
        gw = np.einsum("nop,ncp->oc", gf, xf)
        gx = (wd.T @ gf).reshape(n, c, h, w)
        gb = gf.sum(axis=(0, 2)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return _restore(Tensor._make(out, parents, back), squeezed)


def depthwise_conv2d(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Per-channel K x K convolution; ``weight`` has shape C x K x K."""
    x, squeezed = _as4d(as_tensor(x))
    weight = as_tensor(weight)
    n, c, h, w = x.shape
    if weight.ndim != 3 or weight.shape[0] != c:
        raise ShapeError(f"depthwise weights {weight.shape} incompatible with input channels {c}")
    k = weight.shape[1]
    ho, wo = _out_size(h, k, stride, padding), _out_size(w, k, stride, padding)
    xp = _pad(x.data, padding)
    wd = weight.data
    out = np.zeros((n, c, ho, wo), dtype=np.result_type(xp, wd))
    for i in range(k):
        for j in range(k):
            out += wd[None, :, i, j, None, None] * _window(xp, i, j, stride, ho, wo)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def back(g):
        gw = np.empty_like(wd)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gw[:, i, j] = np.einsum("nchw,nchw->c", g, _window(xp, i, j, stride, ho, wo))
                _window(gxp, i, j, stride, ho, wo)[...] += g * wd[None, :, i, j, None, None]
        gx = gxp[:, :, padding : padding + h, padding : padding + w]
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return _restore(Tensor._make(out, parents, back), squeezed)


def bsconv2d(
    x: Tensor,
    pointwise: Tensor,
    blueprints: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Blueprint separable convolution.

    Filter ``n`` acting on input channel ``c`` is ``pointwise[n, c] *
    blueprints[n]``.  Executed as a bias-free 1 x 1 convolution (C -> N)
    followed by a depthwise K x K convolution that carries the bias.
    """
    return depthwise_conv2d(pointwise_conv2d(x, pointwise), blueprints, bias, stride, padding)


def materialize_bsconv(pointwise: np.ndarray, blueprints: np.ndarray) -> np.ndarray:
    """Full N x C x K x K filter bank equivalent to a BSConv layer."""
    return pointwise[:, :, None, None] * blueprints[:, None, :, :]


# ---------------------------------------------------------------------------
# normalisation, activations, pooling, resampling
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    return as_tensor(x).relu()


def sigmoid(x: Tensor) -> Tensor:
    return as_tensor(x).sigmoid()


def tanh(x: Tensor) -> Tensor:
    return as_tensor(x).tanh()


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel batch normalisation over (N, H, W).

    In training mode the running statistics are updated in place
    (unbiased variance, exponential moving average with ``momentum``).
    """
    x, squeezed = _as4d(as_tensor(x))
    xd = x.data
    g = gamma.data[None, :, None, None]
    if training:
        m = xd.shape[0] * xd.shape[2] * xd.shape[3]
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / max(m - 1, 1))
    else:
        mean, var = running_mean, running_var
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean[None, :, None, None]) * invstd[None, :, None, None]
    out = g * xhat + beta.data[None, :, None, None]

    def back(gout):
        ggamma = np.einsum("nchw,nchw->c", gout, xhat)
        gbeta = gout.sum(axis=(0, 2, 3))
        dxhat = gout * g
        if training:
            mean_d = dxhat.mean(axis=(0, 2, 3), keepdims=True)
            mean_dx = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
            gx = (dxhat - mean_d - xhat * mean_dx) * invstd[None, :, None, None]
        else:
            gx = dxhat * invstd[None, :, None, None]
        return gx, ggamma, gbeta

    return _restore(Tensor._make(out, (x, gamma, beta), back), squeezed)


def max_pool2d(x: Tensor, kernel: int = 2, stride: int | None = None, padding: int = 0) -> Tensor:
    """Max pooling (floor mode, -inf padding); ties route gradient to the first maximum."""
    stride = kernel if stride is None else stride
    x, squeezed = _as4d(as_tensor(x))
    n, c, h, w = x.shape
    ho, wo = _out_size(h, kernel, stride, padding), _out_size(w, kernel, stride, padding)
    xp = _pad(x.data, padding, -np.inf)
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    win = win.reshape(n, c, ho, wo, kernel * kernel)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for idx in range(kernel * kernel):
            i, j = divmod(idx, kernel)
            _window(gxp, i, j, stride, ho, wo)[...] += np.where(arg == idx, g, 0.0)
        return (gxp[:, :, padding : padding + h, padding : padding + w],)

    return _restore(Tensor._make(out, (x,), back), squeezed)


def _adaptive_bins(n: int, out: int) -> list[tuple[int, int]]:
    return [((i * n) // out, -((-(i + 1) * n) // out)) for i in range(out)]


def _adaptive_max_1d(x: Tensor, axis: int, out: int) -> Tensor:
    xd = x.data
    bins = _adaptive_bins(xd.shape[axis], out)
    moved = np.moveaxis(xd, axis, -1)
    res = np.empty(moved.shape[:-1] + (out,), dtype=xd.dtype)
    args = np.empty(moved.shape[:-1] + (out,), dtype=np.intp)
    for i, (a, b) in enumerate(bins):
        block = moved[..., a:b]
        arg = block.argmax(axis=-1)
        args[..., i] = a + arg
        res[..., i] = np.take_along_axis(block, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gm = np.zeros(moved.shape, dtype=g.dtype)
        gmoved = np.moveaxis(g, axis, -1)
        for i in range(out):
            np.put_along_axis(
                gm, args[..., i : i + 1],
                np.take_along_axis(gm, args[..., i : i + 1], axis=-1) + gmoved[..., i : i + 1], axis=-1,
            )
        return (np.moveaxis(gm, -1, axis),)

    return Tensor._make(np.ascontiguousarray(np.moveaxis(res, -1, axis)), (x,), back)


def adaptive_max_pool2d(x: Tensor, size: tuple[int, int]) -> Tensor:
    """Adaptive max pooling to ``size`` = (H', W') with overlapping integer bins.

    Max over a rectangle is separable, so rows and columns are pooled in
    two 1-d passes.
    """
    x, squeezed = _as4d(as_tensor(x))
    n, c, h, w = x.shape
    oh, ow = size
    if oh > h or ow > w or oh < 1 or ow < 1:
        raise ShapeError(f"cannot adaptively pool {h}x{w} to {oh}x{ow}")
    if oh != h:
        x = _adaptive_max_1d(x, 2, oh)
    if ow != w:
        x = _adaptive_max_1d(x, 3, ow)
    return _restore(x, squeezed)


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Interpolation matrix (n_out x n_in), half-pixel centres, edge clamping."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = max((i + 0.5) * scale - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0
        m[i, i0] += 1.0 - frac
        m[i, i1] += frac
    return m


def bilinear_upsample(x: Tensor, size: tuple[int, int]) -> Tensor:
    """Bilinear resize of the two trailing axes (align_corners=False)."""
    x, squeezed = _as4d(as_tensor(x))
    oh, ow = size
    if oh < 1 or ow < 1:
        raise ValueError(f"invalid target size {size}")
    _, _, h, w = x.shape
    ah = bilinear_matrix(h, oh).astype(x.dtype)
    aw = bilinear_matrix(w, ow).astype(x.dtype)
    out = ah @ x.data @ aw.T
    return _restore(Tensor._make(out, (x,), lambda g: (ah.T @ g @ aw,)), squeezed)


# ---------------------------------------------------------------------------
# dense and recurrent layers
# ---------------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the trailing axis of ``x``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear weights {weight.shape} incompatible with input {x.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias {bias.shape} does not match {weight.shape[0]} outputs")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data

    def back(g):
        g2 = g.reshape(-1, wd.shape[0])
        x2 = xd.reshape(-1, wd.shape[1])
        gb = g2.sum(axis=0) if bias is not None else None
        return g @ wd, g2.T @ x2, gb

    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return Tensor._make(out, parents, back)


def lstm(
    seq: Tensor,
    w_ih: Tensor,
    w_hh: Tensor,
    bias: Tensor,
    h0: Tensor | None = None,
    c0: Tensor | None = None,
    reverse: bool = False,
) -> Tensor:
    """Single-layer LSTM over ``seq`` (B x T x I, or T x I).

    Gate rows of the 4H weight blocks are ordered input, forget, cell,
    output.  With ``reverse`` the sequence is consumed back to front and
    outputs are returned in the original time order.
    """
    seq = as_tensor(seq)
    squeezed = seq.ndim == 2
    if squeezed:
        seq = seq.reshape((1,) + seq.shape)
    if seq.ndim != 3:
        raise ShapeError(f"lstm expects B x T x I input, got {seq.shape}")
    b, t_len, n_in = seq.shape
    four_h = w_ih.shape[0]
    hid = four_h // 4
    if w_ih.shape != (four_h, n_in) or w_hh.shape != (four_h, hid) or bias.shape != (four_h,) or four_h % 4:
        raise ShapeError(
            f"lstm parameter shapes {w_ih.shape}, {w_hh.shape}, {bias.shape} inconsistent with input size {n_in}"
        )
    dtype = np.result_type(seq.data, w_ih.data)

    def _init(s: Tensor | None) -> np.ndarray:
        if s is None:
            return np.zeros((b, hid), dtype=dtype)
        if s.shape[-1] != hid:
            raise ShapeError(f"initial state of size {s.shape[-1]} does not match hidden size {hid}")
        return np.broadcast_to(s.data, (b, hid)).astype(dtype)

    h_prev, c_prev = _init(h0), _init(c0)
    xs = seq.data[:, ::-1] if reverse else seq.data
    wih, whh = w_ih.data, w_hh.data
    xw = xs @ wih.T + bias.data  # b, t, 4h
    steps = []
    hs = np.empty((b, t_len, hid), dtype=dtype)
    h, c = h_prev, c_prev
    for t in range(t_len):
        gates = xw[:, t] + h @ whh.T
        i = sigmoid_np(gates[:, :hid])
        f = sigmoid_np(gates[:, hid : 2 * hid])
        gg = np.tanh(gates[:, 2 * hid : 3 * hid])
        o = sigmoid_np(gates[:, 3 * hid :])
        c_new = f * c + i * gg
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((i, f, gg, o, c, tc, h))
        h, c = h_new, c_new
        hs[:, t] = h
    out = hs[:, ::-1] if reverse else hs

    def back(gout):
        gh_seq = gout[:, ::-1] if reverse else gout
        gxw = np.empty_like(xw)
        gwhh = np.zeros_like(whh)
        dh_next = np.zeros((b, hid), dtype=dtype)
        dc_next = np.zeros((b, hid), dtype=dtype)
        for t in range(t_len - 1, -1, -1):
            i, f, gg, o, c_old, tc, h_old = steps[t]
            dh = gh_seq[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * gg
            dg = dc * i
            df = dc * c_old
            dc_next = dc * f
            dgates = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - gg * gg), do * o * (1.0 - o)], axis=1
            )
            gxw[:, t] = dgates
            gwhh += dgates.T @ h_old
            dh_next = dgates @ whh
        gx = gxw @ wih
        if reverse:
            gx = gx[:, ::-1]
        gwih = gxw.reshape(-1, four_h).T @ xs.reshape(-1, n_in)
        gb = gxw.sum(axis=(0, 1))
        grads = [gx, gwih, gwhh, gb]
        if h0 is not None:
            grads.append(dh_next.sum(axis=0) if h0.ndim == 1 else dh_next)
        if c0 is not None:
            grads.append(dc_next.sum(axis=0) if c0.ndim == 1 else dc_next)
        return grads

    parents = [seq, w_ih, w_hh, bias]
    if h0 is not None:
        parents.append(h0)
    if c0 is not None:
        parents.append(c0)
    res = Tensor._make(np.ascontiguousarray(out), parents, back)
    return res.reshape(res.shape[1:]) if squeezed else res


def bilstm(seq: Tensor, fwd: tuple, bwd: tuple, hidden_size: int | None = None) -> Tensor:
    """Bidirectional LSTM; ``fwd``/``bwd`` are (w_ih, w_hh, bias) triples.

    Output at step t is ``[forward_t ; backward_t]`` (size 2H).
    """
    hf, hb = fwd[1].shape[1], bwd[1].shape[1]
    if hf != hb:
        raise ShapeError(f"forward hidden size {hf} differs from backward hidden size {hb}")
    if hidden_size is not None and hidden_size != hf + hb:
        raise ShapeError(f"declared output size {hidden_size} != 2H = {hf + hb}")
    out_f = lstm(seq, *fwd)
    out_b = lstm(seq, *bwd, reverse=True)
    return concat([out_f, out_b], axis=-1)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def binary_cross_entropy(p, y) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise BCE and its derivative with respect to ``p``.

    ``p`` is clamped to [1e-7, 1 - 1e-7] first.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_CLAMP, 1.0 - BCE_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p))
    return loss, grad


def bce_loss(p: Tensor, y) -> Tensor:
    """Mean BCE over a batch of probabilities (gradient passes the clamp)."""
    p = as_tensor(p)
    y = np.broadcast_to(np.asarray(y, dtype=p.dtype), p.shape)
    loss, grad = binary_cross_entropy(p.data, y)
    n = p.data.size
    return Tensor._make(np.asarray(loss.mean(), dtype=p.dtype), (p,), lambda g: ((g * grad / n).astype(p.dtype),))


def bce_with_logits(z: Tensor, y) -> Tensor:
    """Mean BCE of ``sigmoid(z)`` computed stably from logits."""
    z = as_tensor(z)
    y = np.broadcast_to(np.asarray(y, dtype=z.dtype), z.shape)
    zd = z.data
    loss = np.maximum(zd, 0) - zd * y + np.log1p(np.exp(-np.abs(zd)))
    n = zd.size
    p = sigmoid_np(zd)
    return Tensor._make(np.asarray(loss.mean(), dtype=z.dtype), (z,), lambda g: (g * (p - y) / n,))
