"""Differentiable tensor operations.

Every op computes its forward result eagerly with numpy and, when a Tape is
active, records a closure that routes the output gradient to its inputs.
Convolution and pooling use SAME padding with ceil output sizing: along each
spatial axis `out = ceil(in / stride)`, with the needed padding split
evenly (extra row/column on the bottom/right).

Performance notes, relevant because training runs on CPU:
  - conv im2col buffers and their backward counterparts come from a
    thread-local scratch pool so pages stay warm across batches;
  - im2col patches are rebuilt during backward instead of retained, keeping
    peak memory near the dataset size;
  - `input_grad=False` skips the input-gradient path for first layers.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ConfigurationError, UsageError
from .tensor import Parameter, Tensor, active_tape

_TLS = threading.local()


def _scratch(key: str, shape, dtype) -> np.ndarray:
    pools = getattr(_TLS, "pools", None)
    if pools is None:
        pools = _TLS.pools = {}
    need = 1
    for s in shape:
        need *= s
    buf = pools.get((key, np.dtype(dtype)))
    if buf is None or buf.size < need:
        buf = np.empty(need, dtype=dtype)
        pools[(key, np.dtype(dtype))] = buf
    return buf[:need].reshape(shape)


def leaf(param: Parameter) -> Tensor:
    """Parameter as a graph leaf: watched if a tape is active."""
    tape = active_tape()
    if tape is not None:
        return tape.watch(param)
    t = Tensor.__new__(Tensor)
    t.data = param.value
    t.grad = None
    return t


def _record(out: Tensor, fn) -> Tensor:
    tape = active_tape()
    if tape is not None:
        tape.record(out, fn)
    return out


def _wrap(data: np.ndarray) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    return t


# ---------------------------------------------------------------------------
# geometry helpers


def same_geometry(H, W, kh, kw, sh, sw):
    """SAME-padding geometry: output extents and top/left pad."""
    if sh < 1 or sw < 1:
        raise ConfigurationError(f"strides must be >= 1, got {(sh, sw)}")
    if kh < 1 or kw < 1:
        raise ConfigurationError(f"window must be >= 1, got {(kh, kw)}")
    OH = -(-H // sh)
    OW = -(-W // sw)
    ph = max((OH - 1) * sh + kh - H, 0)
    pw = max((OW - 1) * sw + kw - W, 0)
    return OH, OW, ph // 2, pw // 2


def _tap_ranges(dh, pt, sh, H, OH):
    """Output rows [o0, o1) for which input row o*sh + dh - pt is in bounds."""
    o0 = max(0, -(-(pt - dh) // sh))
    o1 = min(OH, (H - 1 - dh + pt) // sh + 1)
    return o0, max(o1, o0)


_SMALL_FILL = 1 << 21  # below this many elements, padded gather wins


def _fill_patches(dst6, x, kh, kw, sh, sw, pt, pl, fill=0.0):
    """Gather im2col patches from unpadded x into dst6 [N,OH,OW,kh,kw,C]."""
    N, H, W, C = x.shape
    OH, OW = dst6.shape[1], dst6.shape[2]
    if dst6.size < _SMALL_FILL:
        # Small inputs: one strided copy from a padded buffer beats the
        # per-tap slice loop on interpreter overhead.
        pb = max((OH - 1) * sh + kh - H - pt, 0)
        pr = max((OW - 1) * sw + kw - W - pl, 0)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if pt + pb + pl + pr else x
        s = xp.strides
        view = np.lib.stride_tricks.as_strided(
            xp, (N, OH, OW, kh, kw, C), (s[0], s[1] * sh, s[2] * sw, s[1], s[2], s[3])
        )
        np.copyto(dst6, view)
        return
    for dh in range(kh):
        oh0, oh1 = _tap_ranges(dh, pt, sh, H, OH)
        for dw in range(kw):
            ow0, ow1 = _tap_ranges(dw, pl, sw, W, OW)
            dst = dst6[:, :, :, dh, dw, :]
            if oh0 > 0 or oh1 < OH or ow0 > 0 or ow1 < OW:
                dst[:, :oh0] = fill
                dst[:, oh1:] = fill
                dst[:, oh0:oh1, :ow0] = fill
                dst[:, oh0:oh1, ow1:] = fill
            nh, nw = oh1 - oh0, ow1 - ow0
            if nh > 0 and nw > 0:
                ih0 = oh0 * sh + dh - pt
                iw0 = ow0 * sw + dw - pl
                dst[:, oh0:oh1, ow0:ow1] = x[
                    :, ih0 : ih0 + nh * sh : sh, iw0 : iw0 + nw * sw : sw, :
                ]


def _scatter_patches(dx, src6, kh, kw, sh, sw, pt, pl):
    """Transpose of _fill_patches: accumulate patch grads back into dx."""
    N, H, W, C = dx.shape
    OH, OW = src6.shape[1], src6.shape[2]
    for dh in range(kh):
        oh0, oh1 = _tap_ranges(dh, pt, sh, H, OH)
        for dw in range(kw):
            ow0, ow1 = _tap_ranges(dw, pl, sw, W, OW)
            nh, nw = oh1 - oh0, ow1 - ow0
            if nh > 0 and nw > 0:
                ih0 = oh0 * sh + dh - pt
                iw0 = ow0 * sw + dw - pl
                dx[:, ih0 : ih0 + nh * sh : sh, iw0 : iw0 + nw * sw : sw, :] += src6[
                    :, oh0:oh1, ow0:ow1, dh, dw, :
                ]


# ---------------------------------------------------------------------------
# convolution / pooling


def conv2d(x: Tensor, kernel: Tensor, bias, stride=(1, 1), *, input_grad=True,
           work: str | None = None, dx_work: str | None = None,
           fuse_relu: bool = False) -> Tensor:
    """Cross-correlation with SAME zero padding and ceil output sizing.

    x: [H,W,Cin] or [N,H,W,Cin]; kernel: [kh,kw,Cin,Cout]; bias: [Cout] or
    None for bias-free paths (recurrent convolutions).

    `work` names a private scratch buffer for the im2col patches; when given,
    the patches built in forward are retained for the backward pass (one
    training step must complete before the same layer runs again, which the
    single-writer training loop guarantees). Without it the patches go to a
    shared buffer and are rebuilt during backward.

    fuse_relu applies max(0, .) to the output in place and masks the output
    gradient in place during backward; only valid when this op's output
    gradient is exclusively owned (true inside the model's branch stacks).
    """
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4:
        raise ConfigurationError(f"conv2d input must be rank 3 or 4, got {x.shape}")
    N, H, W, C = xd.shape
    kh, kw, Cin, Cout = kernel.data.shape
    if Cin != C:
        raise ConfigurationError(f"kernel expects {Cin} input channels, input has {C}")
    if bias is not None and bias.data.shape != (Cout,):
        raise ConfigurationError(f"bias shape {bias.data.shape} != ({Cout},)")
    sh, sw = stride
    OH, OW, pt, pl = same_geometry(H, W, kh, kw, sh, sw)

    dt = xd.dtype
    cols = _scratch(f"cols:{work}" if work else "conv.cols.fwd", (N, OH, OW, kh, kw, C), dt)
    _fill_patches(cols, xd, kh, kw, sh, sw, pt, pl)
    cols2 = cols.reshape(N * OH * OW, kh * kw * C)
    k2 = kernel.data.reshape(kh * kw * C, Cout)
    y2 = np.empty((N * OH * OW, Cout), dt)
    np.matmul(cols2, k2, out=y2)
    if bias is not None:
        y2 += bias.data
    if fuse_relu:
        np.maximum(y2, 0, out=y2)
    out = _wrap(y2.reshape(N, OH, OW, Cout) if not single else y2.reshape(OH, OW, Cout))

    def bwd(dy):
        dy2 = dy.reshape(N * OH * OW, Cout)
        if fuse_relu:
            dy2[y2 <= 0] = 0
        if work:
            bcols2 = cols2
        else:
            bcols = _scratch("conv.cols.bwd", (N, OH, OW, kh, kw, C), dt)
            _fill_patches(bcols, xd, kh, kw, sh, sw, pt, pl)
            bcols2 = bcols.reshape(N * OH * OW, kh * kw * C)
        kernel.add_grad(np.matmul(bcols2.T, dy2).reshape(kernel.data.shape))
        if bias is not None:
            bias.add_grad(dy2.sum(axis=0))
        if input_grad:
            dcols = _scratch("conv.dcols", (N, OH, OW, kh, kw, C), dt)
            np.matmul(dy2, k2.T, out=dcols.reshape(N * OH * OW, kh * kw * C))
            key = dx_work or work
            if key:
                # One buffer per layer: consumed by the producing op's own
                # backward before the next step reuses it.
                dx = _scratch(f"dx:{key}", xd.shape, dt)
                dx.fill(0)
            else:
                dx = np.empty_like(xd)
                dx.fill(0)
            _scatter_patches(dx, dcols, kh, kw, sh, sw, pt, pl)
            x.add_grad(dx[0] if single else dx)

    return _record(out, bwd)


def maxpool2d(x: Tensor, window, stride) -> Tensor:
    """Per-channel window max; SAME padding with a -inf sentinel.

    The gradient routes to the first maximal element in row-major window
    order.
    """
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    N, H, W, C = xd.shape
    kh, kw = window
    sh, sw = stride
    OH, OW, pt, pl = same_geometry(H, W, kh, kw, sh, sw)
    dt = xd.dtype
    neg = np.array(-np.inf, dtype=dt)

    need_grad = active_tape() is not None

    # Stage 1: max over the kh rows of each vertical tap, tracking the first
    # maximal row per (output row, input column).
    s1 = _scratch("pool.s1", (N, OH, kh, W, C), dt)
    for dh in range(kh):
        oh0, oh1 = _tap_ranges(dh, pt, sh, H, OH)
        dst = s1[:, :, dh, :, :]
        if oh0 > 0 or oh1 < OH:
            dst[:, :oh0] = neg
            dst[:, oh1:] = neg
        if oh1 > oh0:
            ih0 = oh0 * sh + dh - pt
            dst[:, oh0:oh1] = xd[:, ih0 : ih0 + (oh1 - oh0) * sh : sh, :, :]
    m1 = s1.max(axis=2)
    a1 = None
    if need_grad:
        # First-maximal row per column tap; strictly-greater keeps the
        # lowest dh on ties.
        a1 = np.zeros((N, OH, W, C), dtype=np.int32)
        best = s1[:, :, 0].copy()
        for dh in range(1, kh):
            better = s1[:, :, dh] > best
            a1[better] = dh
            np.maximum(best, s1[:, :, dh], out=best)

    # Stage 2: max over the kw column taps, recovering the row-major-first
    # window coordinate among ties via the encoded (row, col) rank.
    s2v = _scratch("pool.s2v", (N, OH, OW, kw, C), dt)
    s2a = _scratch_i32("pool.s2a", (N, OH, OW, kw, C)) if need_grad else None
    for dw in range(kw):
        ow0, ow1 = _tap_ranges(dw, pl, sw, W, OW)
        dstv = s2v[:, :, :, dw, :]
        if ow0 > 0 or ow1 < OW:
            dstv[:, :, :ow0] = neg
            dstv[:, :, ow1:] = neg
        if ow1 > ow0:
            iw0 = ow0 * sw + dw - pl
            dstv[:, :, ow0:ow1] = m1[:, :, iw0 : iw0 + (ow1 - ow0) * sw : sw, :]
        if need_grad:
            dsta = s2a[:, :, :, dw, :]
            if ow0 > 0 or ow1 < OW:
                dsta[:, :, :ow0] = 0
                dsta[:, :, ow1:] = 0
            if ow1 > ow0:
                iw0 = ow0 * sw + dw - pl
                dsta[:, :, ow0:ow1] = a1[:, :, iw0 : iw0 + (ow1 - ow0) * sw : sw, :]
    m = s2v.max(axis=3)
    if not np.isfinite(m).all():
        raise ConfigurationError("pooling window contains only padding")
    flat = None
    if need_grad:
        rank = s2a * np.int32(kw) + np.arange(kw, dtype=np.int32)[None, None, None, :, None]
        rank = np.where(s2v == m[:, :, :, None, :], rank, np.int32(kh * kw))
        flat = rank.min(axis=3)  # dh*kw + dw of the winning element

    out = _wrap(np.ascontiguousarray(m if not single else m[0]))

    def bwd(dy):
        dh = flat // kw
        dw = flat % kw
        oh = np.arange(OH, dtype=np.int64)[None, :, None, None]
        ow = np.arange(OW, dtype=np.int64)[None, None, :, None]
        n = np.arange(N, dtype=np.int64)[:, None, None, None]
        c = np.arange(C, dtype=np.int64)[None, None, None, :]
        ih = oh * sh + dh - pt
        iw = ow * sw + dw - pl
        lin = (((n * H + ih) * W + iw) * C + c).ravel()
        dyd = dy.reshape(N, OH, OW, C)
        acc = np.bincount(lin, weights=dyd.ravel().astype(np.float64), minlength=xd.size)
        dx = acc.astype(dt).reshape(xd.shape)
        x.add_grad(dx[0] if single else dx)

    return _record(out, bwd)


def _scratch_i32(key, shape):
    return _scratch(key, shape, np.int32)


# ---------------------------------------------------------------------------
# dense / activations


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = x @ weight + bias for x of shape [n] or [B,n]."""
    single = x.data.ndim == 1
    xd = x.data[None] if single else x.data
    n, m = weight.data.shape
    if xd.shape[1] != n:
        raise ConfigurationError(f"dense expects inner extent {n}, got {xd.shape[1]}")
    if bias.data.shape != (m,):
        raise ConfigurationError(f"bias shape {bias.data.shape} != ({m},)")
    y = xd @ weight.data
    y += bias.data
    out = _wrap(y[0] if single else y)

    def bwd(dy):
        dy2 = dy[None] if single else dy
        weight.add_grad(xd.T @ dy2)
        bias.add_grad(dy2.sum(axis=0))
        x.add_grad((dy2 @ weight.data.T)[0] if single else dy2 @ weight.data.T)

    return _record(out, bwd)


def relu(x: Tensor, inplace: bool = False) -> Tensor:
    """max(0, x); subgradient 0 at exactly 0.

    inplace=True overwrites x's buffer and is only safe when x has no other
    consumer (the conv-then-relu pattern in the model).
    """
    y = np.maximum(x.data, 0, out=x.data if inplace else None)
    out = _wrap(y)

    def bwd(dy):
        x.add_grad(dy * (y > 0))

    return _record(out, bwd)


def sigmoid(x: Tensor) -> Tensor:
    y = np.exp(-np.logaddexp(0.0, -x.data).astype(x.data.dtype))
    out = _wrap(y)

    def bwd(dy):
        x.add_grad(dy * y * (1.0 - y))

    return _record(out, bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = _wrap(y)

    def bwd(dy):
        x.add_grad(dy * (1.0 - y * y))

    return _record(out, bwd)


def softmax(x: Tensor) -> Tensor:
    """Max-shifted softmax along the last axis."""
    xd = x.data
    shifted = xd - xd.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _wrap(y)

    def bwd(dy):
        inner = (dy * y).sum(axis=-1, keepdims=True)
        x.add_grad(y * (dy - inner))

    return _record(out, bwd)


# ---------------------------------------------------------------------------
# structural ops


def concat(parts, axis: int = 0) -> Tensor:
    """Order-preserving concatenation; the gradient slices back."""
    if not parts:
        raise ConfigurationError("concat of zero parts")
    datas = [p.data for p in parts]
    base = list(datas[0].shape)
    for d in datas[1:]:
        other = list(d.shape)
        if len(other) != len(base) or any(
            o != b for i, (o, b) in enumerate(zip(other, base)) if i != axis % len(base)
        ):
            raise ConfigurationError(f"concat extent mismatch: {base} vs {other}")
    y = np.concatenate(datas, axis=axis)
    out = _wrap(y)
    ax = axis % y.ndim
    offsets = np.cumsum([0] + [d.shape[ax] for d in datas])

    def bwd(dy):
        sl = [slice(None)] * y.ndim
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            sl[ax] = slice(lo, hi)
            part.add_grad(dy[tuple(sl)].copy())

    return _record(out, bwd)


def flatten(x: Tensor) -> Tensor:
    """Row-major linearization to one dimension."""
    return reshape(x, (x.data.size,))


def reshape(x: Tensor, shape) -> Tensor:
    y = x.data.reshape(shape)
    out = _wrap(y)

    def bwd(dy):
        x.add_grad(dy.reshape(x.data.shape))

    return _record(out, bwd)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis; gradient zero-pads back."""
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    y = np.ascontiguousarray(x.data[tuple(sl)])
    out = _wrap(y)

    def bwd(dy):
        dx = np.zeros_like(x.data)
        dx[tuple(sl)] = dy
        x.add_grad(dx)

    return _record(out, bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ConfigurationError(f"add shape mismatch {a.shape} vs {b.shape}")
    out = _wrap(a.data + b.data)

    def bwd(dy):
        a.add_grad(dy.copy())
        b.add_grad(dy.copy())

    return _record(out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ConfigurationError(f"mul shape mismatch {a.shape} vs {b.shape}")
    out = _wrap(a.data * b.data)

    def bwd(dy):
        a.add_grad(dy * b.data)
        b.add_grad(dy * a.data)

    return _record(out, bwd)


def one_minus(x: Tensor) -> Tensor:
    out = _wrap(1.0 - x.data)

    def bwd(dy):
        x.add_grad(-dy)

    return _record(out, bwd)


def scale_rows(mat: Tensor, col: Tensor) -> Tensor:
    """Multiply each row of mat [B,k] by the matching scalar of col [B]."""
    if col.data.ndim != 1 or mat.data.ndim != 2 or col.data.shape[0] != mat.data.shape[0]:
        raise ConfigurationError(f"scale_rows shapes {mat.shape} vs {col.shape}")
    out = _wrap(mat.data * col.data[:, None])

    def bwd(dy):
        mat.add_grad(dy * col.data[:, None])
        col.add_grad((dy * mat.data).sum(axis=1))

    return _record(out, bwd)


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormState:
    """Running statistics for one batch-norm site (non-trainable buffers)."""

    __slots__ = ("mean", "var", "updates")

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.updates = 0


BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, train: bool) -> Tensor:
    """Normalize over all non-channel positions; channels on the last axis.

    Train mode uses batch statistics and updates the running EMA; infer mode
    uses the running statistics and requires at least one prior update.
    """
    xd = x.data
    C = xd.shape[-1]
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise ConfigurationError("batchnorm gamma/beta must match channel extent")
    axes = tuple(range(xd.ndim - 1))
    if train:
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        state.mean[...] = (1.0 - BN_MOMENTUM) * state.mean + BN_MOMENTUM * mu
        state.var[...] = (1.0 - BN_MOMENTUM) * state.var + BN_MOMENTUM * var
        state.updates += 1
    else:
        if state.updates == 0:
            raise ConfigurationError("batchnorm inference before any training update")
        mu = state.mean
        var = state.var
    ivar = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (xd - mu) * ivar
    y = xhat * gamma.data + beta.data
    out = _wrap(y.astype(xd.dtype, copy=False))
    M = xd.size // C

    def bwd(dy):
        gamma.add_grad((dy * xhat).sum(axis=axes))
        beta.add_grad(dy.sum(axis=axes))
        dxhat = dy * gamma.data
        if train:
            dx = (
                dxhat - dxhat.mean(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes) / M
            ) * ivar
        else:
            dx = dxhat * ivar
        x.add_grad(dx.astype(xd.dtype, copy=False))

    return _record(out, bwd)


# ---------------------------------------------------------------------------
# convolutional GRU


def conv_gru_step(x_t: Tensor, h_prev: Tensor, cell: dict) -> Tensor:
    """One convolutional GRU step.

    The input-to-hidden path is a stride-2 SAME convolution mapping x_t onto
    the hidden grid (ceil of each spatial extent / 2); the hidden-to-hidden
    path is a stride-1 SAME convolution. Gates:

        z = sigmoid(Wxz*x + Whz*h)        (update)
        r = sigmoid(Wxr*x + Whr*h)        (reset)
        c = tanh(Wxc*x + Whc*(r . h))     (candidate)
        h = (1 - z) . h_prev + z . c

    cell holds kernels wxz/wxr/wxc [3,3,Cin,Ch], whz/whr/whc [3,3,Ch,Ch],
    and biases bz/br/bc on the input path.
    """
    hs = h_prev.data.shape
    xs = x_t.data.shape
    expect = (-(-xs[-3] // 2), -(-xs[-2] // 2))
    if (hs[-3], hs[-2]) != expect:
        raise ConfigurationError(
            f"hidden grid {hs[-3:]} inconsistent with strided input map {expect}"
        )
    z = sigmoid(add(conv2d(x_t, cell["wxz"], cell["bz"], (2, 2)),
                    conv2d(h_prev, cell["whz"], None, (1, 1))))
    r = sigmoid(add(conv2d(x_t, cell["wxr"], cell["br"], (2, 2)),
                    conv2d(h_prev, cell["whr"], None, (1, 1))))
    c = tanh(add(conv2d(x_t, cell["wxc"], cell["bc"], (2, 2)),
                 conv2d(mul(r, h_prev), cell["whc"], None, (1, 1))))
    return add(mul(one_minus(z), h_prev), mul(z, c))


# ---------------------------------------------------------------------------
# loss

NLL_EPS = 1e-12


def nll_loss(dist: Tensor, target) -> Tensor:
    """-ln(dist[target] + eps); batched form averages over rows.

    dist: probability vector [k] with integer target, or [B,k] with targets
    of shape [B].
    """
    d = dist.data
    if d.ndim == 1:
        d2 = d[None]
        t = np.array([int(target)])
    else:
        d2 = d
        t = np.asarray(target, dtype=np.int64)
        if t.shape != (d2.shape[0],):
            raise UsageError(f"targets shape {t.shape} != batch ({d2.shape[0]},)")
    B, k = d2.shape
    if (t < 0).any() or (t >= k).any():
        raise UsageError(f"target out of range for {k} classes")
    sums = d2.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-5:
        raise UsageError("nll_loss input does not sum to 1")
    rows = np.arange(B)
    picked = d2[rows, t].astype(np.float64) + NLL_EPS
    val = float(-np.log(picked).mean())
    out = _wrap(np.array(val, dtype=d.dtype))

    def bwd(dy):
        g = np.zeros_like(d2)
        g[rows, t] = (-1.0 / picked / B) * float(dy)
        dist.add_grad(g.reshape(d.shape))

    return _record(out, bwd)
