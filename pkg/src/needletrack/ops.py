"""Dense-array layer primitives with explicit forward and backward passes.

Every forward op returns ``(output, ctx)`` where ``ctx`` is a single-use
:class:`LayerContext` consumed by the matching backward op.  Ops accept a
single sample ``(C, H, W)`` / ``(N_in,)`` or a batch with a leading batch
axis, never mutate their inputs, and preserve the input dtype (float32 for
training speed, float64 for gradient checks).
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContextReuseError(RuntimeError):
    """A LayerContext was passed to backward more than once."""


class LayerContext:
    """Saved forward-pass state needed by the paired backward op.

    Single-use: the backward op consumes the context; a second backward
    call with the same context raises :class:`ContextReuseError`.
    """

    def __init__(self, op: str, **saved):
        self.op = op
        self._saved = saved
        self._consumed = False

    def consume(self, op: str) -> dict:
        if self._consumed:
            raise ContextReuseError(f"context for '{self.op}' already consumed")
        if op != self.op:
            raise ShapeError(f"context from '{self.op}' passed to '{op}_backward'")
        self._consumed = True
        return self._saved


def _as_batched(x: np.ndarray, sample_ndim: int):
    """Add a batch axis if ``x`` is a single sample; report whether we did."""
    if x.ndim == sample_ndim:
        return x[None], True
    if x.ndim == sample_ndim + 1:
        return x, False
    raise ShapeError(f"expected {sample_ndim}D or {sample_ndim + 1}D input, got shape {x.shape}")


def _conv_out_side(side: int, k: int, stride: int, padding: int) -> int:
    return (side + 2 * padding - k) // stride + 1


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
           stride: int = 1, padding: int = 0):
    """2D cross-correlation with zero padding.

    x: (C_in, H, W) or (N, C_in, H, W); weight: (C_out, C_in, kH, kW);
    bias: (C_out,).  Returns ((C_out, H', W') or batched, ctx).
    Internally lowers patches to a (N*H'*W', C_in*kH*kW) matrix so the
    contraction is a single matmul.
    """
    xb, single = _as_batched(x, 3)
    if weight.ndim != 4:
        raise ShapeError(f"weight must be 4D (C_out, C_in, kH, kW), got {weight.shape}")
    n, c_in, h, w = xb.shape
    c_out, wc_in, kh, kw = weight.shape
    if wc_in != c_in:
        raise ShapeError(
            f"input has {c_in} channels (shape {tuple(x.shape)}) but weight expects "
            f"{wc_in} (shape {tuple(weight.shape)})")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({c_out},)")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(f"kernel ({kh},{kw}) larger than padded input ({h + 2 * padding},{w + 2 * padding})")
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride={stride} / padding={padding}")

    out_h = _conv_out_side(h, kh, stride, padding)
    out_w = _conv_out_side(w, kw, stride, padding)
    xp = np.pad(xb, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]       # (N, C_in, H', W', kH, kW) view
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5))
    cols = cols.reshape(n * out_h * out_w, c_in * kh * kw)
    w_flat = weight.reshape(c_out, -1)
    out = cols @ w_flat.T + bias                      # (N*H'*W', C_out)
    out = out.reshape(n, out_h, out_w, c_out).transpose(0, 3, 1, 2)

    ctx = LayerContext("conv2d", cols=cols, weight=weight, x_shape=xb.shape,
                       stride=stride, padding=padding,
                       out_shape=out.shape, single=single)
    return (out[0] if single else out), ctx


def conv2d_backward(ctx: LayerContext, grad_out: np.ndarray):
    """Gradients of conv2d w.r.t. input, weight and bias."""
    s = ctx.consume("conv2d")
    gb, _ = _as_batched(grad_out, 3)
    if gb.shape != s["out_shape"]:
        raise ShapeError(f"grad_out shape {gb.shape} != forward output shape {s['out_shape']}")
    n, c_in, h, w = s["x_shape"]
    weight = s["weight"]
    c_out, _, kh, kw = weight.shape
    stride, pad = s["stride"], s["padding"]
    cols = s["cols"]
    _, _, out_h, out_w = s["out_shape"]

    g = np.ascontiguousarray(gb.transpose(0, 2, 3, 1)).reshape(-1, c_out)
    grad_bias = g.sum(axis=0)
    grad_weight = (g.T @ cols).reshape(weight.shape)
    grad_cols = g @ weight.reshape(c_out, -1)         # (N*H'*W', C_in*kH*kW)

    # col2im: per kernel offset the target positions are disjoint, so each
    # offset is one strided slice-add instead of a scattered np.add.at
    gc = grad_cols.reshape(n, out_h, out_w, c_in, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    gp = np.zeros((n, c_in, h + 2 * pad, w + 2 * pad), dtype=grad_cols.dtype)
    for di in range(kh):
        for dj in range(kw):
            gp[:, :, di:di + stride * out_h:stride,
               dj:dj + stride * out_w:stride] += gc[:, :, di, dj]
    grad_x = gp[:, :, pad:pad + h, pad:pad + w] if pad else gp
    if s["single"]:
        grad_x = grad_x[0]
    return grad_x, grad_weight, grad_bias


def relu(x: np.ndarray):
    """Elementwise max(0, x)."""
    out = np.maximum(x, 0)
    ctx = LayerContext("relu", positive=x > 0)
    return out, ctx


def relu_backward(ctx: LayerContext, grad_out: np.ndarray):
    # derivative at exactly 0 defined as 0
    s = ctx.consume("relu")
    if grad_out.shape != s["positive"].shape:
        raise ShapeError(f"grad_out shape {grad_out.shape} != input shape {s['positive'].shape}")
    return np.where(s["positive"], grad_out, 0)


def maxpool2d(x: np.ndarray):
    """2x2 max pooling with stride 2; H and W must be even."""
    xb, single = _as_batched(x, 3)
    n, c, h, w = xb.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even H and W, got ({h},{w})")
    # windows flattened in row-major order so argmax takes the first maximum
    win = xb.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    ctx = LayerContext("maxpool2d", arg=arg, x_shape=xb.shape, single=single)
    return (out[0] if single else out), ctx


def maxpool2d_backward(ctx: LayerContext, grad_out: np.ndarray):
    """Route each output gradient to the argmax position of its window."""
    s = ctx.consume("maxpool2d")
    gb, _ = _as_batched(grad_out, 3)
    arg = s["arg"]
    if gb.shape != arg.shape:
        raise ShapeError(f"grad_out shape {gb.shape} != pooled shape {arg.shape}")
    n, c, h, w = s["x_shape"]
    win = np.zeros((n, c, h // 2, w // 2, 4), dtype=gb.dtype)
    np.put_along_axis(win, arg[..., None], gb[..., None], axis=-1)
    grad_x = win.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    grad_x = grad_x.reshape(n, c, h, w)
    return grad_x[0] if s["single"] else grad_x


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Affine map weight @ x + bias; x is (N_in,) or (N, N_in)."""
    xb, single = _as_batched(x, 1)
    n_out, n_in = weight.shape
    if xb.shape[1] != n_in:
        raise ShapeError(f"input size {xb.shape[1]} != weight input size {n_in}")
    if bias.shape != (n_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({n_out},)")
    out = xb @ weight.T + bias
    ctx = LayerContext("linear", x=xb, weight=weight, single=single)
    return (out[0] if single else out), ctx


def linear_backward(ctx: LayerContext, grad_out: np.ndarray):
    s = ctx.consume("linear")
    gb, _ = _as_batched(grad_out, 1)
    xb, weight = s["x"], s["weight"]
    if gb.shape != (xb.shape[0], weight.shape[0]):
        raise ShapeError(f"grad_out shape {gb.shape} != output shape {(xb.shape[0], weight.shape[0])}")
    grad_x = gb @ weight
    grad_weight = gb.T @ xb
    grad_bias = gb.sum(axis=0)
    if s["single"]:
        grad_x = grad_x[0]
    return grad_x, grad_weight, grad_bias


def dropout(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout: kept elements scaled by 1/(1-rate); eval mode is identity."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        ctx = LayerContext("dropout", scale=None, shape=x.shape)
        return x.copy(), ctx
    if rng is None:
        raise ValueError("train-mode dropout with rate > 0 requires an rng")
    keep = rng.random(x.shape) >= rate
    scale = (keep / (1.0 - rate)).astype(x.dtype)
    ctx = LayerContext("dropout", scale=scale, shape=x.shape)
    return x * scale, ctx


def dropout_backward(ctx: LayerContext, grad_out: np.ndarray):
    s = ctx.consume("dropout")
    if grad_out.shape != s["shape"]:
        raise ShapeError(f"grad_out shape {grad_out.shape} != input shape {s['shape']}")
    if s["scale"] is None:
        return grad_out.copy()
    return grad_out * s["scale"]


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient w.r.t. pred: 2*(pred-target)/N."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    # accumulate the loss in float64 so it is independent of batch partition
    d64 = diff.astype(np.float64, copy=False)
    loss = float(np.mean(d64 * d64))
    grad = ((2.0 / diff.size) * diff).astype(diff.dtype, copy=False)
    return loss, grad
