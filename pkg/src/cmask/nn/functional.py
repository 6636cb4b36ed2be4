"""Differentiable primitives used by the U-Net."""
from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from .tensor import Tensor, as_tensor, make


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Strided (N, C, out_h, out_w, kh, kw) view of a padded input."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : stride * (out_h - 1) + 1 : stride, : stride * (out_w - 1) + 1 : stride]


def _col2im(cols: np.ndarray, padded_shape: tuple, stride: int) -> np.ndarray:
    """Scatter-add (N, out_h, out_w, C, kh, kw) patches back onto a padded canvas."""
    n, oh, ow, c, kh, kw = cols.shape
    out = np.zeros(padded_shape, dtype=cols.dtype)
    cols = cols.transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * (oh - 1) + 1:stride, j:j + stride * (ow - 1) + 1:stride] += cols[:, :, i, j]
    return out


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    pad = kernel // 2
    return (size + 2 * pad - kernel) // stride + 1


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int) -> tuple[np.ndarray, np.ndarray]:
    kh, kw = w.shape[2:]
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    oh = conv_output_size(x.shape[2], kh, stride)
    ow = conv_output_size(x.shape[3], kw, stride)
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), cols


def _conv_input_grad(g: np.ndarray, w: np.ndarray, in_shape: tuple, stride: int) -> np.ndarray:
    kh, kw = w.shape[2:]
    ph, pw = kh // 2, kw // 2
    n, c, h, wd = in_shape
    dcols = np.tensordot(g, w, axes=([1], [0]))  # (N, oh, ow, C, kh, kw)
    dxp = _col2im(dcols, (n, c, h + 2 * ph, wd + 2 * pw), stride)
    return np.ascontiguousarray(dxp[:, :, ph:ph + h, pw:pw + wd])


def _check_conv(x: Tensor, w: Tensor, in_axis: int):
    if x.ndim != 4 or w.ndim != 4:
        raise ParameterError(f"expected 4-D input and weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[in_axis]:
        raise ParameterError(
            f"channel mismatch: input has {x.shape[1]}, weight expects {w.shape[in_axis]}"
        )


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Cross-correlation with ``kernel // 2`` zero padding, then striding.

    ``weight`` has shape (out_channels, in_channels, kh, kw); for a 5x5
    kernel and stride 2 the output spatial size is ``ceil(in / 2)``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv(x, weight, 1)
    kh, kw = weight.shape[2:]
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise ParameterError(f"input {x.shape[2:]} too small for kernel {weight.shape[2:]}")
    out, cols = _conv_forward(x.data, weight.data, stride)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def back(g):
        gx = _conv_input_grad(g, weight.data, x.shape, stride) if x.requires_grad else None
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make(out, parents, back)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Exact adjoint of :func:`conv2d` for an input ``stride`` times larger.

    ``weight`` has shape (in_channels, out_channels, kh, kw), i.e. the same
    array a forward convolution from out_channels to in_channels would use.
    Output spatial size is ``stride * in``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    _check_conv(x, weight, 0)
    n, _, h, wd = x.shape
    out_shape = (n, weight.shape[1], stride * h, stride * wd)
    out = _conv_input_grad(x.data, weight.data, out_shape, stride)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[None, :, None, None]
        parents.append(bias)

    def back(g):
        gx, cols = _conv_forward(g, weight.data, stride)
        gw = np.tensordot(x.data, cols, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        grads = [gx if x.requires_grad else None, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make(out, parents, back)


class BatchNormState:
    """Running statistics of one batch-norm layer (updated in train mode)."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ParameterError(f"batch-norm parameters must have shape ({c},)")
    axes = (0, 2, 3)
    bshape = (1, c, 1, 1)
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.data.size // c
        unbiased = var * m / max(m - 1, 1)
        state.running_mean[:] = (1 - state.momentum) * state.running_mean + state.momentum * mean
        state.running_var[:] = (1 - state.momentum) * state.running_var + state.momentum * unbiased
    else:
        mean, var = state.running_mean, state.running_var
    inv_std = (1.0 / np.sqrt(var + state.eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def back(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        gxhat = g * gamma.data.reshape(bshape)
        if training:
            gx = inv_std.reshape(bshape) * (
                gxhat - gxhat.mean(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).mean(axis=axes, keepdims=True)
            )
        else:
            gx = gxhat * inv_std.reshape(bshape)
        return gx, ggamma, gbeta

    return make(out, (x, gamma, beta), back)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return make(np.where(pos, x.data, slope * x.data), (x,), lambda g: (np.where(pos, g, slope * g),))


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return make(out, (x,), lambda g: (g * (1.0 - out * out),))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | int | None, training: bool) -> Tensor:
    """Inverted dropout; identity in eval mode or for ``rate == 0``."""
    if not 0 <= rate < 1:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return make(x.data * keep, (x,), lambda g: (g * keep,))


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return make(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                lambda g: np.split(g, splits, axis=axis))
