"""2-D cross-correlation and its adjoint on channels-last tensors.

Layouts: activations ``(n, h, w, c)``, kernels ``(kh, kw, c_in, c_out)``.
``conv_transpose2d(b, w)`` is the exact adjoint of ``conv2d(., w)`` in its
first argument, so a kernel of shape ``(kh, kw, c_small, c_big)`` maps
``c_big`` channels back to ``c_small``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, record


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int, output_padding: int = 0) -> int:
    return (size - 1) * stride - 2 * padding + kernel + output_padding


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # (n, ho, wo, c, kh, kw) -> (n, ho, wo, kh, kw, c)
    n, ho, wo, c = win.shape[:4]
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * c), (n, ho, wo)


def _col2im(cols: np.ndarray, in_shape: tuple[int, ...], kh: int, kw: int, stride: int, padding: int,
            ho: int, wo: int) -> np.ndarray:
    n, h, w, c = in_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    out = np.zeros((n, hp, wp, c))
    cols = cols.reshape(n, ho, wo, kh, kw, c)
    for i in range(kh):
        for j in range(kw):
            out[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += cols[:, :, :, i, j, :]
    return out[:, padding:padding + h, padding:padding + w, :]


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, padding: int, keep_cols: bool = False):
    kh, kw, cin, cout = w.shape
    cols, (n, ho, wo) = _im2col(x, kh, kw, stride, padding)
    out = (cols @ w.reshape(kh * kw * cin, cout)).reshape(n, ho, wo, cout)
    return (out, cols) if keep_cols else out


def _conv_input_grad(g: np.ndarray, w: np.ndarray, stride: int, padding: int,
                     in_shape: tuple[int, ...]) -> np.ndarray:
    kh, kw, cin, cout = w.shape
    n, ho, wo, _ = g.shape
    cols = g.reshape(n * ho * wo, cout) @ w.reshape(kh * kw * cin, cout).T
    return _col2im(cols, in_shape, kh, kw, stride, padding, ho, wo)


def _conv_weight_grad(x: np.ndarray, g: np.ndarray, kshape: tuple[int, ...], stride: int,
                      padding: int, cols: np.ndarray | None = None) -> np.ndarray:
    kh, kw, cin, cout = kshape
    n, ho, wo = g.shape[:3]
    if cols is None:
        cols, _ = _im2col(x, kh, kw, stride, padding)
    # floor semantics: rows/cols never touched by a window get no gradient
    return (cols.T @ g.reshape(n * ho * wo, cout)).reshape(kshape)


def _check(op: str, x: Tensor, w: Tensor, cin_axis: int, stride: int, padding: int) -> None:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(op, x.shape, w.shape)
    if x.shape[3] != w.shape[cin_axis]:
        raise ShapeError(op, x.shape, w.shape)
    if stride < 1 or padding < 0:
        raise ValueError(f"{op}: stride must be >= 1 and padding >= 0")


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0, bias: Tensor | None = None) -> Tensor:
    _check("conv2d", x, w, 2, stride, padding)
    kh, kw = w.shape[:2]
    n, h, wd, _ = x.shape
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError("conv2d", x.shape, w.shape)
    out, cols = _conv_forward(x.data, w.data, stride, padding, keep_cols=True)
    xd, wd_ = x.data, w.data
    inputs = (x, w) if bias is None else (x, w, bias)
    if bias is not None:
        if bias.shape != (w.shape[3],):
            raise ShapeError("conv2d bias", bias.shape, (w.shape[3],))
        out = out + bias.data

    def bw(g):
        gx = _conv_input_grad(g, wd_, stride, padding, xd.shape) if x.requires_grad else None
        gw = _conv_weight_grad(xd, g, wd_.shape, stride, padding, cols) if w.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1, 2))

    return record("conv2d", inputs, out, bw)


def conv_transpose2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0, output_padding: int = 0,
                     bias: Tensor | None = None) -> Tensor:
    """Adjoint of :func:`conv2d`; ``w`` has shape ``(kh, kw, c_out, c_in)``."""
    _check("conv_transpose2d", x, w, 3, stride, padding)
    if not 0 <= output_padding < stride:
        raise ValueError("output_padding must satisfy 0 <= output_padding < stride")
    kh, kw = w.shape[:2]
    n, h, wd, _ = x.shape
    ho = conv_transpose_output_size(h, kh, stride, padding, output_padding)
    wo = conv_transpose_output_size(wd, kw, stride, padding, output_padding)
    if ho <= 0 or wo <= 0:
        raise ShapeError("conv_transpose2d", x.shape, w.shape)
    out_shape = (n, ho, wo, w.shape[2])
    out = _conv_input_grad(x.data, w.data, stride, padding, out_shape)
    xd, wd_ = x.data, w.data
    inputs = (x, w) if bias is None else (x, w, bias)
    if bias is not None:
        if bias.shape != (w.shape[2],):
            raise ShapeError("conv_transpose2d bias", bias.shape, (w.shape[2],))
        out = out + bias.data

    def bw(g):
        gx = _conv_forward(g, wd_, stride, padding) if x.requires_grad else None
        gw = _conv_weight_grad(g, xd, wd_.shape, stride, padding) if w.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1, 2))

    return record("conv_transpose2d", inputs, out, bw)
