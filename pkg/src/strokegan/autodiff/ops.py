"""Differentiable primitives over :class:`Tensor`.

Broadcasting is deliberately limited to scalar-vs-tensor.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .tensor import DomainError, ShapeError, Tensor, record

ELEMENTWISE_KINDS = ("add", "sub", "mul", "neg", "abs", "log", "square", "sqrt", "scale")
REDUCE_KINDS = ("sum", "mean", "l1", "l2")


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.full(shape, g.sum()) if shape else np.asarray(g.sum())


def _binary_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(op, a.shape, b.shape)


def _out_shape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    return a.shape if b.size == 1 else b.shape


def _scalar(x: Tensor) -> np.ndarray:
    # scalar-broadcast operands are used as 0-d values
    return x.data.reshape(()) if x.size == 1 and x.ndim else x.data


def _operands(a: Tensor, b: Tensor) -> tuple[np.ndarray, np.ndarray]:
    if a.shape == b.shape:
        return a.data, b.data
    return _scalar(a), _scalar(b)


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape("add", a, b)
    x, y = _operands(a, b)
    out = (x + y).reshape(_out_shape(a, b))
    sa, sb = a.shape, b.shape
    return record("add", (a, b), out, lambda g: (_sum_to(g, sa), _sum_to(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape("sub", a, b)
    x, y = _operands(a, b)
    out = (x - y).reshape(_out_shape(a, b))
    sa, sb = a.shape, b.shape
    return record("sub", (a, b), out, lambda g: (_sum_to(g, sa), _sum_to(-g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape("mul", a, b)
    x, y = _operands(a, b)
    out = (x * y).reshape(_out_shape(a, b))
    sa, sb = a.shape, b.shape
    return record("mul", (a, b), out, lambda g: (_sum_to(g * y, sa), _sum_to(g * x, sb)))


def neg(a: Tensor) -> Tensor:
    return record("neg", (a,), -a.data, lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return record("scale", (a,), a.data * c, lambda g: (g * c,))


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    # sign(0) == 0 gives the zero subgradient at the kink
    s = np.sign(a.data)
    return record("abs", (a,), np.abs(a.data), lambda g: (g * s,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log: input has non-positive entries")
    x = a.data
    return record("log", (a,), np.log(x), lambda g: (g / x,))


def square(a: Tensor) -> Tensor:
    x = a.data
    return record("square", (a,), x * x, lambda g: (2.0 * g * x,))


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0):
        raise DomainError("sqrt: input has negative entries")
    out = np.sqrt(a.data)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / np.where(out > 0, out, 1.0), 0.0)
        return (g * d,)

    return record("sqrt", (a,), out, bw)


def elementwise(op_kind: str, a: Tensor, b: Optional[Tensor] = None, constant: float | None = None) -> Tensor:
    """Dispatch by name; ``scale`` takes ``constant`` instead of ``b``."""
    if op_kind in ("add", "sub", "mul"):
        if b is None:
            raise ValueError(f"{op_kind} needs two operands")
        return globals()[op_kind](a, b)
    if op_kind == "scale":
        if constant is None:
            raise ValueError("scale needs a constant")
        return scale(a, constant)
    if op_kind in ("neg", "abs", "log", "square", "sqrt"):
        return globals()[op_kind](a)
    raise ValueError(f"unknown elementwise op {op_kind!r}")


def _norm_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ValueError(f"axis {ax} out of range for {ndim}-d tensor")
        out.append(ax % ndim)
    return tuple(sorted(set(out)))


def _expand(g: np.ndarray, shape: tuple[int, ...], axes: tuple[int, ...]) -> np.ndarray:
    kept = list(shape)
    for ax in axes:
        kept[ax] = 1
    return np.broadcast_to(g.reshape(kept), shape)


def reduce(op_kind: str, a: Tensor, axes: Iterable[int] | int | None = None) -> Tensor:
    """sum / mean / l1 / l2 over ``axes`` (all axes when None)."""
    if a.size == 0:
        raise DomainError("reduce over zero elements")
    ax = _norm_axes(axes, a.ndim)
    shape = a.shape
    x = a.data
    if op_kind == "sum":
        out = x.sum(axis=ax)
        return record("sum", (a,), np.asarray(out), lambda g: (_expand(g, shape, ax).copy(),))
    if op_kind == "mean":
        count = int(np.prod([shape[i] for i in ax])) if ax else 1
        out = x.mean(axis=ax)
        return record("mean", (a,), np.asarray(out), lambda g: (_expand(g / count, shape, ax).copy(),))
    if op_kind == "l1":
        s = np.sign(x)
        out = np.abs(x).sum(axis=ax)
        return record("l1", (a,), np.asarray(out), lambda g: (_expand(g, shape, ax) * s,))
    if op_kind == "l2":
        out = np.sqrt((x * x).sum(axis=ax))

        def bw(g):
            # the zero vector gets the zero subgradient
            safe = np.where(out > 0, out, 1.0)
            coef = np.where(out > 0, g / safe, 0.0)
            return (_expand(coef, shape, ax) * x,)

        return record("l2", (a,), np.asarray(out), bw)
    raise ValueError(f"unknown reduce op {op_kind!r}")


def sum(a: Tensor, axes=None) -> Tensor:  # noqa: A001
    return reduce("sum", a, axes)


def mean(a: Tensor, axes=None) -> Tensor:
    return reduce("mean", a, axes)


def l1_norm(a: Tensor, axes=None) -> Tensor:
    return reduce("l1", a, axes)


def l2_norm(a: Tensor, axes=None) -> Tensor:
    return reduce("l2", a, axes)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    x, y = a.data, b.data
    return record("matmul", (a, b), x @ y, lambda g: (g @ y.T, x.T @ g))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", src, tuple(shape)) from None
    return record("reshape", (a,), out, lambda g: (g.reshape(src),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return record("relu", (a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = a.data > 0
    factor = np.where(mask, 1.0, slope)
    return record("leaky_relu", (a,), a.data * factor, lambda g: (g * factor,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign to avoid overflow in exp
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return record("clamp", (a,), np.clip(a.data, lo, hi), lambda g: (g * inside,))


def reflect_pad(a: Tensor, pad: int) -> Tensor:
    """Mirror-pad the two spatial axes of an (n, h, w, c) tensor."""
    if pad == 0:
        return a
    n, h, w, c = a.shape
    if pad >= h or pad >= w:
        raise ShapeError("reflect_pad", a.shape, (pad,))
    out = np.pad(a.data, ((0, 0), (pad, pad), (pad, pad), (0, 0)), mode="reflect")

    def bw(g):
        g = g.copy()
        # fold mirrored columns, then rows, back onto their sources
        for k in range(1, pad + 1):
            g[:, :, pad + k, :] += g[:, :, pad - k, :]
            g[:, :, pad + w - 1 - k, :] += g[:, :, pad + w - 1 + k, :]
        g = g[:, :, pad:pad + w, :]
        for k in range(1, pad + 1):
            g[:, pad + k, :, :] += g[:, pad - k, :, :]
            g[:, pad + h - 1 - k, :, :] += g[:, pad + h - 1 + k, :, :]
        return (g[:, pad:pad + h, :, :],)

    return record("reflect_pad", (a,), out, bw)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under row-wise softmax."""
    if logits.ndim != 2 or len(labels) != logits.shape[0]:
        raise ShapeError("softmax_cross_entropy", logits.shape, np.shape(labels))
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    idx = np.asarray(labels, dtype=np.int64)
    loss = -logp[np.arange(n), idx].mean()

    def bw(g):
        p = np.exp(logp)
        p[np.arange(n), idx] -= 1.0
        return (p * (g / n),)

    return record("softmax_xent", (logits,), np.asarray(loss), bw)
