"""Layer specifications, parameter storage and the generic layer-stack runner."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..autodiff import Tensor, conv2d, conv_transpose2d, ops
from ..autodiff.conv import conv_output_size, conv_transpose_output_size
from ..autodiff.tensor import ShapeError, record

LAYER_KINDS = ("conv", "deconv", "batchnorm", "relu", "leaky_relu", "tanh", "residual_block")

BN_MOMENTUM = 0.1
BN_EPS = 1e-5
INIT_STD = 0.02


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_channels: int = 0
    kernel: tuple[int, int] = (0, 0)
    stride: int = 1
    padding: int = 0
    slope: float = 0.2
    # "reflect" pads by ``padding`` before a padding-free convolution
    padding_mode: str = "zeros"
    output_padding: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        kh, kw = self.kernel
        if min(kh, kw, self.padding, self.output_padding) < 0 or self.stride < 1:
            raise SpecError(f"invalid geometry in {self}")
        if self.kind in ("conv", "deconv", "residual_block"):
            if kh < 1 or kw < 1 or self.out_channels < 1:
                raise SpecError(f"{self.kind} needs a kernel and out_channels")
        if self.padding_mode not in ("zeros", "reflect"):
            raise SpecError(f"unknown padding_mode {self.padding_mode!r}")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    scale_factor: int = 1
    heads: tuple[tuple[str, tuple[LayerSpec, ...]], ...] = ()

    def __post_init__(self):
        if self.scale_factor < 1:
            raise SpecError("scale_factor must be a positive integer")
        h, w, c = self.input_shape
        if min(h, w, c) < 1:
            raise SpecError(f"invalid input shape {self.input_shape}")


@dataclass
class Parameters:
    """Trainable tensors plus batch-norm running statistics, keyed by layer path.

    Keys look like ``"0.weight"``, ``"4.gamma"``, ``"5.block.1.running_var"``.
    """

    tensors: dict[str, Tensor] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def __getitem__(self, key: str) -> Tensor:
        return self.tensors[key]

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def set_requires_grad(self, flag: bool) -> None:
        for t in self.tensors.values():
            t.requires_grad = flag

    def state(self) -> dict[str, np.ndarray]:
        out = {f"param/{k}": t.data for k, t in self.tensors.items()}
        out.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, t in self.tensors.items():
            arr = state[f"param/{k}"]
            if arr.shape != t.shape:
                raise SpecError(f"shape mismatch for {k}: {arr.shape} vs {t.shape}")
            t.data = np.array(arr, dtype=np.float64)
        for k, v in self.buffers.items():
            arr = state[f"buffer/{k}"]
            if arr.shape != v.shape:
                raise SpecError(f"shape mismatch for {k}: {arr.shape} vs {v.shape}")
            self.buffers[k] = np.array(arr, dtype=np.float64)

    def copy(self) -> "Parameters":
        return Parameters(
            {k: Tensor(t.data, requires_grad=t.requires_grad) for k, t in self.tensors.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, mode: str = "train",
               running_mean: np.ndarray | None = None, running_var: np.ndarray | None = None,
               momentum: float = BN_MOMENTUM, eps: float = BN_EPS, update_stats: bool = True) -> Tensor:
    """Per-channel normalization over every axis but the last.

    In train mode the running statistics (if given) are updated in place.
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError("batch_norm", x.shape, gamma.shape, beta.shape)
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batch_norm: train mode needs a batch of at least 2")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if update_stats and running_mean is not None:
            count = x.size // c
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * var * count / (count - 1)
    elif mode == "eval":
        if running_mean is None or running_var is None:
            raise ValueError("batch_norm: eval mode needs running statistics")
        mu, var = running_mean, running_var
    else:
        raise ValueError(f"unknown batch_norm mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    g_, b_ = gamma.data, beta.data
    out = xhat * g_ + b_
    n = x.size // c
    train = mode == "train"

    def bw(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * g_
        if train:
            dx = inv_std / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
        else:
            dx = dxhat * inv_std
        return dx, dgamma, dbeta

    return record("batch_norm", (x, gamma, beta), out, bw)


def activation(kind: str, x: Tensor, slope: float = 0.2) -> Tensor:
    if kind == "relu":
        return ops.relu(x)
    if kind == "leaky_relu":
        return ops.leaky_relu(x, slope)
    if kind == "tanh":
        return ops.tanh(x)
    if kind == "sigmoid":
        return ops.sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


# --- shape arithmetic -------------------------------------------------------

def layer_output_shape(layer: LayerSpec, shape: tuple[int, int, int]) -> tuple[int, int, int]:
    h, w, c = shape
    kh, kw = layer.kernel
    if layer.kind == "conv":
        if h + 2 * layer.padding < kh or w + 2 * layer.padding < kw:
            raise SpecError(f"kernel {layer.kernel} larger than padded input {shape}")
        return (conv_output_size(h, kh, layer.stride, layer.padding),
                conv_output_size(w, kw, layer.stride, layer.padding), layer.out_channels)
    if layer.kind == "deconv":
        return (conv_transpose_output_size(h, kh, layer.stride, layer.padding, layer.output_padding),
                conv_transpose_output_size(w, kw, layer.stride, layer.padding, layer.output_padding),
                layer.out_channels)
    if layer.kind == "residual_block":
        if c != layer.out_channels:
            raise SpecError(f"residual block expects {layer.out_channels} channels, got {c}")
        inner = _residual_conv(layer)
        if layer_output_shape(inner, shape) != shape:
            raise SpecError("residual block convolution must preserve shape")
        return shape
    return shape


def trace_shapes(spec: NetworkSpec) -> list[tuple[str, tuple[int, int, int], tuple[int, int, int]]]:
    """Symbolic (label, in_shape, out_shape) rows for every layer and head."""
    rows = []
    shape = spec.input_shape
    for i, layer in enumerate(spec.layers):
        out = layer_output_shape(layer, shape)
        rows.append((f"{i}.{layer.kind}", shape, out))
        shape = out
    trunk = shape
    for name, head in spec.heads:
        shape = trunk
        for i, layer in enumerate(head):
            out = layer_output_shape(layer, shape)
            rows.append((f"{name}.{i}.{layer.kind}", shape, out))
            shape = out
    return rows


def output_shapes(spec: NetworkSpec) -> dict[str, tuple[int, int, int]]:
    shape = spec.input_shape
    for layer in spec.layers:
        shape = layer_output_shape(layer, shape)
    if not spec.heads:
        return {"out": shape}
    res = {}
    for name, head in spec.heads:
        s = shape
        for layer in head:
            s = layer_output_shape(layer, s)
        res[name] = s
    return res


def _residual_conv(layer: LayerSpec) -> LayerSpec:
    return LayerSpec("conv", layer.out_channels, layer.kernel, layer.stride, layer.padding)


# --- parameter construction and forward pass ---------------------------------

def _init_layers(layers, shape, prefix: str, rng: np.random.Generator, params: Parameters):
    for i, layer in enumerate(layers):
        key = f"{prefix}{i}"
        c = shape[2]
        if layer.kind == "conv":
            kh, kw = layer.kernel
            params.tensors[f"{key}.weight"] = Tensor(rng.normal(0.0, INIT_STD, (kh, kw, c, layer.out_channels)),
                                                     requires_grad=True)
            params.tensors[f"{key}.bias"] = Tensor(np.zeros(layer.out_channels), requires_grad=True)
        elif layer.kind == "deconv":
            kh, kw = layer.kernel
            params.tensors[f"{key}.weight"] = Tensor(rng.normal(0.0, INIT_STD, (kh, kw, layer.out_channels, c)),
                                                     requires_grad=True)
            params.tensors[f"{key}.bias"] = Tensor(np.zeros(layer.out_channels), requires_grad=True)
        elif layer.kind == "batchnorm":
            _init_bn(f"{key}", c, params)
        elif layer.kind == "residual_block":
            inner = _residual_conv(layer)
            _init_layers((inner, LayerSpec("batchnorm"), LayerSpec("relu"), inner, LayerSpec("batchnorm")),
                         shape, f"{key}.block.", rng, params)
        shape = layer_output_shape(layer, shape)
    return shape


def _init_bn(key: str, c: int, params: Parameters) -> None:
    params.tensors[f"{key}.gamma"] = Tensor(np.ones(c), requires_grad=True)
    params.tensors[f"{key}.beta"] = Tensor(np.zeros(c), requires_grad=True)
    params.buffers[f"{key}.running_mean"] = np.zeros(c)
    params.buffers[f"{key}.running_var"] = np.ones(c)


def init_parameters(spec: NetworkSpec, seed: int) -> Parameters:
    """Gaussian(0, 0.02) kernels, zero biases, unit/zero batch-norm affine."""
    rng = np.random.default_rng(seed)
    params = Parameters()
    trunk = _init_layers(spec.layers, spec.input_shape, "", rng, params)
    for name, head in spec.heads:
        _init_layers(head, trunk, f"{name}.", rng, params)
    return params


def _run_layers(layers, x: Tensor, prefix: str, params: Parameters, train: bool, update_stats: bool) -> Tensor:
    for i, layer in enumerate(layers):
        key = f"{prefix}{i}"
        kind = layer.kind
        if kind == "conv":
            pad = layer.padding
            if layer.padding_mode == "reflect" and pad:
                x = ops.reflect_pad(x, pad)
                pad = 0
            x = conv2d(x, params[f"{key}.weight"], layer.stride, pad, bias=params[f"{key}.bias"])
        elif kind == "deconv":
            x = conv_transpose2d(x, params[f"{key}.weight"], layer.stride, layer.padding, layer.output_padding,
                                 bias=params[f"{key}.bias"])
        elif kind == "batchnorm":
            x = batch_norm(x, params[f"{key}.gamma"], params[f"{key}.beta"], "train" if train else "eval",
                           params.buffers[f"{key}.running_mean"], params.buffers[f"{key}.running_var"],
                           update_stats=update_stats)
        elif kind == "residual_block":
            inner = _residual_conv(layer)
            y = _run_layers((inner, LayerSpec("batchnorm"), LayerSpec("relu"), inner, LayerSpec("batchnorm")),
                            x, f"{key}.block.", params, train, update_stats)
            x = ops.add(x, y)
        else:
            x = activation(kind, x, layer.slope)
    return x


class Network:
    """A layer stack bound to its parameters.

    Calling the network runs the trunk and returns either the single output
    or, for specs with heads, a tuple of head outputs in declaration order.
    """

    def __init__(self, spec: NetworkSpec, params: Parameters):
        self.spec = spec
        self.params = params

    def validate_input(self, x: Tensor) -> None:
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError("network input", x.shape, (-1, *self.spec.input_shape))

    def __call__(self, x: Tensor, train: bool = True, update_stats: bool = True):
        self.validate_input(x)
        h = _run_layers(self.spec.layers, x, "", self.params, train, update_stats)
        if not self.spec.heads:
            return h
        return tuple(_run_layers(head, h, f"{name}.", self.params, train, update_stats)
                     for name, head in self.spec.heads)

    forward = __call__
