"""Generator and dual-head discriminator templates.

Both are built from the same template at any ``scale_factor`` (which divides
every channel width); ``scale_factor=1`` with a 128x128 input reproduces the
full-size layer table, the desk configuration is 32x32 / 8 / 3 residual
blocks / 4 stride-2 discriminator layers.
"""

from __future__ import annotations

from ..autodiff import Tensor, ops
from .layers import LayerSpec, Network, NetworkSpec, Parameters, SpecError, init_parameters, output_shapes

STROKE_DIM = 32

DESK_RESOLUTION = 32
DESK_SCALE = 8
DESK_RES_BLOCKS = 3
DESK_D_LAYERS = 4


def _width(base: int, scale_factor: int) -> int:
    if base % scale_factor:
        raise SpecError(f"scale_factor {scale_factor} does not divide channel width {base}")
    return base // scale_factor


def generator_spec(resolution: int = 128, scale_factor: int = 1, n_res_blocks: int = 9) -> NetworkSpec:
    """ResNet generator: 7x7 stem, two stride-2 downs, residual blocks, two ups, 7x7 tanh head."""
    if resolution % 4:
        raise SpecError(f"generator resolution {resolution} must be divisible by 4")
    c1, c2, c3 = (_width(b, scale_factor) for b in (64, 128, 256))
    layers = [
        LayerSpec("conv", c1, (7, 7), 1, 3, padding_mode="reflect"), LayerSpec("batchnorm"), LayerSpec("relu"),
        LayerSpec("conv", c2, (3, 3), 2, 1), LayerSpec("batchnorm"), LayerSpec("relu"),
        LayerSpec("conv", c3, (3, 3), 2, 1), LayerSpec("batchnorm"), LayerSpec("relu"),
    ]
    layers += [LayerSpec("residual_block", c3, (3, 3), 1, 1) for _ in range(n_res_blocks)]
    layers += [
        LayerSpec("deconv", c2, (3, 3), 2, 1, output_padding=1), LayerSpec("batchnorm"), LayerSpec("relu"),
        LayerSpec("deconv", c1, (3, 3), 2, 1, output_padding=1), LayerSpec("batchnorm"), LayerSpec("relu"),
        LayerSpec("conv", 3, (7, 7), 1, 3, padding_mode="reflect"), LayerSpec("tanh"),
    ]
    spec = NetworkSpec(tuple(layers), (resolution, resolution, 3), scale_factor)
    out = output_shapes(spec)["out"]
    if out != spec.input_shape:
        raise SpecError(f"generator maps {spec.input_shape} to {out}")
    return spec


def discriminator_spec(resolution: int = 128, scale_factor: int = 1, n_stride_layers: int = 6) -> NetworkSpec:
    """PatchGAN-style trunk of stride-2 4x4 convs with a patch head and a stroke-code head."""
    if n_stride_layers < 1 or resolution % (2 ** n_stride_layers):
        raise SpecError(f"resolution {resolution} not divisible by 2^{n_stride_layers}")
    final = resolution // 2 ** n_stride_layers
    if final < 2:
        raise SpecError(f"resolution {resolution} too small for {n_stride_layers} stride-2 layers")
    layers = []
    for i in range(n_stride_layers):
        layers += [LayerSpec("conv", _width(64 * 2 ** i, scale_factor), (4, 4), 2, 1),
                   LayerSpec("batchnorm"), LayerSpec("leaky_relu", slope=0.2)]
    heads = (
        ("src", (LayerSpec("conv", 1, (4, 4), 1, 1),)),
        ("st", (LayerSpec("conv", STROKE_DIM, (final, final), 1, 0),)),
    )
    spec = NetworkSpec(tuple(layers), (resolution, resolution, 3), scale_factor, heads)
    shapes = output_shapes(spec)
    if shapes["st"] != (1, 1, STROKE_DIM):
        raise SpecError(f"stroke head emits {shapes['st']}")
    return spec


def desk_generator_spec(resolution: int = DESK_RESOLUTION, scale_factor: int = DESK_SCALE,
                        n_res_blocks: int = DESK_RES_BLOCKS) -> NetworkSpec:
    return generator_spec(resolution, scale_factor, n_res_blocks)


def desk_discriminator_spec(resolution: int = DESK_RESOLUTION, scale_factor: int = DESK_SCALE,
                            n_stride_layers: int = DESK_D_LAYERS) -> NetworkSpec:
    return discriminator_spec(resolution, scale_factor, n_stride_layers)


class Discriminator(Network):
    """Returns ``(src_map, stroke_pred)`` with ``stroke_pred`` of shape (n, 32)."""

    def __call__(self, x: Tensor, train: bool = True, update_stats: bool = True):
        src_map, st_map = super().__call__(x, train, update_stats)
        return src_map, ops.reshape(st_map, (st_map.shape[0], STROKE_DIM))

    forward = __call__


def src_probability(src_map: Tensor) -> Tensor:
    """Per-sample real/fake probability: sigmoid of each patch, averaged over patches."""
    return ops.mean(ops.sigmoid(src_map), axes=(1, 2, 3))


def build_generator(spec: NetworkSpec, seed: int, params: Parameters | None = None) -> Network:
    if spec.heads:
        raise SpecError("generator spec must not declare heads")
    return Network(spec, params if params is not None else init_parameters(spec, seed))


def build_discriminator(spec: NetworkSpec, seed: int, params: Parameters | None = None) -> Discriminator:
    if [name for name, _ in spec.heads] != ["src", "st"]:
        raise SpecError("discriminator spec needs exactly the 'src' and 'st' heads")
    return Discriminator(spec, params if params is not None else init_parameters(spec, seed))
