from .architectures import (
    DESK_D_LAYERS,
    DESK_RES_BLOCKS,
    DESK_RESOLUTION,
    DESK_SCALE,
    STROKE_DIM,
    Discriminator,
    build_discriminator,
    build_generator,
    desk_discriminator_spec,
    desk_generator_spec,
    discriminator_spec,
    generator_spec,
    src_probability,
)
from .layers import (
    LayerSpec,
    Network,
    NetworkSpec,
    Parameters,
    SpecError,
    activation,
    batch_norm,
    init_parameters,
    output_shapes,
    trace_shapes,
)

__all__ = [
    "DESK_D_LAYERS", "DESK_RES_BLOCKS", "DESK_RESOLUTION", "DESK_SCALE", "STROKE_DIM", "Discriminator",
    "LayerSpec", "Network", "NetworkSpec", "Parameters", "SpecError", "activation", "batch_norm",
    "build_discriminator", "build_generator", "desk_discriminator_spec", "desk_generator_spec",
    "discriminator_spec", "generator_spec", "init_parameters", "output_shapes", "src_probability",
    "trace_shapes",
]
