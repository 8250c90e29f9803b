"""
The `network` module assembles the building blocks from `osdmamba.blocks`
into the full segmentation network and provides the complexity counters.

!!! example "Example: Segmenting an Image"

    ```python
    from osdmamba.configs import NetworkConfig
    from osdmamba.network import init_network_parameters, network_forward

    config = NetworkConfig.preset("tiny")
    params = init_network_parameters(config, seed=0)
    out = network_forward(Tensor(np.zeros((1, 64, 64))), params, config)
    print(out.logits.shape)  # (5, 64, 64)
    ```

The encoder embeds 4x4 patches and runs four stages of VSS blocks, halving
the resolution between stages. It returns the features at 1/4, 1/8, 1/16 and
1/32 of the input resolution. The decoder walks back up in four stages:

| Stage | Resolution    | Skip  | Aux head |
|-------|---------------|-------|----------|
| 1     | 1/32 -> 1/16  | f16   | `aux16`  |
| 2     | 1/16 -> 1/8   | f8    | `aux8`   |
| 3     | 1/8 -> 1/4    | f4    | `aux4`   |
| 4     | 1/4 -> 1      | none  | `main`   |

Stage 4 realizes the final 4x upsampling with two patch expansions and runs
its blocks at 1/2 resolution between them. Depending on the configuration a
stage runs the heavy block (ConvSSM, VSS, VSS), the light block (VSS, VSS),
or no block at all.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .blocks import *
from .blocks import PATCH_SIZE
from .configs import NetworkConfig
from .convssm import ConvSSMParameters, convssm_flops
from .tensor import *

__all__ = [
    "DecoderStage",
    "SegOutput",
    "count_flops",
    "count_params",
    "decoder_forward",
    "decoder_plan",
    "encoder_forward",
    "init_network_parameters",
    "network_forward",
]

logger = logging.getLogger("osdmamba")


class SegOutput(NamedTuple):
    """Network output.

    Attributes:
        logits: Main logits `[K, H, W]` at input resolution.
        aux: Auxiliary logits at 1/4, 1/8 and 1/16 resolution, or `None`
            when deep supervision is disabled.
    """

    logits: Tensor
    aux: tuple[Tensor, Tensor, Tensor] | None


@dataclass(frozen=True)
class DecoderStage:
    """Wiring of one decoder stage.

    Attributes:
        index: Stage number, 1 to 4.
        in_channels: Channels entering the stage.
        channels: Channels the stage blocks run at.
        blocks: Block kinds in execution order (`"convssm"` or `"vss"`).
        skip: Whether an encoder skip is fused after upsampling.
        aux: Name of the auxiliary head tapping the stage output, if any.
    """

    index: int
    in_channels: int
    channels: int
    blocks: tuple[str, ...]
    skip: bool
    aux: str | None

    @property
    def prefix(self) -> str:
        return f"decoder.stage{self.index}"


def decoder_plan(config: NetworkConfig) -> list[DecoderStage]:
    """Return the wiring of the four decoder stages for a configuration."""

    widths = config.widths
    heavy_stages = {3, 4} if config.heavy_placement == "high" else {1, 2}
    vss = ("vss", "vss") if config.decoder_vss else ()

    def blocks(index: int) -> tuple[str, ...]:
        if config.decoder_style == "plain":
            return ()

        if config.decoder_style == "asymmetric" and index in heavy_stages and config.decoder_convssm:
            return ("convssm",) + vss

        return vss

    return [
        DecoderStage(1, widths[3], widths[2], blocks(1), True, "aux16"),
        DecoderStage(2, widths[2], widths[1], blocks(2), True, "aux8"),
        DecoderStage(3, widths[1], widths[0], blocks(3), True, "aux4"),
        DecoderStage(4, widths[0], widths[0] // 2, blocks(4), False, None),
    ]


def _init_stage_blocks(params: Parameters, stage: DecoderStage, config: NetworkConfig, rng: np.random.Generator) -> None:
    for j, kind in enumerate(stage.blocks, start=1):
        prefix = f"{stage.prefix}.block{j}"
        if kind == "convssm":
            init_convssm_wrapper(params, prefix, stage.channels, config, rng)

        else:
            init_vss_block(params, prefix, stage.channels, config, rng)


def init_network_parameters(config: NetworkConfig, seed: int = 0) -> Parameters:
    """Create the full set of network parameters.

    Args:
        config: Network architecture.
        seed: Seed of the initialization generator.

    Returns:
        Parameters keyed by hierarchical name, e.g. `encoder.stage2.block1.norm.weight`.
    """

    rng = np.random.default_rng(seed)
    params: Parameters = {}
    widths = config.widths

    init_patch_embed(params, config, rng, prefix="encoder.embed")
    for i, (width, depth) in enumerate(zip(widths, config.depths), start=1):
        for j in range(1, depth + 1):
            init_vss_block(params, f"encoder.stage{i}.block{j}", width, config, rng)

        if i < len(widths):
            init_patch_merge(params, f"encoder.merge{i}", width, rng)

    for stage in decoder_plan(config):
        init_patch_expand(params, f"{stage.prefix}.expand", stage.in_channels, rng)
        if stage.skip:
            init_linear(params, f"{stage.prefix}.skip", stage.channels, stage.channels, rng)

        _init_stage_blocks(params, stage, config, rng)
        if stage.index == 4:
            init_patch_expand(params, f"{stage.prefix}.expand_final", stage.channels, rng)

        if stage.aux and config.deep_supervision:
            init_conv(params, f"head.{stage.aux}", stage.channels, config.num_classes, 1, rng)

    init_conv(params, "head.main", widths[0] // 4, config.num_classes, 1, rng)

    logger.debug(f"Initialized {len(params)} parameter tensors ({count_params(params)} values).")
    return params


def encoder_forward(image: Tensor, params: Parameters, config: NetworkConfig) -> list[Tensor]:
    """Encode an image into multi-scale features.

    Args:
        image: Input image `[Cin, H, W]`, `H` and `W` multiples of 32.
        params: Network parameters.
        config: Network architecture.

    Returns:
        The features `[f4, f8, f16, f32]` of shapes `[H/4, W/4, C]` up to
        `[H/32, W/32, 8C]`.
    """

    x = patch_embed(image, params, prefix="encoder.embed")
    features = []
    for i, depth in enumerate(config.depths, start=1):
        for j in range(1, depth + 1):
            x = vss_block(x, params, f"encoder.stage{i}.block{j}")

        features.append(x)
        if i < len(config.depths):
            x = patch_merge(x, params, f"encoder.merge{i}")

    return features


def _run_stage_blocks(x: Tensor, params: Parameters, stage: DecoderStage, config: NetworkConfig) -> Tensor:
    for j, kind in enumerate(stage.blocks, start=1):
        prefix = f"{stage.prefix}.block{j}"
        if kind == "convssm":
            x = convssm_wrapper(x, params, prefix, length=config.convssm_length)

        else:
            x = vss_block(x, params, prefix)

    return x


def decoder_forward(features: list[Tensor], params: Parameters, config: NetworkConfig) -> SegOutput:
    """Decode encoder features into main and auxiliary logits.

    Args:
        features: Output of `encoder_forward`.
        params: Network parameters.
        config: Network architecture.

    Returns:
        The main logits at input resolution and, with deep supervision, the
        auxiliary logits at 1/4, 1/8 and 1/16 resolution.
    """

    f4, f8, f16, x = features
    skips = {1: f16, 2: f8, 3: f4}
    aux = {}

    for stage in decoder_plan(config):
        x = patch_expand(x, params, f"{stage.prefix}.expand")
        if stage.skip:
            x = x + linear(skips[stage.index], params[f"{stage.prefix}.skip.weight"], params[f"{stage.prefix}.skip.bias"])

        x = _run_stage_blocks(x, params, stage, config)
        if stage.index == 4:
            x = patch_expand(x, params, f"{stage.prefix}.expand_final")

        if stage.aux and config.deep_supervision:
            aux[stage.aux] = pointwise_head(x, params, f"head.{stage.aux}")

    logits = pointwise_head(x, params, "head.main")
    if not config.deep_supervision:
        return SegOutput(logits, None)

    return SegOutput(logits, (aux["aux4"], aux["aux8"], aux["aux16"]))


def network_forward(image: Tensor, params: Parameters, config: NetworkConfig) -> SegOutput:
    """Run the encoder and decoder on one `[Cin, H, W]` image."""

    return decoder_forward(encoder_forward(image, params, config), params, config)


def count_params(params: Parameters) -> int:
    """Total number of learnable values."""

    return sum(tensor.size for tensor in params.values())


def _vss_flops(height: int, width: int, channels: int, config: NetworkConfig) -> int:
    positions = height * width
    inner = 2 * channels
    state_dim = config.state_dim
    rank = config.scan_rank or max(1, inner // 4)

    projections = positions * channels * inner * 2 + positions * inner * channels
    dwconv = positions * inner * 9
    scan_projections = positions * inner * (rank + 2 * state_dim) + positions * rank * inner
    recurrence = positions * inner * (4 * state_dim + 2)
    return projections + dwconv + 4 * (scan_projections + recurrence)


def _convssm_flops(height: int, width: int, channels: int, config: NetworkConfig) -> int:
    p, k = config.convssm_channels, config.convssm_kernel
    shapes = ConvSSMParameters(
        A=zeros(p, p, 1, 1), B=zeros(p, channels, k, k), C=zeros(channels, p, k, k), D=zeros(channels, channels, k, k)
    )
    return convssm_flops(shapes, height, width, config.convssm_length)


def _block_flops(kind: str, height: int, width: int, channels: int, config: NetworkConfig) -> int:
    if kind == "convssm":
        return _convssm_flops(height, width, channels, config)

    return _vss_flops(height, width, channels, config)


def count_flops(config: NetworkConfig, height: int, width: int) -> int:
    """Multiply count of one forward pass on a `height x width` image.

    Convolutions count `positions * Cout * Cin / groups * k * k`, linear
    layers `positions * Din * Dout`, every directional selective scan its
    projections plus `L * D * (4N + 2)` for the recurrence, and ConvSSM
    blocks the terms of `convssm_flops`. Normalizations and elementwise
    activations are not counted.
    """

    widths = config.widths
    h, w = height // PATCH_SIZE, width // PATCH_SIZE
    total = h * w * widths[0] * config.in_channels * PATCH_SIZE * PATCH_SIZE

    for i, (channels, depth) in enumerate(zip(widths, config.depths)):
        scale = 2 ** i
        total += depth * _vss_flops(h // scale, w // scale, channels, config)
        if i < len(widths) - 1:
            total += (h // scale // 2) * (w // scale // 2) * 4 * channels * 2 * channels

    for stage in decoder_plan(config):
        # Stage blocks run at 1/16, 1/8, 1/4 and 1/2 of the input resolution
        sh, sw = (h * 2 // 2 ** (4 - stage.index), w * 2 // 2 ** (4 - stage.index))

        total += (sh // 2) * (sw // 2) * stage.in_channels * 2 * stage.in_channels
        if stage.skip:
            total += sh * sw * stage.channels * stage.channels

        total += sum(_block_flops(kind, sh, sw, stage.channels, config) for kind in stage.blocks)
        if stage.aux and config.deep_supervision:
            total += sh * sw * stage.channels * config.num_classes

    # Final expansion from C/2 to C/4 channels runs on the 1/2 resolution map
    final_h, final_w, final_channels = 2 * h, 2 * w, widths[0] // 2
    total += final_h * final_w * final_channels * 2 * final_channels
    total += height * width * (widths[0] // 4) * config.num_classes
    return total
