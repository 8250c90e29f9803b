"""
The `blocks` module provides the building blocks of the segmentation
network. Every block comes as a pair of functions: an `init_*` factory that
registers the block's learnable tensors in a flat parameter dictionary under
a hierarchical prefix, and a forward function that reads them back from the
same prefix.

!!! example "Example: Creating and Applying a Block"

    ```python
    from osdmamba.blocks import init_vss_block, vss_block
    from osdmamba.configs import NetworkConfig

    config = NetworkConfig()
    params, rng = {}, np.random.default_rng(0)
    init_vss_block(params, "demo", channels=8, config=config, rng=rng)
    y = vss_block(x, params, "demo")
    ```

Feature maps inside the network use the channels-last layout `[H, W, C]`.
Blocks that rely on `conv2d` transpose to `[1, C, H, W]` and back.
"""

import logging

import numpy as np

from .configs import NetworkConfig
from .convssm import ConvSSMParameters, ConvState, convssm_scan_parallel, convssm_scan_sequential, init_hippo
from .scan import S6Parameters, ScanDirection, init_s6_parameters, ss2d
from .tensor import *

__all__ = [
    "Parameters",
    "convssm_wrapper",
    "init_conv",
    "init_convssm_wrapper",
    "init_layer_norm",
    "init_linear",
    "init_patch_embed",
    "init_patch_expand",
    "init_patch_merge",
    "init_vss_block",
    "merge_neighborhoods",
    "patch_embed",
    "patch_expand",
    "patch_merge",
    "pointwise_head",
    "vss_block",
]

logger = logging.getLogger("osdmamba")

Parameters = dict[str, Tensor]

PATCH_SIZE = 4
SIZE_MULTIPLE = 32


def _register(params: Parameters, name: str, array: np.ndarray) -> Tensor:
    if name in params:
        raise ContractError(f"Parameter {name} is already registered")

    tensor = Tensor(array, requires_grad=True, name=name)
    params[name] = tensor
    return tensor


def init_linear(
    params: Parameters,
    prefix: str,
    in_features: int,
    out_features: int,
    rng: np.random.Generator,
    bias: bool = True,
    zero: bool = False,
) -> None:
    """Register a `[out, in]` weight (and `[out]` bias) drawn from `U(-1/sqrt(in), 1/sqrt(in))`."""

    bound = in_features ** -0.5
    shape = (out_features, in_features)
    _register(params, f"{prefix}.weight", np.zeros(shape) if zero else rng.uniform(-bound, bound, shape))
    if bias:
        _register(params, f"{prefix}.bias", np.zeros(out_features) if zero else rng.uniform(-bound, bound, out_features))


def init_conv(
    params: Parameters,
    prefix: str,
    in_channels: int,
    out_channels: int,
    kernel_size: int,
    rng: np.random.Generator,
    groups: int = 1,
) -> None:
    """Register a `[out, in / groups, k, k]` kernel and `[out]` bias."""

    fan_in = in_channels // groups * kernel_size * kernel_size
    bound = fan_in ** -0.5
    _register(params, f"{prefix}.weight", rng.uniform(-bound, bound, (out_channels, in_channels // groups, kernel_size, kernel_size)))
    _register(params, f"{prefix}.bias", rng.uniform(-bound, bound, out_channels))


def init_layer_norm(params: Parameters, prefix: str, channels: int) -> None:
    """Register a unit scale and zero shift."""

    _register(params, f"{prefix}.weight", np.ones(channels))
    _register(params, f"{prefix}.bias", np.zeros(channels))


def _norm(x: Tensor, params: Parameters, prefix: str) -> Tensor:
    return layer_norm(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"])


def _linear(x: Tensor, params: Parameters, prefix: str) -> Tensor:
    return linear(x, params[f"{prefix}.weight"], params.get(f"{prefix}.bias"))


def _channels_first(x: Tensor) -> Tensor:
    return x.transpose(2, 0, 1)[None]


def _channels_last(x: Tensor) -> Tensor:
    return x[0].transpose(1, 2, 0)


def init_patch_embed(params: Parameters, config: NetworkConfig, rng: np.random.Generator, prefix: str = "embed") -> None:
    """Register the strided patch projection and its normalization."""

    init_conv(params, f"{prefix}.proj", config.in_channels, config.base_width, PATCH_SIZE, rng)
    init_layer_norm(params, f"{prefix}.norm", config.base_width)


def patch_embed(image: Tensor, params: Parameters, prefix: str = "embed") -> Tensor:
    """Split an image into 4x4 patches and embed them.

    Args:
        image: Input of shape `[Cin, H, W]` with `H` and `W` multiples of 32.
        params: Network parameters.
        prefix: Parameter prefix of the embedding.

    Returns:
        Patch embeddings of shape `[H / 4, W / 4, C]`.

    Raises:
        ContractError: If `H` or `W` is not a multiple of 32.
    """

    if image.ndim != 3:
        raise DimensionError(f"patch_embed: expected a [Cin, H, W] image, got {image.shape}")

    height, width = image.shape[1:]
    if height % SIZE_MULTIPLE or width % SIZE_MULTIPLE:
        raise ContractError(f"H and W must be multiples of {SIZE_MULTIPLE}, got {height}x{width}")

    x = conv2d(
        image[None], params[f"{prefix}.proj.weight"], params[f"{prefix}.proj.bias"], stride=PATCH_SIZE
    )
    return _norm(_channels_last(x), params, f"{prefix}.norm")


def init_patch_merge(params: Parameters, prefix: str, channels: int, rng: np.random.Generator) -> None:
    """Register the normalization and `4c -> 2c` reduction of a merge layer."""

    init_layer_norm(params, f"{prefix}.norm", 4 * channels)
    init_linear(params, f"{prefix}.reduction", 4 * channels, 2 * channels, rng, bias=False)


def merge_neighborhoods(x: Tensor) -> Tensor:
    """Concatenate every 2x2 neighbourhood of a `[h, w, c]` map into `[h/2, w/2, 4c]`.

    The four positions are concatenated in row-major order: top-left,
    top-right, bottom-left, bottom-right.
    """

    height, width, channels = x.shape
    if height % 2 or width % 2:
        raise DimensionError(f"patch_merge: spatial axes must be even, got {height}x{width}")

    blocks = x.reshape(height // 2, 2, width // 2, 2, channels).transpose(0, 2, 1, 3, 4)
    return blocks.reshape(height // 2, width // 2, 4 * channels)


def patch_merge(x: Tensor, params: Parameters, prefix: str) -> Tensor:
    """Downsample a `[h, w, c]` map to `[h/2, w/2, 2c]`."""

    merged = _norm(merge_neighborhoods(x), params, f"{prefix}.norm")
    return _linear(merged, params, f"{prefix}.reduction")


def init_patch_expand(params: Parameters, prefix: str, channels: int, rng: np.random.Generator) -> None:
    """Register the `c -> 2c` projection of an expansion layer."""

    init_linear(params, prefix, channels, 2 * channels, rng, bias=False)


def patch_expand(x: Tensor, params: Parameters, prefix: str) -> Tensor:
    """Upsample a `[h, w, c]` map to `[2h, 2w, c/2]`.

    The map is projected to `2c` channels, which are then rearranged into
    2x2 spatial blocks of `c/2` channels (pixel shuffle, row-major order).
    """

    height, width, channels = x.shape
    if channels % 2:
        raise DimensionError(f"patch_expand: channel axis must be even, got {channels}")

    y = _linear(x, params, prefix)
    y = y.reshape(height, width, 2, 2, channels // 2).transpose(0, 2, 1, 3, 4)
    return y.reshape(2 * height, 2 * width, channels // 2)


def _scan_prefixes(prefix: str, shared: bool) -> list[str]:
    if shared:
        return [f"{prefix}.ss2d.shared"] * len(ScanDirection)

    return [f"{prefix}.ss2d.dir{d.value}" for d in ScanDirection]


def init_vss_block(
    params: Parameters,
    prefix: str,
    channels: int,
    config: NetworkConfig,
    rng: np.random.Generator,
) -> None:
    """Register the tensors of a visual state space block with `channels` channels."""

    inner = 2 * channels
    init_layer_norm(params, f"{prefix}.norm", channels)
    init_linear(params, f"{prefix}.in_proj", channels, inner, rng)
    init_linear(params, f"{prefix}.gate_proj", channels, inner, rng)
    init_conv(params, f"{prefix}.dwconv", inner, inner, 3, rng, groups=inner)

    for scan_prefix in dict.fromkeys(_scan_prefixes(prefix, config.share_scan_parameters)):
        s6 = init_s6_parameters(inner, config.state_dim, config.scan_rank, rng)
        for role, tensor in s6.tensors().items():
            _register(params, f"{scan_prefix}.{role}", tensor.data)

    init_layer_norm(params, f"{prefix}.out_norm", inner)
    init_linear(params, f"{prefix}.out_proj", inner, channels, rng, zero=config.zero_init_residual)


def vss_block(x: Tensor, params: Parameters, prefix: str) -> Tensor:
    """Apply a residual visual state space block to a `[h, w, c]` map.

    The main path projects the normalized input to `2c` channels and applies
    a depthwise 3x3 convolution, SiLU, the four-direction selective scan and
    a layer norm. It is gated by `silu(linear(u))` and projected back to `c`
    channels before being added to the input.
    """

    u = _norm(x, params, f"{prefix}.norm")

    main = _linear(u, params, f"{prefix}.in_proj")
    inner = main.shape[-1]
    main = conv2d(
        _channels_first(main), params[f"{prefix}.dwconv.weight"], params[f"{prefix}.dwconv.bias"],
        padding=1, groups=inner
    )
    main = silu(_channels_last(main))

    shared = f"{prefix}.ss2d.shared.A_log" in params
    scan_params = [
        S6Parameters.from_tensors({
            role: params[f"{scan_prefix}.{role}"] for role in ("x_proj.weight", "dt_proj.weight", "dt_proj.bias", "A_log", "D")
        })
        for scan_prefix in _scan_prefixes(prefix, shared)
    ]
    main = _norm(ss2d(main, scan_params), params, f"{prefix}.out_norm")

    gate = silu(_linear(u, params, f"{prefix}.gate_proj"))
    return x + _linear(main * gate, params, f"{prefix}.out_proj")


def init_convssm_wrapper(
    params: Parameters,
    prefix: str,
    channels: int,
    config: NetworkConfig,
    rng: np.random.Generator,
) -> None:
    """Register a ConvSSM mapping `channels -> P -> channels` and its learned initial state."""

    kernels = init_hippo(
        config.convssm_channels, config.convssm_kernel,
        input_channels=channels, output_channels=channels, rng=rng
    )
    for role, tensor in kernels.tensors().items():
        _register(params, f"{prefix}.{role}", tensor.data)

    _register(params, f"{prefix}.state0", rng.uniform(-0.5, 0.5, (config.convssm_channels, 1, 1)))


def convssm_wrapper(x: Tensor, params: Parameters, prefix: str, length: int = 1) -> Tensor:
    """Residual ConvSSM over a `[h, w, c]` map.

    The map is fed `length` times as the input sequence, starting from the
    learned initial state broadcast over the grid. The output of the last
    step is added to the input.
    """

    height, width, channels = x.shape
    kernels = ConvSSMParameters.from_tensors({role: params[f"{prefix}.{role}"] for role in ("A", "B", "C", "D")})

    u = x.transpose(2, 0, 1)
    x0 = ConvState(params[f"{prefix}.state0"] * ones(kernels.state_channels, height, width))
    if length == 1:
        y, _ = convssm_scan_sequential(u[None], x0, kernels)

    else:
        y, _ = convssm_scan_parallel(stack([u] * length), x0, kernels)

    return x + y[-1].transpose(1, 2, 0)


def pointwise_head(x: Tensor, params: Parameters, prefix: str) -> Tensor:
    """Apply a 1x1 convolution to a `[h, w, c]` map, returning `[K, h, w]` logits."""

    return conv2d(_channels_first(x), params[f"{prefix}.weight"], params[f"{prefix}.bias"])[0]
