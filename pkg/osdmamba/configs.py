"""
The `configs` module defines the validated configuration models used across
the package and resolves them from configuration files and command line
overrides. Models are built on Pydantic and reject unknown fields.

!!! example "Example: Resolving a Run Configuration"

    Configuration files are flat YAML mappings. Each key is routed to every
    model that declares it, and explicit overrides take precedence over
    values read from the file.

    ```python
    from pathlib import Path
    from osdmamba.configs import resolve_configs

    resolved = resolve_configs(Path("overfit.yaml"), {"epochs": 10})
    print(resolved.train.epochs)  # 10
    ```

Presets cover the common network sizes:

| Preset  | Base width | Depths         | Purpose                                  |
|---------|------------|----------------|------------------------------------------|
| `desk`  | 32         | `[2, 2, 9, 2]` | Default CPU-scale model                  |
| `full`  | 96         | `[2, 2, 9, 2]` | Full-width model                         |
| `tiny`  | 4          | `[1, 1, 1, 1]` | Hand-checkable model for unit tests      |
"""

import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Literal, NamedTuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

__all__ = [
    "CLASS_NAMES",
    "ConfigError",
    "NetworkConfig",
    "ResolvedConfig",
    "SceneConfig",
    "TrainConfig",
    "class_names",
    "describe_config",
    "parse_config_file",
    "resolve_configs",
]

logger = logging.getLogger("osdmamba")

CLASS_NAMES = ("sea_surface", "oil_spill", "look_alike", "ship", "land")


class ConfigError(ValueError):
    """Raised for unknown or invalid configuration values."""


def class_names(num_classes: int) -> list[str]:
    """Return display names for `num_classes` classes."""

    if num_classes == len(CLASS_NAMES):
        return list(CLASS_NAMES)

    return [f"class_{i}" for i in range(num_classes)]


class NetworkConfig(BaseModel):
    """Architecture hyperparameters of the segmentation network."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    in_channels: int = Field(1, ge=1)
    base_width: int = Field(32, ge=4)
    depths: tuple[int, int, int, int] = (2, 2, 9, 2)
    num_classes: int = Field(5, ge=2)
    state_dim: int = Field(8, ge=1)
    scan_rank: int | None = Field(None, ge=1)
    share_scan_parameters: bool = False
    convssm_channels: int = Field(8, ge=1)
    convssm_kernel: int = Field(3, ge=1)
    convssm_length: int = Field(1, ge=1)
    deep_supervision: bool = True
    decoder_style: Literal["asymmetric", "light", "plain"] = "asymmetric"
    heavy_placement: Literal["high", "low"] = "high"
    decoder_convssm: bool = True
    decoder_vss: bool = True
    zero_init_residual: bool = False

    @field_validator("base_width")
    @classmethod
    def _check_base_width(cls, value: int) -> int:
        if value % 4:
            raise ValueError("base_width must be a multiple of 4")

        return value

    @field_validator("depths")
    @classmethod
    def _check_depths(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(d < 1 for d in value):
            raise ValueError("every encoder stage needs at least one block")

        return value

    @field_validator("convssm_kernel")
    @classmethod
    def _check_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("convssm_kernel must be odd")

        return value

    @property
    def widths(self) -> list[int]:
        """Channel widths of the four encoder stages."""

        return [self.base_width * 2 ** i for i in range(4)]

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "NetworkConfig":
        """Return a named preset (`desk`, `full` or `tiny`) with optional overrides."""

        presets = {
            "desk": {},
            "full": {"base_width": 96},
            "tiny": {"base_width": 4, "depths": (1, 1, 1, 1), "state_dim": 2, "convssm_channels": 2},
        }
        if name not in presets:
            raise ConfigError(f"Unknown network preset: {name}")

        return cls(**{**presets[name], **overrides})


class TrainConfig(BaseModel):
    """Optimization settings of a training run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(0.01, ge=0)
    weight_decay: float = Field(1e-4, ge=0)
    batch_size: int = Field(4, ge=1)
    epochs: int = Field(100, ge=0)
    gamma: float = Field(2.0, ge=0)
    alpha_mode: Literal["inverse_frequency", "uniform"] = "inverse_frequency"
    loss: Literal["hybrid", "cross_entropy"] = "hybrid"
    schedule: Literal["constant", "cosine"] = "constant"
    holdout_fraction: float = Field(0.2, ge=0, lt=1)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    seed: int = 0


class SceneConfig(BaseModel):
    """Recipe for synthetic SAR-like scenes."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    height: int = Field(64, ge=8)
    width: int = Field(64, ge=8)
    num_classes: int = Field(5, ge=5, le=5)
    spill_fraction: float = Field(0.015, ge=0, le=1)
    lookalike_fraction: float = Field(0.01, ge=0, le=1)
    lookalike_probability: float = Field(0.5, ge=0, le=1)
    land_probability: float = Field(0.3, ge=0, le=1)
    max_land_fraction: float = Field(0.3, ge=0, le=1)
    max_ships: int = Field(3, ge=0)
    speckle: float = Field(0.25, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_fractions(self) -> "SceneConfig":
        total = self.spill_fraction + self.lookalike_fraction + self.max_land_fraction
        if total > 1:
            raise ValueError(f"class fractions sum to {total:.3f} > 1")

        return self


class ResolvedConfig(NamedTuple):
    """Fully resolved configuration of a command."""

    network: NetworkConfig
    train: TrainConfig
    scene: SceneConfig


def parse_config_file(path: Path | None) -> dict[str, Any]:
    """Parse a flat YAML configuration file.

    Args:
        path: Path to the configuration file, or `None`.

    Returns:
        The configuration mapping (empty when no file is given).

    Raises:
        ConfigError: If the file is not a flat mapping.
    """

    if path is None:
        logger.debug("No configuration file specified.")
        return {}

    logger.debug(f"Parsing configuration from {path}.")
    try:
        settings = yaml.safe_load(path.read_text()) or {}

    except OSError as exc:
        raise ConfigError(f"Cannot read configuration file {path}: {exc}") from exc

    except yaml.YAMLError as exc:
        raise ConfigError(f"Configuration file {path} is not valid YAML: {exc}") from exc

    if not isinstance(settings, dict):
        raise ConfigError(f"Configuration file {path} must contain a key: value mapping")

    for key, value in settings.items():
        if isinstance(value, dict):
            raise ConfigError(f"Configuration key {key!r} in {path} is nested; only flat mappings are supported")

    return settings


def resolve_configs(
    path: Path | None = None,
    overrides: dict[str, Any] | None = None,
    network_preset: str = "desk",
) -> ResolvedConfig:
    """Merge a configuration file with overrides and validate the result.

    Args:
        path: Optional flat YAML configuration file.
        overrides: Values taking precedence over the file; `None` values are ignored.
        network_preset: Preset the network configuration starts from.

    Returns:
        The validated network, training and scene configurations.

    Raises:
        ConfigError: For unknown keys or values failing validation.
    """

    settings = parse_config_file(path)
    settings.update({k: v for k, v in (overrides or {}).items() if v is not None})

    models = {"network": NetworkConfig, "train": TrainConfig, "scene": SceneConfig}
    known = {name for model in models.values() for name in model.model_fields}
    for key in settings:
        if key not in known:
            raise ConfigError(f"Unknown configuration key: {key}")

    try:
        network = NetworkConfig.preset(network_preset, **{k: v for k, v in settings.items() if k in NetworkConfig.model_fields})
        train = TrainConfig(**{k: v for k, v in settings.items() if k in TrainConfig.model_fields})
        scene = SceneConfig(**{k: v for k, v in settings.items() if k in SceneConfig.model_fields})

    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc

    return ResolvedConfig(network, train, scene)


def describe_config(*models: BaseModel | Mapping[str, Any]) -> list[str]:
    """Render configuration models (or plain settings mappings) as sorted `key = value` lines."""

    values = {}
    for model in models:
        values.update(model.model_dump() if isinstance(model, BaseModel) else model)

    return [f"{key} = {values[key]}" for key in sorted(values)]
