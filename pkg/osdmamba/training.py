"""
The `training` module fits network parameters to a dataset and evaluates
trained checkpoints.

!!! example "Example: Training on Synthetic Scenes"

    ```python
    from osdmamba.configs import NetworkConfig, SceneConfig, TrainConfig
    from osdmamba.data import generate_dataset
    from osdmamba.training import evaluate, train

    dataset = generate_dataset(2, SceneConfig(), seed=0)
    result = train(TrainConfig(epochs=200), NetworkConfig(), dataset)
    print(evaluate(result.checkpoint, dataset).report.miou)
    ```

Training shuffles the training split with a seeded generator, evaluates the
segmentation loss of every sample of a mini-batch, averages the gradients
and applies one AdamW update per batch. With `workers > 1` the per-sample
gradients are computed on a thread pool and summed in sample order, so the
parameter trajectory does not depend on the worker count. After every epoch
the held-out split is scored and a row is added to the training log.
"""

import contextlib
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .checkpoints import Checkpoint, save_checkpoint
from .configs import NetworkConfig, TrainConfig
from .data import DatasetError, Sample, split_dataset, write_pgm
from .losses import class_weights, segmentation_loss
from .metrics import ConfusionMatrix, MetricsReport
from .network import init_network_parameters, network_forward
from .optim import adamw_step, init_optimizer_state, scheduled_lr
from .tensor import *

__all__ = [
    "DivergenceError",
    "EpochRecord",
    "EvaluationResult",
    "TrainResult",
    "evaluate",
    "predict",
    "sample_gradients",
    "train",
]

logger = logging.getLogger("osdmamba.train")

LOG_HEADER = ("epoch", "loss", "miou", "oa", "oil_iou", "oil_fp")
OIL_CLASS = 1


class DivergenceError(RuntimeError):
    """Raised when the training loss or a gradient becomes non-finite.

    Attributes:
        checkpoint: The last checkpoint with finite parameters.
    """

    def __init__(self, message: str, checkpoint: Checkpoint) -> None:
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class EpochRecord:
    """One row of the training log."""

    epoch: int
    loss: float
    miou: float
    oa: float
    oil_iou: float
    oil_fp: float

    def as_row(self) -> list[str]:
        return [str(self.epoch)] + [f"{getattr(self, key):.6f}" for key in LOG_HEADER[1:]]


@dataclass(frozen=True, eq=False)
class TrainResult:
    """Final checkpoint and per-epoch log of a training run."""

    checkpoint: Checkpoint
    history: list[EpochRecord]


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    """Scores and predicted masks (keyed by sample name) of an evaluation."""

    report: MetricsReport
    predictions: dict[str, np.ndarray]


def _check_geometry(samples: Sequence[Sample], config: NetworkConfig) -> None:
    for sample in samples:
        channels, height, width = sample.image.shape
        if channels != config.in_channels:
            raise DatasetError(f"{sample.name}: image has {channels} channels, the network expects {config.in_channels}")

        if height % 32 or width % 32:
            raise DatasetError(f"{sample.name}: image size {height}x{width} is not a multiple of 32")

        if sample.mask.max(initial=0) >= config.num_classes:
            raise DatasetError(f"{sample.name}: label {sample.mask.max()} is out of range for {config.num_classes} classes")


def sample_gradients(
    params: dict[str, Tensor],
    sample: Sample,
    network_config: NetworkConfig,
    train_config: TrainConfig,
    alpha: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss of one sample and its gradient for every parameter name."""

    output = network_forward(sample.image, params, network_config)
    loss = segmentation_loss(output.logits, output.aux, sample.mask, alpha, train_config.gamma, train_config.loss)
    grads = backward(loss, accumulate=False)
    return loss.item(), {name: grads[t] if t in grads else np.zeros(t.shape) for name, t in params.items()}


def predict(params: dict[str, Tensor], config: NetworkConfig, image: Tensor) -> np.ndarray:
    """Arg-max class mask `[H, W]` of one image."""

    with no_grad():
        logits = network_forward(image, params, config).logits

    return np.argmax(logits.data, axis=0)


def _score(
    params: dict[str, Tensor],
    config: NetworkConfig,
    samples: Sequence[Sample],
    pool: ThreadPoolExecutor | None,
) -> EvaluationResult:
    if pool is None:
        masks = [predict(params, config, s.image) for s in samples]

    else:
        masks = list(pool.map(lambda s: predict(params, config, s.image), samples))

    confusion = ConfusionMatrix.empty(config.num_classes)
    for sample, mask in zip(samples, masks):
        confusion = confusion.merge(ConfusionMatrix.from_masks(mask, sample.mask, config.num_classes))

    return EvaluationResult(confusion.report(), {s.name: m for s, m in zip(samples, masks)})


def _batch_gradients(
    params: dict[str, Tensor],
    batch: list[Sample],
    network_config: NetworkConfig,
    train_config: TrainConfig,
    alpha: np.ndarray,
    pool: ThreadPoolExecutor | None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss and mean gradients of a mini-batch, summed in sample order."""

    args = (network_config, train_config, alpha)
    if pool is None:
        results = [sample_gradients(params, sample, *args) for sample in batch]

    else:
        results = list(pool.map(lambda sample: sample_gradients(params, sample, *args), batch))

    loss = sum(r[0] for r in results) / len(batch)
    grads = {name: sum(r[1][name] for r in results) / len(batch) for name in params}
    return loss, grads


def _write_log_row(path: Path | None, row: Sequence[str], mode: str = "a") -> None:
    if path is None:
        return

    with path.open(mode, newline="") as handle:
        csv.writer(handle).writerow(row)


def train(
    config: TrainConfig,
    network_config: NetworkConfig,
    dataset: Sequence[Sample],
    workers: int = 1,
    log_path: Path | None = None,
    checkpoint_path: Path | None = None,
    dtype: Literal["f64", "f32"] = "f64",
) -> TrainResult:
    """Train a freshly initialized network.

    Args:
        config: Optimization settings, including the seed.
        network_config: Architecture of the network.
        dataset: Samples, split into training and held-out subsets.
        workers: Threads computing per-sample gradients.
        log_path: Optional CSV file receiving one row per epoch.
        checkpoint_path: Optional file receiving the final checkpoint, or
            the last good one when training diverges.
        dtype: Storage precision of the saved checkpoints.

    Returns:
        The final checkpoint and the per-epoch log.

    Raises:
        DatasetError: If the dataset is empty or does not fit the network.
        DivergenceError: If the loss or a gradient becomes non-finite.
    """

    if not dataset:
        raise DatasetError("Cannot train on an empty dataset")

    _check_geometry(dataset, network_config)
    train_set, holdout = split_dataset(dataset, config.holdout_fraction, config.seed)
    if not holdout:
        logger.warning("Held-out split is empty; epoch metrics are computed on the training split.")
        holdout = train_set

    alpha = class_weights([s.mask for s in train_set], network_config.num_classes, config.alpha_mode)
    params = init_network_parameters(network_config, seed=config.seed)
    state = init_optimizer_state(params, config.beta1, config.beta2, config.adam_eps)
    rng = np.random.default_rng(config.seed)

    batches_per_epoch = math.ceil(len(train_set) / config.batch_size)
    total_steps = config.epochs * batches_per_epoch
    logger.info(f"Training on {len(train_set)} samples ({len(holdout)} held out) for {total_steps} steps.")

    history = []
    _write_log_row(log_path, LOG_HEADER, mode="w")
    with ThreadPoolExecutor(max_workers=workers) if workers > 1 else contextlib.nullcontext() as pool:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_set))
            losses = []
            for start in range(0, len(order), config.batch_size):
                batch = [train_set[i] for i in order[start:start + config.batch_size]]
                last_good = Checkpoint(network_config, params, state.step, state, dtype)

                try:
                    loss, grads = _batch_gradients(params, batch, network_config, config, alpha, pool)
                    if not math.isfinite(loss):
                        raise NumericError(f"Non-finite training loss at step {state.step + 1}")

                    lr = scheduled_lr(config.lr, config.schedule, state.step, total_steps)
                    params, state = adamw_step(params, grads, state, lr, config.weight_decay)

                except NumericError as exc:
                    if checkpoint_path is not None:
                        save_checkpoint(last_good, checkpoint_path)

                    raise DivergenceError(str(exc), last_good) from exc

                losses.append(loss)

            report = _score(params, network_config, holdout, pool).report
            record = EpochRecord(
                epoch=epoch,
                loss=float(np.mean(losses)),
                miou=report.miou,
                oa=report.oa,
                oil_iou=report.iou[OIL_CLASS],
                oil_fp=report.fp_rate[OIL_CLASS],
            )
            history.append(record)
            _write_log_row(log_path, record.as_row())
            logger.info(
                f"Epoch {epoch}/{config.epochs}: loss={record.loss:.4f} mIoU={record.miou:.4f} "
                f"OA={record.oa:.4f} oil IoU={record.oil_iou:.4f} oil FP={record.oil_fp:.4f}"
            )

    checkpoint = Checkpoint(network_config, params, state.step, state, dtype)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint, checkpoint_path)

    return TrainResult(checkpoint, history)


def evaluate(
    checkpoint: Checkpoint,
    dataset: Sequence[Sample],
    masks_out: Path | None = None,
    workers: int = 1,
) -> EvaluationResult:
    """Score a checkpoint on a dataset.

    Args:
        checkpoint: Trained network.
        dataset: Samples to segment.
        masks_out: Optional directory receiving one `<name>.pgm` predicted mask per sample.
        workers: Threads running the forward passes.

    Returns:
        The metrics report and the predicted masks.

    Raises:
        DatasetError: If the samples do not fit the network geometry.
    """

    _check_geometry(dataset, checkpoint.network)
    with ThreadPoolExecutor(max_workers=workers) if workers > 1 else contextlib.nullcontext() as pool:
        result = _score(checkpoint.params, checkpoint.network, dataset, pool)

    if masks_out is not None:
        masks_out.mkdir(parents=True, exist_ok=True)
        for name, mask in result.predictions.items():
            write_pgm(masks_out / f"{name}.pgm", mask)

        logger.info(f"Wrote {len(result.predictions)} predicted masks to {masks_out}.")

    return result
