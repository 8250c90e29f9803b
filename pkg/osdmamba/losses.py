"""
The `losses` module implements the training criteria of the segmentation
network. The default criterion is a hybrid of a class-weighted focal loss
and a soft Jaccard loss:

```
L = mean_i [ -alpha_t (1 - p_t)^gamma log(p_t) ] + (1 - soft IoU)
```

where `p_t` is the predicted probability of the true class at pixel `i`.
The focal term down-weights well classified pixels while `alpha` boosts
rare classes, and the Jaccard term optimizes region overlap directly.

!!! example "Example: Scoring a Prediction"

    ```python
    from osdmamba.losses import class_weights, hybrid_loss

    alpha = class_weights([mask], num_classes=5)
    loss = hybrid_loss(softmax(logits, axis=0), mask, alpha, gamma=2.0)
    ```

Probabilities are `[K, H, W]` tensors and targets are integer `[H, W]`
NumPy arrays of class ids.
"""

import logging
from typing import Callable, Literal, Sequence

import numpy as np

from .tensor import *

__all__ = [
    "class_weights",
    "cross_entropy_loss",
    "downsample_mask",
    "focal_loss",
    "hybrid_loss",
    "jaccard_loss",
    "one_hot",
    "segmentation_loss",
]

logger = logging.getLogger("osdmamba")

PROBABILITY_FLOOR = 1e-12
JACCARD_EPS = 1e-6

Criterion = Callable[[Tensor, np.ndarray, np.ndarray | None, float], Tensor]


def one_hot(target: np.ndarray, num_classes: int) -> np.ndarray:
    """Encode an `[H, W]` mask as a `[K, H, W]` float indicator array.

    Raises:
        ContractError: If a label lies outside `[0, num_classes)`.
    """

    target = np.asarray(target)
    if target.size and (target.min() < 0 or target.max() >= num_classes):
        raise ContractError(f"Mask labels must lie in [0, {num_classes}), got range [{target.min()}, {target.max()}]")

    return (np.arange(num_classes)[:, None, None] == target[None]).astype(np.float64)


def _check_inputs(probs: Tensor, target: np.ndarray) -> None:
    if probs.ndim != 3 or probs.shape[1:] != np.shape(target):
        raise DimensionError(f"Expected [K, H, W] probabilities matching the {np.shape(target)} mask, got {probs.shape}")

    data = probs.data
    if np.any(data < 0) or np.any(data > 1):
        raise ContractError("Probabilities must lie in [0, 1]")

    if np.any(np.abs(data.sum(axis=0) - 1) > 1e-6):
        raise ContractError("Probabilities must sum to 1 over the class axis")


def focal_loss(probs: Tensor, target: np.ndarray, alpha: np.ndarray | None = None, gamma: float = 2.0) -> Tensor:
    """Pixel-mean class-weighted focal loss.

    Args:
        probs: Class probabilities `[K, H, W]`.
        target: Class ids `[H, W]`.
        alpha: Per-class weights `[K]`, all ones when omitted.
        gamma: Focusing exponent, `gamma >= 0`.

    Returns:
        A scalar tensor.

    Raises:
        ContractError: For invalid probabilities or labels.
    """

    _check_inputs(probs, target)
    if gamma < 0:
        raise ContractError(f"gamma must be non-negative, got {gamma}")

    num_classes = probs.shape[0]
    alpha = np.ones(num_classes) if alpha is None else np.asarray(alpha, dtype=np.float64)

    p_t = (probs * one_hot(target, num_classes)).sum(axis=0)
    weights = alpha[np.asarray(target)]
    per_pixel = (weights * (1 - p_t) ** gamma) * log(clamp_min(p_t, PROBABILITY_FLOOR))
    return -per_pixel.mean()


def jaccard_loss(probs: Tensor, target: np.ndarray, eps: float = JACCARD_EPS) -> Tensor:
    """One minus the class-averaged soft intersection over union.

    Classes absent from the target that also receive (almost) no predicted
    mass are skipped. When every class is skipped the loss is zero.

    Args:
        probs: Class probabilities `[K, H, W]`.
        target: Class ids `[H, W]`.
        eps: Smoothing added to intersection and union.

    Returns:
        A scalar tensor in `[0, 1]`.
    """

    _check_inputs(probs, target)
    indicator = one_hot(target, probs.shape[0])

    intersection = (probs * indicator).sum(axis=(1, 2))
    predicted = probs.sum(axis=(1, 2))
    actual = indicator.sum(axis=(1, 2))
    ratio = (intersection + eps) / (predicted + actual - intersection + eps)

    kept = ~((actual == 0) & (predicted.data <= eps))
    if not kept.any():
        return 0 * ratio.sum()

    return 1 - (ratio * kept.astype(np.float64)).sum() / kept.sum()


def hybrid_loss(probs: Tensor, target: np.ndarray, alpha: np.ndarray | None = None, gamma: float = 2.0) -> Tensor:
    """Sum of `focal_loss` and `jaccard_loss`."""

    return focal_loss(probs, target, alpha, gamma) + jaccard_loss(probs, target)


def cross_entropy_loss(
    probs: Tensor,
    target: np.ndarray,
    alpha: np.ndarray | None = None,
    gamma: float = 0.0,
) -> Tensor:
    """Unweighted pixel-mean cross-entropy; `alpha` and `gamma` are ignored."""

    return focal_loss(probs, target, None, 0.0)


def downsample_mask(target: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbour downsampling of a mask, keeping every `factor`-th pixel."""

    height, width = np.shape(target)
    if height % factor or width % factor:
        raise DimensionError(f"Mask of shape {height}x{width} is not divisible by {factor}")

    return np.asarray(target)[::factor, ::factor]


_CRITERIA: dict[str, Criterion] = {"hybrid": hybrid_loss, "cross_entropy": cross_entropy_loss}


def segmentation_loss(
    logits: Tensor,
    aux: Sequence[Tensor] | None,
    target: np.ndarray,
    alpha: np.ndarray | None = None,
    gamma: float = 2.0,
    criterion: Literal["hybrid", "cross_entropy"] = "hybrid",
) -> Tensor:
    """Total loss of one network output with unit-weighted deep supervision.

    Args:
        logits: Main logits `[K, H, W]`.
        aux: Auxiliary logits at coarser resolutions, or `None`.
        target: Class ids `[H, W]` at full resolution.
        alpha: Per-class weights.
        gamma: Focusing exponent.
        criterion: Loss applied to every head.

    Returns:
        The main loss plus the loss of every auxiliary head against the
        nearest-neighbour downsampled target.
    """

    loss_fn = _CRITERIA[criterion]
    total = loss_fn(softmax(logits, axis=0), target, alpha, gamma)
    for head in aux or ():
        factor = target.shape[0] // head.shape[1]
        total = total + loss_fn(softmax(head, axis=0), downsample_mask(target, factor), alpha, gamma)

    return total


def class_weights(
    masks: Sequence[np.ndarray],
    num_classes: int,
    mode: Literal["inverse_frequency", "uniform"] = "inverse_frequency",
) -> np.ndarray:
    """Compute per-class loss weights from training masks.

    Inverse-frequency weights are normalized to mean one over the classes
    present in `masks`. Absent classes receive weight one.

    Args:
        masks: Training masks.
        num_classes: Number of classes `K`.
        mode: `inverse_frequency` or `uniform` (all ones).

    Returns:
        A `[K]` array of non-negative weights.
    """

    weights = np.ones(num_classes)
    if mode == "uniform":
        return weights

    counts = np.zeros(num_classes, dtype=np.int64)
    for mask in masks:
        counts += np.bincount(np.asarray(mask).ravel(), minlength=num_classes)[:num_classes]

    present = counts > 0
    if not present.any():
        logger.warning("No labelled pixels found; using uniform class weights.")
        return weights

    inverse = counts.sum() / counts[present]
    weights[present] = inverse / inverse.mean()
    logger.debug(f"Class weights: {np.round(weights, 4).tolist()}")
    return weights
