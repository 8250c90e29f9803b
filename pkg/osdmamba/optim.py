"""
The `optim` module implements the AdamW optimizer and the learning rate
schedules used by the training loop.

AdamW decouples weight decay from the adaptive gradient step. Every
parameter is first shrunk towards zero and then moved by the Adam update
with bias-corrected moment estimates:

```
p <- p * (1 - lr * wd)
m <- beta1 * m + (1 - beta1) * g
v <- beta2 * v + (1 - beta2) * g^2
p <- p - lr * m_hat / (sqrt(v_hat) + eps)
```

Optimizer steps are pure: `adamw_step` returns new parameter tensors and a
new `OptimizerState` and leaves its arguments untouched.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import *

__all__ = ["OptimizerState", "adamw_step", "init_optimizer_state", "scheduled_lr"]

logger = logging.getLogger("osdmamba")


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """Moment estimates of AdamW.

    Attributes:
        step: Number of updates applied so far.
        m: First moment estimate per parameter name.
        v: Second moment estimate per parameter name.
        beta1: Decay of the first moment.
        beta2: Decay of the second moment.
        eps: Denominator offset.
    """

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_optimizer_state(
    params: dict[str, Tensor],
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> OptimizerState:
    """Create zeroed moments matching every parameter."""

    return OptimizerState(
        step=0,
        m={name: np.zeros(t.shape) for name, t in params.items()},
        v={name: np.zeros(t.shape) for name, t in params.items()},
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adamw_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    weight_decay: float,
) -> tuple[dict[str, Tensor], OptimizerState]:
    """Apply one AdamW update.

    Args:
        params: Parameters keyed by name.
        grads: Gradients keyed by name. Missing entries count as zero.
        state: Current optimizer state.
        lr: Learning rate.
        weight_decay: Decoupled weight decay coefficient.

    Returns:
        The updated parameters (new tensors requiring gradients) and state.

    Raises:
        NumericError: If a gradient holds non-finite values.
        DimensionError: If a gradient or moment shape does not match its parameter.
    """

    step = state.step + 1
    beta1, beta2, eps = state.beta1, state.beta2, state.eps
    first_correction = 1 - beta1 ** step
    second_correction = 1 - beta2 ** step

    new_params, new_m, new_v = {}, {}, {}
    for name, param in params.items():
        grad = grads.get(name)
        grad = np.zeros(param.shape) if grad is None else grad
        if grad.shape != param.shape:
            raise DimensionError(f"Gradient of {name} has shape {grad.shape}, expected {param.shape}")

        if not np.all(np.isfinite(grad)):
            raise NumericError(f"Non-finite gradient for parameter {name}")

        for label, moments in (("first", state.m), ("second", state.v)):
            if name in moments and moments[name].shape != param.shape:
                raise DimensionError(
                    f"{label.capitalize()} moment of {name} has shape {moments[name].shape}, expected {param.shape}"
                )

        m = beta1 * state.m.get(name, 0.0) + (1 - beta1) * grad
        v = beta2 * state.v.get(name, 0.0) + (1 - beta2) * grad * grad
        update = (m / first_correction) / (np.sqrt(v / second_correction) + eps)

        new_params[name] = Tensor(param.data * (1 - lr * weight_decay) - lr * update, requires_grad=True, name=name)
        new_m[name], new_v[name] = m, v

    return new_params, OptimizerState(step, new_m, new_v, beta1, beta2, eps)


def scheduled_lr(base_lr: float, schedule: str, step: int, total_steps: int) -> float:
    """Learning rate of update `step` (zero based) out of `total_steps`.

    The `constant` schedule keeps `base_lr`. The `cosine` schedule anneals
    from `base_lr` to zero over `total_steps`.
    """

    if schedule == "constant" or total_steps <= 1:
        return base_lr

    if schedule == "cosine":
        return 0.5 * base_lr * (1 + math.cos(math.pi * step / total_steps))

    raise ValueError(f"Unknown learning rate schedule: {schedule}")
