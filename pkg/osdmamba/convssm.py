"""
The `convssm` module implements a convolutional state space model. The
state is a multi-channel feature map updated by convolutions:

```
X_k = A * X_{k-1} + B * U_k
Y_k = C * X_k + D * U_k
```

where `*` is a stride-1, same-padded `conv2d`. Because the state kernel `A`
is pointwise (`[P, P, 1, 1]`), every step is an affine map `X -> M X + b`
with a dense `P x P` matrix `M` acting on each pixel independently. Affine
maps compose associatively, so all prefixes can be evaluated with a
work-efficient parallel scan instead of a sequential loop.

!!! example "Example: Sequential and Parallel Evaluation"

    ```python
    from osdmamba.convssm import init_hippo, convssm_scan_parallel, convssm_scan_sequential

    params = init_hippo(3, 3, input_channels=2, output_channels=2)
    x0 = ConvState(zeros(3, 8, 8))
    y_seq, _ = convssm_scan_sequential(u, x0, params)
    y_par, _ = convssm_scan_parallel(u, x0, params)
    ```
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np

from .tensor import *

__all__ = [
    "ConvSSMParameters",
    "ConvState",
    "blelloch_scan",
    "convssm_flop_terms",
    "convssm_flops",
    "convssm_scan_parallel",
    "convssm_scan_sequential",
    "convssm_step",
    "init_hippo",
    "spectral_radius",
]

logger = logging.getLogger("osdmamba")

T = TypeVar("T")
AffinePair = tuple[Tensor, Tensor]


@dataclass(frozen=True, eq=False)
class ConvSSMParameters:
    """Convolution kernels of a ConvSSM.

    Attributes:
        A: Pointwise state kernel `[P, P, 1, 1]`.
        B: Input kernel `[P, U, k, k]`.
        C: Output kernel `[Y, P, k, k]`.
        D: Feedthrough kernel `[Y, U, k, k]`.
    """

    A: Tensor
    B: Tensor
    C: Tensor
    D: Tensor

    def __post_init__(self) -> None:
        if self.A.ndim != 4 or self.A.shape[2:] != (1, 1) or self.A.shape[0] != self.A.shape[1]:
            raise DimensionError(f"ConvSSM state kernel must be pointwise [P, P, 1, 1], got {self.A.shape}")

        if self.B.shape[0] != self.state_channels or self.C.shape[1] != self.state_channels:
            raise DimensionError("ConvSSM kernels B (axis 0) and C (axis 1) must match the state channels")

        if self.D.shape[:2] != (self.C.shape[0], self.B.shape[1]):
            raise DimensionError("ConvSSM feedthrough kernel D must be [Y, U, k, k]")

        if self.kernel_size % 2 == 0:
            raise DimensionError(f"ConvSSM kernel size must be odd for same padding, got {self.kernel_size}")

    @property
    def state_channels(self) -> int:
        """State channels `P`."""

        return self.A.shape[0]

    @property
    def input_channels(self) -> int:
        """Input channels `U`."""

        return self.B.shape[1]

    @property
    def output_channels(self) -> int:
        """Output channels `Y`."""

        return self.C.shape[0]

    @property
    def kernel_size(self) -> int:
        """Spatial kernel size `k` of `B`, `C` and `D`."""

        return self.B.shape[2]

    def tensors(self) -> dict[str, Tensor]:
        """Return the kernels keyed by their role."""

        return {"A": self.A, "B": self.B, "C": self.C, "D": self.D}

    @classmethod
    def from_tensors(cls, tensors: dict[str, Tensor]) -> ConvSSMParameters:
        """Rebuild parameters from a mapping produced by `tensors`."""

        return cls(A=tensors["A"], B=tensors["B"], C=tensors["C"], D=tensors["D"])


@dataclass(frozen=True, eq=False)
class ConvState:
    """Hidden state `X` of shape `[P, H, W]`."""

    X: Tensor


def init_hippo(
    state_channels: int,
    kernel_size: int = 3,
    input_channels: int | None = None,
    output_channels: int | None = None,
    rng: np.random.Generator | None = None,
    dt0: float = 1.0,
) -> ConvSSMParameters:
    """Initialize a ConvSSM with a decaying diagonal state spectrum.

    The `P x P` view of `A` is `diag(exp(-dt0 * (n + 1/2)))`, a discretized
    HiPPO-style spectrum whose eigenvalues all lie in `(0, 1)`. `B`, `C` and
    `D` are drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.

    Args:
        state_channels: State channels `P`.
        kernel_size: Spatial kernel size `k` of `B`, `C` and `D`.
        input_channels: Input channels `U`, defaults to `P`.
        output_channels: Output channels `Y`, defaults to `P`.
        rng: Random generator used for `B`, `C` and `D`.
        dt0: Discretization step of the state spectrum.

    Returns:
        Parameters with `requires_grad` enabled.
    """

    if state_channels < 1:
        raise ContractError("init_hippo requires at least one state channel")

    rng = rng or np.random.default_rng()
    p = state_channels
    u = input_channels or p
    y = output_channels or p
    k = kernel_size

    def uniform(shape: tuple[int, ...], fan_in: int) -> Tensor:
        bound = fan_in ** -0.5
        return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

    spectrum = np.exp(-dt0 * (np.arange(p) + 0.5))
    return ConvSSMParameters(
        A=Tensor(np.diag(spectrum).reshape(p, p, 1, 1), requires_grad=True),
        B=uniform((p, u, k, k), u * k * k),
        C=uniform((y, p, k, k), p * k * k),
        D=uniform((y, u, k, k), u * k * k),
    )


def spectral_radius(params: ConvSSMParameters) -> float:
    """Largest eigenvalue magnitude of the `P x P` view of the state kernel."""

    p = params.state_channels
    return float(np.max(np.abs(np.linalg.eigvals(params.A.data.reshape(p, p)))))


def _same_conv(x: Tensor, kernel: Tensor) -> Tensor:
    return conv2d(x, kernel, padding=kernel.shape[2] // 2)


def convssm_step(x_prev: ConvState, u_k: Tensor, params: ConvSSMParameters) -> tuple[ConvState, Tensor]:
    """Advance the ConvSSM by one step.

    Args:
        x_prev: Previous state `[P, H, W]`.
        u_k: Input `[U, H, W]`.
        params: ConvSSM kernels.

    Returns:
        The new state and the output `[Y, H, W]`.

    Raises:
        DimensionError: If the state or input shapes do not match the kernels.
    """

    if x_prev.X.ndim != 3 or x_prev.X.shape[0] != params.state_channels:
        raise DimensionError(f"convssm_step: state must be [{params.state_channels}, H, W], got {x_prev.X.shape}")

    if u_k.ndim != 3 or u_k.shape[0] != params.input_channels or u_k.shape[1:] != x_prev.X.shape[1:]:
        raise DimensionError(f"convssm_step: input must be [{params.input_channels}, {x_prev.X.shape[1]}, {x_prev.X.shape[2]}], got {u_k.shape}")

    x = conv2d(x_prev.X[None], params.A)[0] + _same_conv(u_k[None], params.B)[0]
    y = _same_conv(x[None], params.C)[0] + _same_conv(u_k[None], params.D)[0]
    return ConvState(x), y


def convssm_scan_sequential(u: Tensor, x0: ConvState, params: ConvSSMParameters) -> tuple[Tensor, ConvState]:
    """Run the ConvSSM over a sequence one step at a time.

    Args:
        u: Input sequence `[L, U, H, W]` with `L >= 1`.
        x0: Initial state.
        params: ConvSSM kernels.

    Returns:
        The outputs `[L, Y, H, W]` and the final state.
    """

    if u.ndim != 4 or u.shape[0] < 1:
        raise DimensionError(f"convssm_scan_sequential: expected a non-empty [L, U, H, W] sequence, got {u.shape}")

    state, outputs = x0, []
    for k in range(u.shape[0]):
        state, y = convssm_step(state, u[k], params)
        outputs.append(y)

    return stack(outputs), state


def blelloch_scan(
    elements: Sequence[T],
    combine: Callable[[T, T], T],
    identity: T,
    workers: int = 1,
) -> list[T]:
    """Inclusive prefix scan of an associative operator using the Blelloch tree.

    The input is padded with `identity` to a power of two. An up-sweep
    builds partial reductions in place and a down-sweep distributes
    exclusive prefixes. The reduction order is fixed by the tree, so the
    result does not depend on `workers`.

    Args:
        elements: Sequence elements in order.
        combine: `combine(earlier, later)`, associative but not necessarily commutative.
        identity: Neutral element of `combine`.
        workers: Threads used to evaluate the independent combines of one tree level.

    Returns:
        The inclusive prefixes `e_0, e_0.e_1, ..., e_0...e_{n-1}`.
    """

    n = len(elements)
    if n == 0:
        return []

    size = 1 << (n - 1).bit_length()
    tree = list(elements) + [identity] * (size - n)

    with ThreadPoolExecutor(max_workers=workers) if workers > 1 else contextlib.nullcontext() as pool:

        def run_level(pairs: list[tuple[T, T]]) -> list[T]:
            if pool is None:
                return [combine(a, b) for a, b in pairs]

            futures = [pool.submit(contextvars.copy_context().run, combine, a, b) for a, b in pairs]
            return [f.result() for f in futures]

        step = 2
        while step <= size:
            half = step // 2
            rights = list(range(step - 1, size, step))
            results = run_level([(tree[i - half], tree[i]) for i in rights])
            for i, value in zip(rights, results):
                tree[i] = value

            step *= 2

        tree[size - 1] = identity
        step = size
        while step >= 2:
            half = step // 2
            rights = list(range(step - 1, size, step))
            lefts = [tree[i - half] for i in rights]
            results = run_level([(tree[i], left) for i, left in zip(rights, lefts)])
            for i, value in zip(rights, results):
                tree[i - half] = tree[i]
                tree[i] = value

            step //= 2

        return run_level([(tree[i], elements[i]) for i in range(n)])


def _compose(earlier: AffinePair, later: AffinePair) -> AffinePair:
    """Compose two affine state maps, applying `earlier` first."""

    m1, b1 = earlier
    m2, b2 = later
    return einsum("pq,qr->pr", m2, m1), einsum("pq,qhw->phw", m2, b1) + b2


def convssm_scan_parallel(
    u: Tensor,
    x0: ConvState,
    params: ConvSSMParameters,
    workers: int = 1
) -> tuple[Tensor, ConvState]:
    """Run the ConvSSM over a sequence with an associative parallel scan.

    Each step is the affine pair `(M, B * U_k)` with `M` the matrix view of
    the pointwise state kernel. Pairs compose as
    `(M2, b2) o (M1, b1) = (M2 M1, M2 b1 + b2)`; all prefixes are evaluated
    by `blelloch_scan`, applied to `x0`, and mapped through `C` and `D`.

    Args:
        u: Input sequence `[L, U, H, W]` with `L >= 1`.
        x0: Initial state.
        params: ConvSSM kernels.
        workers: Threads used per scan tree level.

    Returns:
        The outputs `[L, Y, H, W]` and the final state, equal to
        `convssm_scan_sequential` up to floating point reassociation.
    """

    if u.ndim != 4 or u.shape[0] < 1:
        raise DimensionError(f"convssm_scan_parallel: expected a non-empty [L, U, H, W] sequence, got {u.shape}")

    p = params.state_channels
    height, width = u.shape[2:]
    if x0.X.shape != (p, height, width):
        raise DimensionError(f"convssm_scan_parallel: state must be [{p}, {height}, {width}], got {x0.X.shape}")

    m = params.A.reshape(p, p)
    drives = _same_conv(u, params.B)
    elements = [(m, drives[k]) for k in range(u.shape[0])]
    identity = (Tensor(np.eye(p)), zeros(p, height, width))

    prefixes = blelloch_scan(elements, _compose, identity, workers=workers)
    states = stack([einsum("pq,qhw->phw", m_k, x0.X) + b_k for m_k, b_k in prefixes])
    outputs = _same_conv(states, params.C) + _same_conv(u, params.D)
    return outputs, ConvState(states[-1])


def convssm_flop_terms(params: ConvSSMParameters, height: int, width: int, length: int) -> dict[str, int]:
    """Multiply counts of one sequential scan, split by convolution.

    Returns:
        A mapping with keys `state` (`A * X`), `input` (`B * U`),
        `output` (`C * X`) and `feedthrough` (`D * U`).
    """

    p, u, y, k = params.state_channels, params.input_channels, params.output_channels, params.kernel_size
    positions = length * height * width
    return {
        "state": positions * p * p,
        "input": positions * p * u * k * k,
        "output": positions * y * p * k * k,
        "feedthrough": positions * y * u * k * k,
    }


def convssm_flops(params: ConvSSMParameters, height: int, width: int, length: int) -> int:
    """Total multiply count of one sequential scan over `length` steps on an `height x width` grid."""

    return sum(convssm_flop_terms(params, height, width, length).values())
