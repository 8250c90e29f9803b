"""
The `tensor` module provides the dense N-dimensional `Tensor` type used by
every other part of the package, together with a reverse-mode automatic
differentiation engine. Tensors wrap a row-major `float64` NumPy array and
remember the primitive that produced them. Calling `backward` on a scalar
result walks that record in reverse topological order and propagates
adjoints to every leaf created with `requires_grad=True`.

!!! example "Example: Differentiating a Composition"

    ```python
    from osdmamba.tensor import Tensor, backward, conv2d, silu

    x = Tensor(np.random.rand(1, 2, 5, 5), requires_grad=True)
    k = Tensor(np.random.rand(3, 2, 3, 3), requires_grad=True)
    loss = silu(conv2d(x, k, padding=1)).sum()
    grads = backward(loss)
    print(grads[k].shape)  # (3, 2, 3, 3)
    ```

Primitives whose adjoints are cheaper to write by hand than to compose
(convolution, linear projection, layer normalization, softmax, SiLU and
`einsum`) are implemented as single fused entries on the tape. Other modules
register their own fused primitives through `record_operation`.

!!! important "Developer Note"

    Tensors are treated as immutable values. Operations always allocate new
    arrays and never write into their operands, so tensors can be shared
    freely between threads. Only the `grad` buffer of a leaf is updated, and
    only by `backward`.
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "ContractError",
    "DimensionError",
    "NumericError",
    "Tape",
    "TapeEntry",
    "Tensor",
    "backward",
    "clamp_min",
    "concat",
    "conv2d",
    "einsum",
    "exp",
    "is_grad_enabled",
    "layer_norm",
    "linear",
    "log",
    "no_grad",
    "ones",
    "record_operation",
    "sigmoid",
    "silu",
    "softmax",
    "softplus",
    "stack",
    "zeros",
    "zero_grad",
]

logger = logging.getLogger("osdmamba")

_grad_enabled = contextvars.ContextVar("osdmamba_grad_enabled", default=True)

ArrayLike = np.ndarray | float | int | Sequence
VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


class ContractError(ValueError):
    """Raised when an operation precondition is violated."""


class NumericError(ArithmeticError):
    """Raised when a computation encounters non-finite values."""


class Tensor:
    """Dense N-dimensional real array participating in automatic differentiation.

    Args:
        data: Array contents, converted to a C-ordered `float64` array.
        requires_grad: Whether gradients should be accumulated for this tensor.
        name: Optional label used in error messages and debugging output.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_entry")
    __array_ufunc__ = None  # Make NumPy defer to the reflected Tensor operators

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str | None = None) -> None:
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._entry: TapeEntry | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        """The tensor extents."""

        return self.data.shape

    @property
    def ndim(self) -> int:
        """The number of tensor axes."""

        return self.data.ndim

    @property
    def size(self) -> int:
        """The total number of elements."""

        return self.data.size

    @property
    def is_leaf(self) -> bool:
        """Whether the tensor was created directly rather than by an operation."""

        return self._entry is None

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array."""

        return self.data.copy()

    def item(self) -> float:
        """Return the value of a single-element tensor as a Python float."""

        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        """Return a tensor sharing the data but disconnected from the tape."""

        return Tensor(self.data, name=self.name)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # Arithmetic operators
    def __add__(self, other: Tensor | ArrayLike) -> Tensor:
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Tensor | ArrayLike) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Tensor | ArrayLike) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Tensor | ArrayLike) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __getitem__(self, index) -> Tensor:
        return getitem(self, index)

    # Shape and reduction methods
    def reshape(self, *shape: int) -> Tensor:
        """Return a tensor with the same data and a new shape."""

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        """Permute the tensor axes (reverses them when no axes are given)."""

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])

        return transpose(self, axes or None)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        """Sum elements over the given axes."""

        return tensor_sum(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        """Average elements over the given axes."""

        return tensor_mean(self, axis, keepdims)

    def exp(self) -> Tensor:
        """Elementwise exponential."""

        return exp(self)

    def log(self) -> Tensor:
        """Elementwise natural logarithm."""

        return log(self)


@dataclass(frozen=True, eq=False)
class TapeEntry:
    """A single primitive application recorded for reverse-mode differentiation.

    Attributes:
        name: Name of the primitive.
        inputs: Operand tensors.
        output: The tensor produced by the primitive.
        vjp: Maps the output adjoint to one adjoint (or `None`) per operand.
    """

    name: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    vjp: VJP


class Tape:
    """Ordered record of primitive applications leading to an output tensor.

    Entries are stored in topological order: every operand of an entry is
    either a leaf or the output of a strictly earlier entry.
    """

    def __init__(self, entries: list[TapeEntry]) -> None:
        self.entries = entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[TapeEntry]:
        return iter(self.entries)

    @classmethod
    def from_output(cls, output: Tensor) -> Tape:
        """Collect the entries reachable from `output` in topological order.

        Args:
            output: The tensor whose history should be recorded.

        Returns:
            A tape ending with the entry that produced `output`.
        """

        entries = []
        visited = set()
        stack = [(output, False)]

        # Iterative post-order traversal, network graphs exceed the recursion limit
        while stack:
            node, expanded = stack.pop()
            entry = node._entry
            if entry is None:
                continue

            if expanded:
                entries.append(entry)
                continue

            if id(entry) in visited:
                continue

            visited.add(id(entry))
            stack.append((node, True))
            for operand in reversed(entry.inputs):
                if operand._entry is not None and id(operand._entry) not in visited:
                    stack.append((operand, False))

        return cls(entries)

    def leaves(self) -> list[Tensor]:
        """Return the distinct leaf tensors requiring gradients, in first-use order."""

        seen, leaves = set(), []
        for entry in self.entries:
            for operand in entry.inputs:
                if operand.is_leaf and operand.requires_grad and id(operand) not in seen:
                    seen.add(id(operand))
                    leaves.append(operand)

        return leaves


def is_grad_enabled() -> bool:
    """Return whether new operations are currently recorded for differentiation."""

    return _grad_enabled.get()


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Context manager disabling operation recording in the current context."""

    token = _grad_enabled.set(False)
    try:
        yield

    finally:
        _grad_enabled.reset(token)


def _as_tensor(value: Tensor | ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def record_operation(name: str, data: np.ndarray, inputs: Sequence[Tensor], vjp: VJP) -> Tensor:
    """Wrap the result of a primitive and record it on the tape when needed.

    The entry is only recorded when gradients are enabled and at least one
    operand requires gradients. Otherwise the result is a plain constant.

    Args:
        name: Name of the primitive.
        data: The computed output array.
        inputs: Operand tensors in the order expected by `vjp`.
        vjp: Function mapping the output adjoint to operand adjoints.

    Returns:
        The output tensor.
    """

    out = Tensor(data)
    if _grad_enabled.get() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._entry = TapeEntry(name, tuple(inputs), out, vjp)

    return out


def backward(output: Tensor, accumulate: bool = True) -> dict[Tensor, np.ndarray]:
    """Propagate adjoints from a scalar output to every leaf requiring gradients.

    Args:
        output: A zero-dimensional tensor.
        accumulate: Also add the gradients into each leaf's `grad` buffer.
            Repeated calls without `zero_grad` therefore sum.

    Returns:
        A mapping from each leaf requiring gradients to its gradient array.

    Raises:
        ContractError: If `output` is not a scalar.
    """

    if output.ndim != 0:
        raise ContractError(f"backward requires a scalar output, got shape {output.shape}")

    tape = Tape.from_output(output)
    logger.debug(f"Backward pass over {len(tape)} tape entries.")

    adjoints: dict[int, np.ndarray] = {id(output): np.ones((), dtype=np.float64)}
    leaves: dict[int, Tensor] = {}
    if output.is_leaf and output.requires_grad:
        leaves[id(output)] = output

    for entry in reversed(tape.entries):
        g = adjoints.pop(id(entry.output), None)
        if g is None:
            continue

        for operand, operand_grad in zip(entry.inputs, entry.vjp(g)):
            if operand_grad is None or not operand.requires_grad:
                continue

            key = id(operand)
            if key in adjoints:
                adjoints[key] = adjoints[key] + operand_grad

            else:
                adjoints[key] = np.asarray(operand_grad, dtype=np.float64)

            if operand.is_leaf:
                leaves[key] = operand

    gradients = {}
    for key, leaf in leaves.items():
        grad = np.broadcast_to(adjoints[key], leaf.shape).copy()
        gradients[leaf] = grad
        if accumulate:
            leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad

    return gradients


def zero_grad(tensors: Sequence[Tensor]) -> None:
    """Reset the gradient buffers of the given tensors."""

    for t in tensors:
        t.grad = None


def zeros(*shape: int, requires_grad: bool = False) -> Tensor:
    """Create a tensor filled with zeros."""

    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(*shape: int, requires_grad: bool = False) -> Tensor:
    """Create a tensor filled with ones."""

    return Tensor(np.ones(shape), requires_grad=requires_grad)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand shape."""

    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)

    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)

    return grad


def add(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    """Elementwise sum with broadcasting."""

    a, b = _as_tensor(a), _as_tensor(b)
    return record_operation(
        "add", a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    )


def sub(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    """Elementwise difference with broadcasting."""

    a, b = _as_tensor(a), _as_tensor(b)
    return record_operation(
        "sub", a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))
    )


def mul(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    """Elementwise product with broadcasting."""

    a, b = _as_tensor(a), _as_tensor(b)
    return record_operation(
        "mul", a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))
    )


def div(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    """Elementwise quotient with broadcasting."""

    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data
    return record_operation(
        "div", out, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape))
    )


def power(x: Tensor, exponent: float) -> Tensor:
    """Raise every element to a constant real power."""

    exponent = float(exponent)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        if exponent == 0.0:
            return (np.zeros_like(x.data),)

        with np.errstate(divide="ignore", invalid="ignore"):
            local = exponent * np.power(x.data, exponent - 1.0)

        # Zero base with a fractional exponent has an unbounded slope; treat it as flat
        local = np.where(np.isfinite(local), local, 0.0)
        return (g * local,)

    return record_operation("pow", np.power(x.data, exponent), (x,), vjp)


def exp(x: Tensor) -> Tensor:
    """Elementwise exponential."""

    out = np.exp(x.data)
    return record_operation("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    """Elementwise natural logarithm."""

    return record_operation("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """Replace values below `floor` by `floor`; the clamped positions get no gradient."""

    mask = x.data > floor
    return record_operation("clamp_min", np.where(mask, x.data, floor), (x,), lambda g: (g * mask,))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(x: Tensor) -> Tensor:
    """Elementwise logistic function."""

    out = _stable_sigmoid(x.data)
    return record_operation("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x: Tensor) -> Tensor:
    """Elementwise `log(1 + exp(x))`, evaluated without overflow."""

    return record_operation(
        "softplus", np.logaddexp(0.0, x.data), (x,),
        lambda g: (g * _stable_sigmoid(x.data),)
    )


def silu(x: Tensor) -> Tensor:
    """Elementwise `x * sigmoid(x)`."""

    s = _stable_sigmoid(x.data)
    return record_operation("silu", x.data * s, (x,), lambda g: (g * s * (1.0 + x.data * (1.0 - s)),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Normalized exponentials along `axis`, computed with max subtraction.

    Args:
        x: Input logits.
        axis: Axis along which the outputs sum to one.

    Returns:
        A tensor of positive values summing to one along `axis`.
    """

    shifted = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    out = shifted / shifted.sum(axis=axis, keepdims=True)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record_operation("softmax", out, (x,), vjp)


def _normalize_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))

    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(a % ndim for a in axes)


def tensor_sum(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    """Sum elements over the given axes."""

    axes = _normalize_axes(axis, x.ndim)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        if not keepdims:
            g = np.expand_dims(g, axes)

        return (np.broadcast_to(g, x.shape),)

    return record_operation("sum", x.data.sum(axis=axes, keepdims=keepdims), (x,), vjp)


def tensor_mean(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    """Average elements over the given axes."""

    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return tensor_sum(x, axes, keepdims) * (1.0 / count)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reinterpret the row-major data under a new shape."""

    return record_operation("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    """Permute tensor axes."""

    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(a % x.ndim for a in axes)
    inverse = tuple(np.argsort(axes))
    return record_operation(
        "transpose", np.ascontiguousarray(x.data.transpose(axes)), (x,),
        lambda g: (g.transpose(inverse),)
    )


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(Ellipsis), type(None))) for p in parts)


def getitem(x: Tensor, index) -> Tensor:
    """Select elements with NumPy indexing semantics."""

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        if _is_basic_index(index):
            full[index] += g

        else:
            np.add.at(full, index, g)

        return (full,)

    return record_operation("getitem", np.ascontiguousarray(x.data[index]), (x,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along an existing axis."""

    tensors = [_as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return record_operation(
        "concat", np.concatenate([t.data for t in tensors], axis=axis), tensors,
        lambda g: np.split(g, bounds, axis=axis)
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join equally shaped tensors along a new axis."""

    tensors = [_as_tensor(t) for t in tensors]
    axis = axis % (tensors[0].ndim + 1)
    return record_operation(
        "stack", np.stack([t.data for t in tensors], axis=axis), tensors,
        lambda g: [np.take(g, i, axis=axis) for i in range(len(tensors))]
    )


def einsum(subscripts: str, *operands: Tensor) -> Tensor:
    """Einstein summation over one or two operands with an explicit output.

    Args:
        subscripts: A NumPy subscript string containing `->`.
        operands: One or two tensors.

    Returns:
        The contracted tensor.

    Raises:
        ContractError: If the subscripts cannot be differentiated by the
            transposition rule (implicit output or repeated operand indices).
    """

    if "->" not in subscripts or not 1 <= len(operands) <= 2:
        raise ContractError(f"einsum requires an explicit output and one or two operands: {subscripts!r}")

    inputs, output = subscripts.replace(" ", "").split("->")
    input_subs = inputs.split(",")
    if len(input_subs) != len(operands):
        raise ContractError(f"einsum subscripts {subscripts!r} name {len(input_subs)} operands, got {len(operands)}")

    for i, (sub_i, operand) in enumerate(zip(input_subs, operands)):
        others = output + "".join(s for j, s in enumerate(input_subs) if j != i)
        if len(set(sub_i)) != len(sub_i) or not set(sub_i) <= set(others):
            raise ContractError(f"einsum operand subscripts {sub_i!r} are not differentiable")

        if len(sub_i) != operand.ndim:
            raise DimensionError(f"einsum subscripts {sub_i!r} do not match operand of shape {operand.shape}")

    data = np.einsum(subscripts, *[t.data for t in operands], optimize=len(operands) > 1)

    def vjp(g: np.ndarray) -> list[np.ndarray]:
        grads = []
        for i, sub_i in enumerate(input_subs):
            other_subs = [s for j, s in enumerate(input_subs) if j != i]
            other_data = [operands[j].data for j in range(len(operands)) if j != i]
            spec = ",".join([output, *other_subs]) + "->" + sub_i
            grads.append(np.einsum(spec, g, *other_data))

        return grads

    return record_operation("einsum", data, operands, vjp)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine projection `x @ weight.T + bias` over the last axis.

    Args:
        x: Input of shape `[..., Din]`.
        weight: Weights of shape `[Dout, Din]`.
        bias: Optional bias of shape `[Dout]`.

    Returns:
        Output of shape `[..., Dout]`.

    Raises:
        DimensionError: If the last axis of `x` does not match `Din`.
    """

    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise DimensionError(
            f"linear: axis -1 of input has extent {x.shape[-1]} but weight expects Din={weight.shape[-1]}")

    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError(f"linear: bias axis 0 has extent {bias.shape} but Dout={weight.shape[0]}")

    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def vjp(g: np.ndarray) -> list[np.ndarray]:
        flat_g = g.reshape(-1, weight.shape[0])
        flat_x = x.data.reshape(-1, weight.shape[1])
        grads = [g @ weight.data, flat_g.T @ flat_x]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))

        return grads

    operands = (x, weight) if bias is None else (x, weight, bias)
    return record_operation("linear", out, operands, vjp)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with the biased variance, then apply an affine map.

    Args:
        x: Input of shape `[..., C]`.
        gamma: Scale of shape `[C]`.
        beta: Shift of shape `[C]`.
        eps: Variance floor, must be positive.

    Returns:
        The normalized tensor, same shape as `x`.
    """

    channels = x.shape[-1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(f"layer_norm: affine parameters must have shape ({channels},)")

    if eps <= 0:
        raise ContractError("layer_norm: eps must be positive")

    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g_hat = g * gamma.data
        g_x = inv_std * (
            g_hat
            - g_hat.mean(axis=-1, keepdims=True)
            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(x.ndim - 1))
        return g_x, (g * x_hat).sum(axis=lead), g.sum(axis=lead)

    return record_operation("layer_norm", x_hat * gamma.data + beta.data, (x, gamma, beta), vjp)


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1
) -> Tensor:
    """Two-dimensional cross-correlation with zero padding.

    Args:
        x: Input of shape `[N, Cin, H, W]`.
        kernel: Weights of shape `[Cout, Cin / groups, kh, kw]`.
        bias: Optional bias of shape `[Cout]`.
        stride: Step between neighbouring output positions.
        padding: Zero padding added on every spatial border.
        groups: Number of channel groups (`groups == Cin` is depthwise).

    Returns:
        Output of shape `[N, Cout, H', W']` with `H' = (H + 2p - kh) // stride + 1`.

    Raises:
        DimensionError: If the operand shapes are inconsistent.
    """

    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {kernel.shape}")

    n, c_in, height, width = x.shape
    c_out, c_group, kh, kw = kernel.shape
    if c_in % groups or c_out % groups:
        raise DimensionError(f"conv2d: axis 1 (channels) of input ({c_in}) and kernel axis 0 ({c_out}) must divide into {groups} groups")

    if c_group * groups != c_in:
        raise DimensionError(f"conv2d: kernel axis 1 has extent {c_group}, expected Cin/groups = {c_in // groups}")

    if kh > height + 2 * padding:
        raise DimensionError(f"conv2d: kernel axis 2 ({kh}) exceeds padded input axis 2 ({height + 2 * padding})")

    if kw > width + 2 * padding:
        raise DimensionError(f"conv2d: kernel axis 3 ({kw}) exceeds padded input axis 3 ({width + 2 * padding})")

    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d: bias must have shape ({c_out},)")

    out_h = (height + 2 * padding - kh) // stride + 1
    out_w = (width + 2 * padding - kw) // stride + 1
    c_out_group = c_out // groups

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    padded = padded.reshape(n, groups, c_group, *padded.shape[2:])
    weights = kernel.data.reshape(groups, c_out_group, c_group, kh, kw)

    def window(i: int, j: int) -> tuple[slice, slice]:
        return slice(i, i + stride * (out_h - 1) + 1, stride), slice(j, j + stride * (out_w - 1) + 1, stride)

    out = np.zeros((n, groups, c_out_group, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            rows, cols = window(i, j)
            out += np.einsum("ngchw,goc->ngohw", padded[..., rows, cols], weights[..., i, j], optimize=True)

    out = out.reshape(n, c_out, out_h, out_w)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def vjp(g: np.ndarray) -> list[np.ndarray]:
        g_groups = g.reshape(n, groups, c_out_group, out_h, out_w)
        g_padded = np.zeros_like(padded)
        g_weights = np.zeros_like(weights)
        for i in range(kh):
            for j in range(kw):
                rows, cols = window(i, j)
                g_weights[..., i, j] = np.einsum("ngohw,ngchw->goc", g_groups, padded[..., rows, cols], optimize=True)
                g_padded[..., rows, cols] += np.einsum("ngohw,goc->ngchw", g_groups, weights[..., i, j], optimize=True)

        g_padded = g_padded.reshape(n, c_in, height + 2 * padding, width + 2 * padding)
        grads = [
            g_padded[:, :, padding:padding + height, padding:padding + width],
            g_weights.reshape(kernel.shape)
        ]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))

        return grads

    operands = (x, kernel) if bias is None else (x, kernel, bias)
    return record_operation("conv2d", out, operands, vjp)
