"""
The `checkpoints` module serializes trained networks. A checkpoint bundles
the network configuration, the named parameter tensors, the training step
counter and (optionally) the optimizer moments in a single binary file.

!!! example "Example: Saving and Restoring a Network"

    ```python
    from osdmamba.checkpoints import Checkpoint, load_checkpoint, save_checkpoint

    save_checkpoint(Checkpoint(config, params, step=200), Path("model.osdm"))
    restored = load_checkpoint(Path("model.osdm"))
    ```

All integers and payloads are little-endian:

| Field            | Encoding                                                  |
|------------------|-----------------------------------------------------------|
| magic            | the four bytes `OSDM`                                     |
| version          | `u32`                                                     |
| metadata         | `u32` length followed by UTF-8 JSON with sorted keys      |
| tensor count     | `u32`                                                     |
| tensor entries   | sorted by name, see below                                 |

Every tensor entry stores a `u16` name length and the UTF-8 name, a `u8`
dtype tag (0 for float64, 1 for float32), a `u8` rank, one `u32` per axis
and the raw row-major payload. Optimizer moments are stored as the tensors
`optim.m.<name>` and `optim.v.<name>`. Encoding is canonical, so a
checkpoint that is loaded and saved again is byte-identical.
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import ValidationError

from .configs import NetworkConfig
from .optim import OptimizerState
from .tensor import Tensor

__all__ = [
    "CHECKPOINT_VERSION",
    "Checkpoint",
    "CheckpointError",
    "checkpoint_from_bytes",
    "checkpoint_to_bytes",
    "load_checkpoint",
    "save_checkpoint",
]

logger = logging.getLogger("osdmamba")

MAGIC = b"OSDM"
CHECKPOINT_VERSION = 1
DTYPES = {"f64": (0, np.dtype("<f8")), "f32": (1, np.dtype("<f4"))}
OPTIM_PREFIX = "optim."


class CheckpointError(ValueError):
    """Raised for unreadable or incompatible checkpoint files."""


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """A trained (or freshly initialized) network.

    Attributes:
        network: Architecture of the network.
        params: Parameter tensors keyed by hierarchical name.
        step: Number of optimizer updates applied.
        optimizer: Optimizer moments, if training can be resumed.
        dtype: Storage precision of the tensor payloads.
    """

    network: NetworkConfig
    params: dict[str, Tensor]
    step: int = 0
    optimizer: OptimizerState | None = None
    dtype: Literal["f64", "f32"] = "f64"


def _pack_tensor(name: str, array: np.ndarray, dtype: str) -> bytes:
    tag, numpy_dtype = DTYPES[dtype]
    encoded = name.encode("utf-8")
    header = struct.pack(f"<H{len(encoded)}sBB{array.ndim}I", len(encoded), encoded, tag, array.ndim, *array.shape)
    return header + np.ascontiguousarray(array, dtype=numpy_dtype).tobytes()


def checkpoint_to_bytes(checkpoint: Checkpoint) -> bytes:
    """Encode a checkpoint in the binary checkpoint format."""

    optimizer = checkpoint.optimizer
    metadata = {
        "dtype": checkpoint.dtype,
        "network": checkpoint.network.model_dump(mode="json"),
        "optimizer": None if optimizer is None else {
            "beta1": optimizer.beta1, "beta2": optimizer.beta2, "eps": optimizer.eps, "step": optimizer.step
        },
        "step": checkpoint.step,
    }

    tensors = {name: t.data for name, t in checkpoint.params.items()}
    if optimizer is not None:
        tensors.update({f"{OPTIM_PREFIX}m.{name}": m for name, m in optimizer.m.items()})
        tensors.update({f"{OPTIM_PREFIX}v.{name}": v for name, v in optimizer.v.items()})

    blob = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(blob)), blob, struct.pack("<I", len(tensors))]
    parts.extend(_pack_tensor(name, tensors[name], checkpoint.dtype) for name in sorted(tensors))
    return b"".join(parts)


class _Reader:
    """Cursor over a checkpoint buffer raising `CheckpointError` on truncation."""

    def __init__(self, buffer: bytes) -> None:
        self.buffer = buffer
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.buffer):
            raise CheckpointError(f"Truncated checkpoint: needed {size} bytes at offset {self.offset}")

        chunk = self.buffer[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_from_bytes(buffer: bytes) -> Checkpoint:
    """Decode a checkpoint produced by `checkpoint_to_bytes`.

    Raises:
        CheckpointError: For a bad magic, an unsupported version, a truncated
            payload or invalid metadata.
    """

    reader = _Reader(buffer)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("Not a checkpoint file: bad magic bytes")

    version, blob_size = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")

    try:
        metadata = json.loads(reader.take(blob_size).decode("utf-8"))
        network = NetworkConfig(**metadata["network"])
        dtype = metadata["dtype"]
        step = int(metadata["step"])
        numpy_dtype = DTYPES[dtype][1]

    except (ValueError, KeyError, TypeError, ValidationError) as exc:
        raise CheckpointError(f"Invalid checkpoint metadata: {exc}") from exc

    tags = dict(DTYPES.values())
    tensors = {}
    for _ in range(reader.unpack("<I")[0]):
        (name_size,) = reader.unpack("<H")
        name = reader.take(name_size).decode("utf-8")
        tag, ndim = reader.unpack("<BB")
        if tags.get(tag) != numpy_dtype:
            raise CheckpointError(f"Tensor {name} has dtype tag {tag}, expected {dtype}")

        shape = reader.unpack(f"<{ndim}I")
        payload = reader.take(int(np.prod(shape, dtype=np.int64)) * numpy_dtype.itemsize)
        tensors[name] = np.frombuffer(payload, dtype=numpy_dtype).reshape(shape).astype(np.float64)

    if reader.offset != len(buffer):
        raise CheckpointError(f"Unexpected {len(buffer) - reader.offset} trailing bytes in checkpoint")

    params = {
        name: Tensor(array, requires_grad=True, name=name)
        for name, array in tensors.items() if not name.startswith(OPTIM_PREFIX)
    }

    optimizer = None
    if metadata.get("optimizer") is not None:
        scalars = metadata["optimizer"]
        try:
            optimizer = OptimizerState(
                step=scalars["step"],
                m={name: tensors[f"{OPTIM_PREFIX}m.{name}"] for name in params},
                v={name: tensors[f"{OPTIM_PREFIX}v.{name}"] for name in params},
                beta1=scalars["beta1"],
                beta2=scalars["beta2"],
                eps=scalars["eps"],
            )

        except KeyError as exc:
            raise CheckpointError(f"Checkpoint optimizer state is missing {exc}") from exc

    return Checkpoint(network, params, step, optimizer, dtype)


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    """Write a checkpoint file."""

    path.write_bytes(checkpoint_to_bytes(checkpoint))
    logger.info(f"Checkpoint written to {path} (step {checkpoint.step}).")


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint file.

    Raises:
        CheckpointError: If the file is missing or malformed.
    """

    logger.debug(f"Loading checkpoint from {path}.")
    try:
        buffer = path.read_bytes()

    except OSError as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc

    return checkpoint_from_bytes(buffer)
