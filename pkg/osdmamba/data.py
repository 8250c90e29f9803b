"""
The `data` module supplies segmentation samples. Synthetic scenes mimic the
class imbalance of SAR oil spill imagery: a speckled sea surface covers most
of the scene, dark elongated spills and slightly brighter look-alikes cover
a few percent, small bright ships a handful of pixels, and a coherent land
region appears in some scenes.

!!! example "Example: Generating and Saving Scenes"

    ```python
    from pathlib import Path
    from osdmamba.configs import SceneConfig
    from osdmamba.data import generate_dataset, write_sample

    for sample in generate_dataset(4, SceneConfig(), seed=7):
        write_sample(sample, Path("scenes"))
    ```

Real data can be plugged in through `load_directory`, which reads paired
`<name>.pgm` images and `<name>_mask.pgm` masks. Images are 8-bit grayscale
scaled to `[0, 1]`; masks store the class id directly as the gray level.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .configs import SceneConfig
from .tensor import Tensor

__all__ = [
    "DatasetError",
    "Sample",
    "generate_dataset",
    "generate_scene",
    "load_directory",
    "read_pgm",
    "split_dataset",
    "write_pgm",
    "write_sample",
]

logger = logging.getLogger("osdmamba")

MASK_SUFFIX = "_mask"

SEA, SPILL, LOOKALIKE, SHIP, LAND = range(5)
INTENSITY = np.array([0.55, 0.12, 0.32, 0.95, 0.8])  # indexed by class id


class DatasetError(ValueError):
    """Raised for malformed image or mask files."""


@dataclass(frozen=True, eq=False)
class Sample:
    """One image with its class mask.

    Attributes:
        name: File stem of the sample.
        image: Image tensor `[1, H, W]` with values in `[0, 1]`.
        mask: Integer class ids `[H, W]`.
    """

    name: str
    image: Tensor
    mask: np.ndarray


def _blob(rng: np.random.Generator, height: int, width: int, count: int, free: np.ndarray) -> np.ndarray:
    """Select the `count` free pixels closest to a random elongated ellipse centre."""

    selected = np.zeros((height, width), dtype=bool)
    count = min(count, int(free.sum()))
    if count <= 0:
        return selected

    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = rng.uniform(0.2, 0.8) * height, rng.uniform(0.2, 0.8) * width
    angle = rng.uniform(0, np.pi)
    aspect = rng.uniform(2.0, 4.0)

    u = (rows - cy) * np.cos(angle) + (cols - cx) * np.sin(angle)
    v = -(rows - cy) * np.sin(angle) + (cols - cx) * np.cos(angle)
    distance = (u / aspect) ** 2 + v ** 2 + rng.uniform(0, 0.5, (height, width))
    distance[~free] = np.inf

    nearest = np.argpartition(distance.ravel(), count - 1)[:count]
    selected.ravel()[nearest] = True
    return selected


def _land(rng: np.random.Generator, height: int, width: int, fraction: float) -> np.ndarray:
    """A coastline region entering from a random edge covering `fraction` of the scene."""

    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    edge = rng.integers(4)
    depth = [rows / height, 1 - rows / height, cols / width, 1 - cols / width][edge]
    along = [cols / width, cols / width, rows / height, rows / height][edge]
    coast = depth + 0.05 * np.sin(2 * np.pi * (rng.uniform(1, 3) * along + rng.uniform()))

    count = int(round(fraction * height * width))
    land = np.zeros((height, width), dtype=bool)
    if count > 0:
        land.ravel()[np.argpartition(coast.ravel(), count - 1)[:count]] = True

    return land


def generate_scene(seed: int | Sequence[int], config: SceneConfig) -> tuple[Tensor, np.ndarray]:
    """Generate one synthetic scene.

    Spill and look-alike regions hold exactly `round(fraction * H * W)`
    pixels (fewer only when the scene runs out of free sea pixels).

    Args:
        seed: Seed (or seed sequence) of the scene.
        config: Scene recipe.

    Returns:
        The image `[1, H, W]` in `[0, 1]` and the `[H, W]` class mask.
    """

    rng = np.random.default_rng(seed)
    height, width = config.height, config.width
    mask = np.full((height, width), SEA, dtype=np.int64)

    if rng.uniform() < config.land_probability:
        fraction = rng.uniform(0.05, max(0.05, config.max_land_fraction))
        mask[_land(rng, height, width, min(fraction, config.max_land_fraction))] = LAND

    spill_pixels = int(round(config.spill_fraction * height * width))
    mask[_blob(rng, height, width, spill_pixels, mask == SEA)] = SPILL

    if rng.uniform() < config.lookalike_probability:
        lookalike_pixels = int(round(config.lookalike_fraction * height * width))
        mask[_blob(rng, height, width, lookalike_pixels, mask == SEA)] = LOOKALIKE

    for _ in range(rng.integers(0, config.max_ships + 1)):
        y, x = rng.integers(0, height), rng.integers(0, width - 2)
        length = rng.integers(1, 4)
        hull = (slice(y, y + 1), slice(x, x + length))
        mask[hull] = np.where(mask[hull] == SEA, SHIP, mask[hull])

    image = INTENSITY[mask]
    if config.speckle > 0:
        looks = 1 / config.speckle ** 2
        image = image * rng.gamma(looks, 1 / looks, size=image.shape)

    return Tensor(np.clip(image, 0.0, 1.0)[None]), mask


def generate_dataset(count: int, config: SceneConfig, seed: int = 0, workers: int = 1) -> list[Sample]:
    """Generate `count` scenes named `scene_0000`, `scene_0001`, ...

    Scene `i` is seeded with `(seed, i)`, so datasets with different seeds
    never share scenes and the result does not depend on `workers`.
    """

    def build(i: int) -> Sample:
        image, mask = generate_scene((seed, i), config)
        return Sample(f"scene_{i:04d}", image, mask)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(build, range(count)))

    return [build(i) for i in range(count)]


def write_pgm(path: Path, array: np.ndarray) -> None:
    """Write a `[H, W]` array of values in `[0, 255]` as a binary (P5) PGM file."""

    Image.fromarray(np.asarray(array).astype(np.uint8)).save(path, format="PPM")


def read_pgm(path: Path) -> np.ndarray:
    """Read an 8-bit grayscale PGM file as a `[H, W]` uint8 array.

    Raises:
        DatasetError: If the file is unreadable or not 8-bit grayscale.
    """

    try:
        with Image.open(path) as image:
            if image.mode != "L":
                raise DatasetError(f"{path}: expected an 8-bit grayscale PGM, got mode {image.mode}")

            return np.asarray(image, dtype=np.uint8).copy()

    except (OSError, UnidentifiedImageError) as exc:
        raise DatasetError(f"{path}: {exc}") from exc


def write_sample(sample: Sample, directory: Path) -> tuple[Path, Path]:
    """Write a sample as `<name>.pgm` and `<name>_mask.pgm` into `directory`."""

    directory.mkdir(parents=True, exist_ok=True)
    image_path = directory / f"{sample.name}.pgm"
    mask_path = directory / f"{sample.name}{MASK_SUFFIX}.pgm"

    write_pgm(image_path, np.round(sample.image.data[0] * 255))
    write_pgm(mask_path, sample.mask)
    return image_path, mask_path


def load_directory(path: Path, num_classes: int = 5) -> list[Sample]:
    """Load the image/mask pairs of a directory.

    Args:
        path: Directory of `<name>.pgm` and `<name>_mask.pgm` files.
        num_classes: Number of classes masks are validated against.

    Returns:
        The samples sorted by name.

    Raises:
        DatasetError: For a missing pair, an out of range label, or
            mismatched image and mask sizes.
    """

    logger.debug(f"Loading samples from {path}.")
    files = sorted(path.glob("*.pgm"))
    masks = {p.stem[:-len(MASK_SUFFIX)]: p for p in files if p.stem.endswith(MASK_SUFFIX)}
    images = {p.stem: p for p in files if not p.stem.endswith(MASK_SUFFIX)}

    for stem, mask_path in masks.items():
        if stem not in images:
            raise DatasetError(f"{mask_path}: no matching image {stem}.pgm")

    samples = []
    for stem, image_path in images.items():
        if stem not in masks:
            raise DatasetError(f"{image_path}: no matching mask {stem}{MASK_SUFFIX}.pgm")

        image, mask = read_pgm(image_path), read_pgm(masks[stem])
        if image.shape != mask.shape:
            raise DatasetError(f"{masks[stem]}: mask size {mask.shape} does not match image size {image.shape}")

        if mask.size and mask.max() >= num_classes:
            raise DatasetError(f"{masks[stem]}: label {int(mask.max())} is out of range for {num_classes} classes")

        samples.append(Sample(stem, Tensor(image[None] / 255.0), mask.astype(np.int64)))

    if not samples:
        logger.warning(f"No image/mask pairs found in {path}.")

    logger.info(f"Loaded {len(samples)} samples from {path}.")
    return samples


def split_dataset(samples: Sequence[Sample], holdout_fraction: float, seed: int = 0) -> tuple[list[Sample], list[Sample]]:
    """Split samples into training and held-out subsets by a seeded shuffle.

    The held-out subset holds `floor(len(samples) * holdout_fraction)`
    samples and may be empty.
    """

    order = np.random.default_rng(seed).permutation(len(samples))
    held = int(len(samples) * holdout_fraction)
    holdout = [samples[i] for i in sorted(order[:held])]
    train = [samples[i] for i in sorted(order[held:])]
    return train, holdout
