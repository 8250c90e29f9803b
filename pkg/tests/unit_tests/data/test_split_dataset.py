from unittest import TestCase

from osdmamba.configs import SceneConfig
from osdmamba.data import generate_dataset, split_dataset


class TestSplitDataset(TestCase):
    """Unit tests for the `split_dataset` function."""

    def setUp(self) -> None:
        """Generate ten small scenes."""

        self.samples = generate_dataset(10, SceneConfig(height=32, width=32))

    def test_sizes_and_disjointness(self) -> None:
        """Verify an 80/20 split covers every sample exactly once."""

        train, holdout = split_dataset(self.samples, 0.2, seed=0)
        self.assertEqual((8, 2), (len(train), len(holdout)))
        self.assertEqual(sorted(s.name for s in self.samples), sorted(s.name for s in train + holdout))

    def test_deterministic(self) -> None:
        """Verify the same seed gives the same split."""

        first = split_dataset(self.samples, 0.2, seed=3)
        second = split_dataset(self.samples, 0.2, seed=3)
        self.assertEqual([s.name for s in first[1]], [s.name for s in second[1]])

    def test_small_dataset(self) -> None:
        """Verify a dataset too small to hold out keeps every sample for training."""

        train, holdout = split_dataset(self.samples[:2], 0.2)
        self.assertEqual(2, len(train))
        self.assertEqual([], holdout)
