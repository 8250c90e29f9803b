import math
from unittest import TestCase

import numpy as np

from osdmamba.losses import focal_loss, one_hot
from osdmamba.tensor import ContractError, Tensor, softmax


class TestFocalLoss(TestCase):
    """Unit tests for the `focal_loss` function."""

    def setUp(self) -> None:
        """Create random probabilities and labels over three classes."""

        rng = np.random.default_rng(17)
        self.probs = softmax(Tensor(rng.normal(size=(3, 4, 4))), axis=0)
        self.target = rng.integers(0, 3, size=(4, 4))

    def test_perfect_prediction(self) -> None:
        """Verify a one-hot prediction of the target costs nothing."""

        loss = focal_loss(Tensor(one_hot(self.target, 3)), self.target)
        self.assertEqual(0.0, loss.item())

    def test_reduces_to_cross_entropy(self) -> None:
        """Verify `gamma = 0` with unit weights equals the mean cross-entropy."""

        p_t = np.take_along_axis(self.probs.data, self.target[None], axis=0)[0]
        expected = -np.log(p_t).mean()
        self.assertAlmostEqual(expected, focal_loss(self.probs, self.target, np.ones(3), 0.0).item(), delta=1e-12)

    def test_closed_form(self) -> None:
        """Verify a single binary pixel at `p_t = 0.5` with `gamma = 2`."""

        loss = focal_loss(Tensor(np.full((2, 1, 1), 0.5)), np.zeros((1, 1), dtype=int), np.ones(2), 2.0)
        self.assertAlmostEqual(0.25 * math.log(2), loss.item(), delta=1e-9)

    def test_alpha_scales_loss(self) -> None:
        """Verify scaling every class weight scales the loss."""

        base = focal_loss(self.probs, self.target, np.ones(3)).item()
        scaled = focal_loss(self.probs, self.target, np.full(3, 2.5)).item()
        self.assertAlmostEqual(2.5 * base, scaled, delta=1e-12)

    def test_rejects_invalid_probabilities(self) -> None:
        """Verify probabilities outside the simplex are rejected."""

        with self.assertRaises(ContractError):
            focal_loss(Tensor(np.full((2, 1, 1), 0.7)), np.zeros((1, 1), dtype=int))

        with self.assertRaises(ContractError):
            focal_loss(Tensor(np.array([1.5, -0.5]).reshape(2, 1, 1)), np.zeros((1, 1), dtype=int))
