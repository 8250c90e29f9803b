from unittest import TestCase

import numpy as np

from osdmamba.tensor import ContractError, Tensor, layer_norm


class TestLayerNorm(TestCase):
    """Unit tests for the `layer_norm` function."""

    def test_constant_input(self) -> None:
        """Verify a constant row normalizes to zeros."""

        out = layer_norm(Tensor([5, 5, 5]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose([0, 0, 0], out.data, atol=1e-12)

    def test_unit_variance_input(self) -> None:
        """Verify a row that already has zero mean and unit variance is preserved."""

        out = layer_norm(Tensor([-1, 1]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose([-1, 1], out.data, atol=1e-9)

    def test_row_moments(self) -> None:
        """Verify every normalized row has zero mean and unit variance."""

        x = np.random.default_rng(2).normal(3.0, 2.0, size=(2, 6))
        out = layer_norm(Tensor(x), Tensor(np.ones(6)), Tensor(np.zeros(6))).data
        self.assertTrue(np.all(np.abs(out.mean(axis=-1)) < 1e-10))
        self.assertTrue(np.all(np.abs(out.var(axis=-1) - 1) < 1e-5))

    def test_non_positive_eps(self) -> None:
        """Verify a zero variance floor is rejected."""

        with self.assertRaises(ContractError):
            layer_norm(Tensor([1.0, 2.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0)
