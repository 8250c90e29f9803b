from unittest import TestCase

import numpy as np

from osdmamba.scan import init_s6_parameters, selective_scan, selective_scan_kernel
from osdmamba.tensor import DimensionError, NumericError, Tensor
from osdmamba.verification import reference_selective_scan


class TestSelectiveScanKernel(TestCase):
    """Unit tests for the `selective_scan_kernel` function."""

    def test_memoryless(self) -> None:
        """Verify a vanishing transition with unit input and output maps returns the input."""

        x = np.array([[0.5], [-1.0], [2.0], [3.0]])
        y = selective_scan_kernel(
            Tensor(x), Tensor(np.ones((4, 1))), Tensor([[-1e6]]),
            Tensor(np.ones((4, 1))), Tensor(np.ones((4, 1))), Tensor([0.0])
        )
        np.testing.assert_allclose(x, y.data, rtol=0, atol=1e-12)

    def test_accumulator(self) -> None:
        """Verify a unit transition accumulates the inputs."""

        x = np.array([[1.0], [2.0], [3.0], [4.0]])
        C = np.zeros((4, 3))
        C[:, 0] = 1
        y = selective_scan_kernel(
            Tensor(x), Tensor(np.ones((4, 1))), Tensor(np.zeros((1, 3))),
            Tensor(np.ones((4, 3))), Tensor(C), Tensor([0.0])
        )
        np.testing.assert_allclose(np.cumsum(x, axis=0), y.data, rtol=0, atol=1e-12)

    def test_non_finite_operand(self) -> None:
        """Verify non-finite values raise a numeric error."""

        with self.assertRaises(NumericError):
            selective_scan_kernel(
                Tensor([[np.nan]]), Tensor([[1.0]]), Tensor([[-1.0]]),
                Tensor([[1.0]]), Tensor([[1.0]]), Tensor([0.0])
            )

    def test_long_sequence_bounded(self) -> None:
        """Verify 4096 steps stay finite and within the geometric bound of the state."""

        rng = np.random.default_rng(12)
        length, channels, state_dim = 4096, 2, 4
        x = rng.uniform(-1, 1, size=(length, channels))
        delta = rng.uniform(0.01, 1, size=(length, channels))
        A = -np.tile(np.arange(1.0, state_dim + 1), (channels, 1))
        B = rng.uniform(-1, 1, size=(length, state_dim))
        C = rng.uniform(-1, 1, size=(length, state_dim))
        D_skip = np.array([0.5, -1.0])

        y = selective_scan_kernel(Tensor(x), Tensor(delta), Tensor(A), Tensor(B), Tensor(C), Tensor(D_skip)).data

        largest_input = np.abs((delta * x)[..., None] * B[:, None, :]).max()
        largest_decay = np.exp(delta.min() * A.max())
        state_bound = largest_input / (1 - largest_decay)
        bound = state_dim * np.abs(C).max() * state_bound + np.abs(D_skip).max() * np.abs(x).max()
        self.assertTrue(np.all(np.isfinite(y)))
        self.assertLessEqual(np.abs(y).max(), bound)


class TestSelectiveScan(TestCase):
    """Unit tests for the `selective_scan` function."""

    def test_matches_step_by_step_recurrence(self) -> None:
        """Verify the scan against an independently written recurrence."""

        rng = np.random.default_rng(6)
        params = init_s6_parameters(channels=3, state_dim=4, rng=rng)
        seq = rng.normal(size=(16, 3))
        out = selective_scan(Tensor(seq), params)
        np.testing.assert_allclose(reference_selective_scan(seq, params), out.data, rtol=0, atol=1e-10)

    def test_channel_mismatch(self) -> None:
        """Verify tokens with the wrong width are rejected."""

        params = init_s6_parameters(channels=3, rng=np.random.default_rng(0))
        with self.assertRaises(DimensionError):
            selective_scan(Tensor(np.zeros((4, 2))), params)

    def test_long_sequence_finite(self) -> None:
        """Verify initialized parameters keep a 4096 token scan finite."""

        rng = np.random.default_rng(13)
        params = init_s6_parameters(channels=3, state_dim=4, rng=rng)
        out = selective_scan(Tensor(rng.normal(size=(4096, 3))), params)
        self.assertEqual((4096, 3), out.shape)
        self.assertTrue(np.all(np.isfinite(out.data)))
