import math
from unittest import TestCase

from osdmamba.tensor import Tensor, silu


class TestSilu(TestCase):
    """Unit tests for the `silu` function."""

    def test_zero(self) -> None:
        """Verify SiLU vanishes at the origin."""

        self.assertEqual(0.0, silu(Tensor(0.0)).item())

    def test_large_input(self) -> None:
        """Verify SiLU approaches the identity for large inputs."""

        self.assertLess(abs(silu(Tensor(20.0)).item() - 20), 1e-7)

    def test_closed_form(self) -> None:
        """Verify SiLU at one equals the logistic function at one."""

        self.assertAlmostEqual(1 / (1 + math.exp(-1)), silu(Tensor(1.0)).item(), places=12)
