import math
from unittest import TestCase

import numpy as np

from osdmamba.convssm import init_hippo, spectral_radius
from osdmamba.tensor import ContractError


class TestInitHippo(TestCase):
    """Unit tests for the `init_hippo` function."""

    def test_single_state_channel(self) -> None:
        """Verify a single state channel decays by `exp(-0.5)`."""

        params = init_hippo(1, rng=np.random.default_rng(0))
        self.assertAlmostEqual(math.exp(-0.5), params.A.data.item(), places=15)

    def test_kernel_shapes(self) -> None:
        """Verify kernel shapes for distinct input and output widths."""

        params = init_hippo(4, kernel_size=3, input_channels=2, output_channels=5, rng=np.random.default_rng(0))
        self.assertEqual((4, 4, 1, 1), params.A.shape)
        self.assertEqual((4, 2, 3, 3), params.B.shape)
        self.assertEqual((5, 4, 3, 3), params.C.shape)
        self.assertEqual((5, 2, 3, 3), params.D.shape)

    def test_stable_spectrum(self) -> None:
        """Verify the state kernel is contractive."""

        self.assertLess(spectral_radius(init_hippo(8, rng=np.random.default_rng(0))), 1.0)

    def test_no_state_channels(self) -> None:
        """Verify a zero width state is rejected."""

        with self.assertRaises(ContractError):
            init_hippo(0)
