from unittest import TestCase

from osdmamba.bench import fit_exponent


class TestFitExponent(TestCase):
    """Unit tests for the `fit_exponent` function."""

    def test_linear_growth(self) -> None:
        """Verify timings proportional to the length give an exponent of one."""

        self.assertAlmostEqual(1.0, fit_exponent([16, 32, 64, 128], [0.5, 1.0, 2.0, 4.0]))

    def test_quadratic_growth(self) -> None:
        """Verify timings growing with the square of the length give an exponent of two."""

        self.assertAlmostEqual(2.0, fit_exponent([1, 2, 4], [3.0, 12.0, 48.0]))

    def test_single_length(self) -> None:
        """Verify a single grid point is rejected."""

        with self.assertRaises(ValueError):
            fit_exponent([16], [1.0])
