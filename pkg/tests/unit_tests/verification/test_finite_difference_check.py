from unittest import TestCase

import numpy as np

from osdmamba.tensor import Tensor, record_operation
from osdmamba.verification import finite_difference_check, relative_error


class TestRelativeError(TestCase):
    """Unit tests for the `relative_error` function."""

    def test_identical(self) -> None:
        """Verify identical arrays have zero error."""

        a = np.arange(6.0)
        self.assertEqual(0.0, relative_error(a, a.copy()))

    def test_scaled_by_larger_norm(self) -> None:
        """Verify the difference is measured against the larger norm."""

        self.assertAlmostEqual(0.5, relative_error(np.array([1.0, 0.0]), np.array([2.0, 0.0])))

    def test_zero_arrays(self) -> None:
        """Verify two zero arrays do not divide by zero."""

        self.assertEqual(0.0, relative_error(np.zeros(3), np.zeros(3)))


class TestFiniteDifferenceCheck(TestCase):
    """Unit tests for the `finite_difference_check` function."""

    def test_correct_gradient(self) -> None:
        """Verify a correctly differentiated function passes."""

        rng = np.random.default_rng(0)
        error = finite_difference_check(lambda x, y: (x * y * x).sum(), [rng.normal(size=(3, 2)), rng.normal(size=(3, 2))])
        self.assertLess(error, 1e-7)

    def test_wrong_gradient_detected(self) -> None:
        """Verify a primitive with a deliberately wrong derivative fails."""

        def bad_square(x: Tensor) -> Tensor:
            return record_operation("bad_square", x.data ** 2, (x,), lambda g: (g * x.data,))

        error = finite_difference_check(lambda x: bad_square(x).sum(), [np.array([1.0, 2.0, -3.0])])
        self.assertAlmostEqual(0.5, error, places=6)
