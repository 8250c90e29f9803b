from unittest import TestCase

import numpy as np

from osdmamba.tensor import ContractError, Tensor, backward, conv2d, sigmoid, silu, softmax, softplus, zero_grad
from osdmamba.verification import finite_difference_check


class TestBackward(TestCase):
    """Unit tests for the `backward` function."""

    def test_sum_gradient(self) -> None:
        """Verify the gradient of a sum is all ones."""

        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        grads = backward(x.sum())
        np.testing.assert_array_equal(np.ones((2, 3)), grads[x])

    def test_square_gradient(self) -> None:
        """Verify the gradient of a sum of squares is twice the input."""

        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        grads = backward((x * x).sum())
        np.testing.assert_array_equal([2, 4, 6], grads[x])

    def test_convolution_matches_finite_differences(self) -> None:
        """Verify the gradient of a convolution composite against central differences."""

        rng = np.random.default_rng(4)
        error = finite_difference_check(
            lambda x, k: silu(conv2d(x, k, padding=1)).sum(),
            [rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(2, 2, 3, 3))],
        )
        self.assertLess(error, 1e-6)

    def test_accumulation(self) -> None:
        """Verify repeated calls accumulate into the leaf buffer until reset."""

        x = Tensor([1.0, 2.0], requires_grad=True)
        backward(x.sum())
        backward(x.sum())
        np.testing.assert_array_equal([2, 2], x.grad)

        zero_grad([x])
        self.assertIsNone(x.grad)

    def test_non_scalar_output(self) -> None:
        """Verify a non-scalar output is rejected."""

        with self.assertRaises(ContractError):
            backward(Tensor([1.0, 2.0], requires_grad=True) * 2)

    def test_random_compositions_match_finite_differences(self) -> None:
        """Verify random chains of up to six primitives against central differences."""

        steps = {
            "sigmoid": lambda t, y: sigmoid(t),
            "silu": lambda t, y: silu(t),
            "softplus": lambda t, y: softplus(t),
            "softmax": lambda t, y: softmax(t, axis=-1),
            "mul": lambda t, y: t * y,
            "add": lambda t, y: t + y,
        }
        names = sorted(steps)
        rng = np.random.default_rng(11)
        for _ in range(20):
            chain = [names[i] for i in rng.integers(0, len(names), size=rng.integers(1, 7))]

            def composite(x: Tensor, y: Tensor, w: Tensor) -> Tensor:
                t = x
                for name in chain:
                    t = steps[name](t, y)
                return (t * w).sum()

            with self.subTest(chain=chain):
                arrays = [rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4))]
                self.assertLess(finite_difference_check(composite, arrays), 1e-6)
