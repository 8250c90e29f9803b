from unittest import TestCase

import numpy as np

from osdmamba.tensor import DimensionError, Tensor, conv2d


def direct_convolution(x: np.ndarray, k: np.ndarray, padding: int) -> np.ndarray:
    """Reference cross-correlation written as explicit nested loops."""

    n, c_in, h, w = x.shape
    c_out, _, kh, kw = k.shape
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, c_out, h + 2 * padding - kh + 1, w + 2 * padding - kw + 1))
    for b in range(n):
        for o in range(c_out):
            for i in range(out.shape[2]):
                for j in range(out.shape[3]):
                    for c in range(c_in):
                        for di in range(kh):
                            for dj in range(kw):
                                out[b, o, i, j] += padded[b, c, i + di, j + dj] * k[o, c, di, dj]

    return out


class TestConv2d(TestCase):
    """Unit tests for the `conv2d` function."""

    def test_identity_kernel(self) -> None:
        """Verify a 1x1 unit kernel returns its input."""

        x = Tensor([[[[1, 2], [3, 4]]]])
        out = conv2d(x, Tensor(np.ones((1, 1, 1, 1))))
        np.testing.assert_array_equal([[[[1, 2], [3, 4]]]], out.data)

    def test_sum_of_ones(self) -> None:
        """Verify an all-ones 3x3 kernel sums an all-ones 3x3 input."""

        out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
        np.testing.assert_array_equal([[[[9.0]]]], out.data)

    def test_matches_direct_convolution(self) -> None:
        """Verify a padded convolution matches the nested loop reference."""

        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 2, 5, 5))
        k = rng.normal(size=(3, 2, 3, 3))
        out = conv2d(Tensor(x), Tensor(k), padding=1)
        np.testing.assert_allclose(direct_convolution(x, k, 1), out.data, rtol=0, atol=1e-12)

    def test_output_shape_with_stride(self) -> None:
        """Verify strided output extents follow `(H + 2p - k) // s + 1`."""

        out = conv2d(Tensor(np.zeros((2, 4, 8, 8))), Tensor(np.zeros((6, 2, 3, 3))), stride=2, padding=1, groups=2)
        self.assertEqual((2, 6, 4, 4), out.shape)

    def test_channel_mismatch(self) -> None:
        """Verify inconsistent channel counts raise a dimension error naming the axis."""

        with self.assertRaisesRegex(DimensionError, "axis 1"):
            conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((1, 2, 3, 3))))

    def test_depthwise_matches_per_channel(self) -> None:
        """Verify a depthwise convolution equals stacked single-channel convolutions."""

        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 3, 5, 5))
        k = rng.normal(size=(3, 1, 3, 3))
        out = conv2d(Tensor(x), Tensor(k), padding=1, groups=3)
        stacked = np.concatenate(
            [conv2d(Tensor(x[:, c : c + 1]), Tensor(k[c : c + 1]), padding=1).data for c in range(3)], axis=1
        )
        np.testing.assert_allclose(stacked, out.data, rtol=0, atol=1e-12)

    def test_linearity(self) -> None:
        """Verify the convolution of a linear combination is the combination of convolutions."""

        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(2, 2, 2, 6, 6))
        k = Tensor(rng.normal(size=(4, 2, 3, 3)))
        a, b = 1.7, -0.3
        combined = conv2d(Tensor(a * x + b * y), k, padding=1).data
        separate = a * conv2d(Tensor(x), k, padding=1).data + b * conv2d(Tensor(y), k, padding=1).data
        np.testing.assert_allclose(separate, combined, rtol=0, atol=1e-10)
