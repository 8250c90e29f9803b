from unittest import TestCase

from osdmamba.configs import NetworkConfig
from osdmamba.network import count_flops


class TestCountFlops(TestCase):
    """Unit tests for the `count_flops` function."""

    def test_scales_with_area(self) -> None:
        """Verify doubling the input side multiplies the count by about four."""

        for config in (NetworkConfig(), NetworkConfig.preset("tiny")):
            ratio = count_flops(config, 128, 128) / count_flops(config, 64, 64)
            self.assertGreaterEqual(ratio, 3.5)
            self.assertLessEqual(ratio, 4.5)

    def test_ablations_are_cheaper(self) -> None:
        """Verify removing decoder blocks or heads lowers the count."""

        full = count_flops(NetworkConfig(), 64, 64)
        self.assertLess(count_flops(NetworkConfig(decoder_convssm=False), 64, 64), full)
        self.assertLess(count_flops(NetworkConfig(deep_supervision=False), 64, 64), full)
        self.assertLess(count_flops(NetworkConfig(decoder_style="plain"), 64, 64), full)

    def test_convssm_length_adds_linear_cost(self) -> None:
        """Verify each extra decoder ConvSSM step adds the same amount."""

        one, two, three = (count_flops(NetworkConfig(convssm_length=n), 64, 64) for n in (1, 2, 3))
        self.assertEqual(two - one, three - two)

    def test_tiny_ledger(self) -> None:
        """Verify the tiny preset at 32x32 against a hand-tallied multiply ledger."""

        # VSS blocks: projections and depthwise conv, then four directional scans
        vss_8x8_c4 = 6144 + 4608 + 4 * (4096 + 5120)
        vss_4x4_c8 = 6144 + 2304 + 4 * (3072 + 2560)
        vss_2x2_c16 = 6144 + 1152 + 4 * (2560 + 1280)
        vss_1x1_c32 = 6144 + 576 + 4 * (2304 + 640)
        vss_16x16_c2 = 6144 + 9216 + 4 * (6144 + 10240)

        # ConvSSM blocks: state, input, output and feedthrough convolutions
        convssm_8x8_c4 = 256 + 4608 + 4608 + 9216
        convssm_16x16_c2 = 1024 + 9216 + 9216 + 9216

        encoder = 4096 + vss_8x8_c4 + vss_4x4_c8 + vss_2x2_c16 + vss_1x1_c32 + 3 * 2048
        stage1 = 2048 + 1024 + 2 * vss_2x2_c16 + 320
        stage2 = 2048 + 1024 + 2 * vss_4x4_c8 + 640
        stage3 = 2048 + 1024 + convssm_8x8_c4 + 2 * vss_8x8_c4 + 1280
        stage4 = 2048 + convssm_16x16_c2 + 2 * vss_16x16_c2
        heads = 2048 + 32 * 32 * 5

        self.assertEqual(562304, encoder + stage1 + stage2 + stage3 + stage4 + heads)
        self.assertEqual(562304, count_flops(NetworkConfig.preset("tiny"), 32, 32))
        self.assertEqual(562304 - 2240, count_flops(NetworkConfig.preset("tiny", deep_supervision=False), 32, 32))
