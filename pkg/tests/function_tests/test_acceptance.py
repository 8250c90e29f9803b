"""Long running training checks, enabled with `OSDMAMBA_SLOW_TESTS=1`."""

import unittest

import numpy as np

from osdmamba.configs import NetworkConfig, SceneConfig, TrainConfig
from osdmamba.data import generate_dataset
from osdmamba.training import evaluate, train
from tests.function_tests.base import slow_test

SEEDS = range(5)
IMBALANCE_EPOCHS = 20
SPILL = 1

ABLATIONS = {
    "no deep supervision": {"deep_supervision": False},
    "no decoder ConvSSM": {"decoder_convssm": False},
    "light decoder": {"decoder_style": "light"},
    "plain decoder": {"decoder_style": "plain"},
    "no decoder VSS": {"decoder_vss": False},
}


def _imbalanced_data() -> tuple[list, list]:
    """64 training and 16 test scenes with about 1.5% spill pixels."""

    scene = SceneConfig(height=64, width=64, spill_fraction=0.015)
    return generate_dataset(64, scene, seed=100), generate_dataset(16, scene, seed=200)


def _mean_test_report(network: NetworkConfig, train_config: dict) -> tuple[float, float, float]:
    """Mean spill IoU, spill FP rate and mIoU over the seeds."""

    train_set, test_set = _imbalanced_data()
    spill_iou, spill_fp, miou = [], [], []
    for seed in SEEDS:
        config = TrainConfig(epochs=IMBALANCE_EPOCHS, holdout_fraction=0.0, seed=seed, **train_config)
        report = evaluate(train(config, network, train_set, workers=4).checkpoint, test_set, workers=4).report
        spill_iou.append(report.iou[SPILL])
        spill_fp.append(report.fp_rate[SPILL])
        miou.append(report.miou)

    return float(np.mean(spill_iou)), float(np.mean(spill_fp)), float(np.mean(miou))


class TestOverfit(unittest.TestCase):
    """Overfit a two-scene batch with the default desk network."""

    @slow_test("200 optimizer steps of the desk network")
    def test_overfit_two_scenes(self) -> None:
        """Verify 200 AdamW steps drive the loss below 0.05 and the training mIoU above 0.9."""

        dataset = generate_dataset(2, SceneConfig(), seed=0)
        config = TrainConfig(epochs=200, batch_size=2, lr=0.01, weight_decay=1e-4)

        result = train(config, NetworkConfig(), dataset)
        self.assertEqual(200, result.checkpoint.step)
        self.assertLess(result.history[-1].loss, 0.05)
        self.assertGreater(evaluate(result.checkpoint, dataset).report.miou, 0.9)

    @slow_test("ablated desk networks on the overfit batch")
    def test_ablations_train(self) -> None:
        """Verify every ablated network builds and trains to a finite, decreasing loss."""

        dataset = generate_dataset(2, SceneConfig(), seed=0)
        config = TrainConfig(epochs=20, batch_size=2)
        for name, overrides in ABLATIONS.items():
            with self.subTest(ablation=name):
                history = train(config, NetworkConfig(**overrides), dataset).history
                self.assertTrue(np.isfinite(history[-1].loss))
                self.assertLess(history[-1].loss, history[0].loss)


class TestImbalance(unittest.TestCase):
    """Compare the hybrid objective with plain cross-entropy on imbalanced scenes."""

    @slow_test("five seeds of 64 training scenes for each objective")
    def test_hybrid_beats_cross_entropy(self) -> None:
        """Verify the hybrid loss improves the mean spill IoU and lowers the spill FP rate."""

        full = _mean_test_report(NetworkConfig(), {})
        baseline = _mean_test_report(
            NetworkConfig(deep_supervision=False), {"loss": "cross_entropy", "alpha_mode": "uniform"}
        )

        self.assertGreater(full[0], baseline[0])
        self.assertLessEqual(full[1], baseline[1])

    @slow_test("five seeds of 64 training scenes for each ablation")
    def test_full_network_beats_ablations(self) -> None:
        """Verify the full network's mean test mIoU is at least that of each ablation."""

        full_miou = _mean_test_report(NetworkConfig(), {})[2]
        for name, overrides in ABLATIONS.items():
            with self.subTest(ablation=name):
                self.assertGreaterEqual(full_miou, _mean_test_report(NetworkConfig(**overrides), {})[2])
