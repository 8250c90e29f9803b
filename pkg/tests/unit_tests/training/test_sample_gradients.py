from unittest import TestCase

import numpy as np

from osdmamba.configs import NetworkConfig, SceneConfig, TrainConfig
from osdmamba.data import generate_dataset
from osdmamba.network import init_network_parameters
from osdmamba.training import sample_gradients


class TestSampleGradients(TestCase):
    """Unit tests for the `sample_gradients` function."""

    def test_gradient_per_parameter(self) -> None:
        """Verify a finite loss and a gradient of matching shape for every parameter."""

        config = NetworkConfig.preset("tiny")
        params = init_network_parameters(config, seed=0)
        sample = generate_dataset(1, SceneConfig(height=32, width=32))[0]

        loss, grads = sample_gradients(params, sample, config, TrainConfig(), np.ones(config.num_classes))

        self.assertTrue(np.isfinite(loss))
        self.assertGreater(loss, 0.0)
        self.assertEqual(set(params), set(grads))
        for name, tensor in params.items():
            self.assertEqual(tensor.shape, grads[name].shape)
            self.assertTrue(np.all(np.isfinite(grads[name])))

    def test_cross_entropy_criterion(self) -> None:
        """Verify the cross entropy criterion gives a different finite loss."""

        config = NetworkConfig.preset("tiny")
        params = init_network_parameters(config, seed=0)
        sample = generate_dataset(1, SceneConfig(height=32, width=32))[0]
        alpha = np.ones(config.num_classes)

        hybrid, _ = sample_gradients(params, sample, config, TrainConfig(), alpha)
        entropy, _ = sample_gradients(params, sample, config, TrainConfig(loss="cross_entropy"), alpha)
        self.assertTrue(np.isfinite(entropy))
        self.assertNotAlmostEqual(hybrid, entropy)
