from pathlib import Path
from tempfile import NamedTemporaryFile
from unittest import TestCase

from osdmamba.configs import ConfigError, NetworkConfig, describe_config, resolve_configs


class TestResolveConfigs(TestCase):
    """Unit tests for the `resolve_configs` function."""

    def test_defaults(self) -> None:
        """Verify the documented training defaults."""

        resolved = resolve_configs()
        self.assertEqual(0.01, resolved.train.lr)
        self.assertEqual(1e-4, resolved.train.weight_decay)
        self.assertEqual(4, resolved.train.batch_size)
        self.assertEqual(100, resolved.train.epochs)
        self.assertEqual(32, resolved.network.base_width)
        self.assertEqual((64, 64), (resolved.scene.height, resolved.scene.width))

    def test_overrides_win(self) -> None:
        """Verify explicit overrides take precedence over the file."""

        with NamedTemporaryFile(delete=False, mode="w", suffix=".yaml") as temp_file:
            temp_file.write("epochs: 3\nbase_width: 8\n")

        resolved = resolve_configs(Path(temp_file.name), {"epochs": 7, "lr": None})
        self.assertEqual(7, resolved.train.epochs)
        self.assertEqual(8, resolved.network.base_width)
        self.assertEqual(0.01, resolved.train.lr)

    def test_seed_is_shared(self) -> None:
        """Verify the seed reaches both the training and the scene settings."""

        resolved = resolve_configs(overrides={"seed": 9})
        self.assertEqual(9, resolved.train.seed)
        self.assertEqual(9, resolved.scene.seed)

    def test_unknown_key(self) -> None:
        """Verify unknown keys are rejected naming the key."""

        with self.assertRaisesRegex(ConfigError, "learning_rate"):
            resolve_configs(overrides={"learning_rate": 0.1})

    def test_invalid_value(self) -> None:
        """Verify values failing validation raise a configuration error."""

        with self.assertRaises(ConfigError):
            resolve_configs(overrides={"batch_size": 0})

        with self.assertRaises(ConfigError):
            resolve_configs(overrides={"base_width": 6})

    def test_preset(self) -> None:
        """Verify presets seed the network configuration."""

        self.assertEqual(NetworkConfig.preset("tiny"), resolve_configs(network_preset="tiny").network)
        with self.assertRaises(ConfigError):
            resolve_configs(network_preset="huge")


class TestDescribeConfig(TestCase):
    """Unit tests for the `describe_config` function."""

    def test_sorted_lines(self) -> None:
        """Verify every key is rendered once in sorted order."""

        resolved = resolve_configs()
        lines = describe_config(resolved.network, resolved.train)
        self.assertEqual(sorted(lines), lines)
        self.assertIn("lr = 0.01", lines)
        self.assertIn("base_width = 32", lines)

    def test_plain_mapping(self) -> None:
        """Verify plain settings mappings render next to models."""

        lines = describe_config(resolve_configs().scene, {"suite": "scan", "seed": 0})
        self.assertIn("suite = scan", lines)
        self.assertIn("seed = 0", lines)
        self.assertEqual(sorted(lines), lines)
