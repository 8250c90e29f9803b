"""Function tests for the `train` command."""

import csv

from osdmamba.checkpoints import load_checkpoint
from osdmamba.configs import NetworkConfig
from tests.function_tests.base import CommandTestBase


class TestTrain(CommandTestBase):
    """Function tests for the `train` command."""

    def test_zero_epochs(self) -> None:
        """Verify a zero epoch run writes a loadable checkpoint and a log header."""

        checkpoint = self.tmp / "model.osdm"
        self.assertEqual(0, self.train_tiny(checkpoint, "--epochs", "0"))

        restored = load_checkpoint(checkpoint)
        self.assertEqual(NetworkConfig.preset("tiny"), restored.network)
        self.assertEqual(0, restored.step)
        with (self.tmp / "model.csv").open() as handle:
            self.assertEqual([["epoch", "loss", "miou", "oa", "oil_iou", "oil_fp"]], list(csv.reader(handle)))

    def test_one_epoch(self) -> None:
        """Verify an epoch is logged and the checkpoint records the update count."""

        checkpoint = self.tmp / "model.osdm"
        self.assertEqual(0, self.train_tiny(checkpoint, "--epochs", "1", "--batch-size", "1", "--log", self.tmp / "log.csv"))

        self.assertEqual(2, load_checkpoint(checkpoint).step)
        with (self.tmp / "log.csv").open() as handle:
            self.assertEqual(2, len(list(csv.reader(handle))))

    def test_single_precision_checkpoint(self) -> None:
        """Verify `--dtype f32` stores a single precision checkpoint."""

        checkpoint = self.tmp / "model.osdm"
        self.assertEqual(0, self.train_tiny(checkpoint, "--epochs", "0", "--dtype", "f32"))
        self.assertEqual("f32", load_checkpoint(checkpoint).dtype)

    def test_ablation_flags(self) -> None:
        """Verify the ablation flags reach the stored network configuration."""

        checkpoint = self.tmp / "model.osdm"
        code = self.train_tiny(
            checkpoint, "--epochs", "0", "--no-deep-supervision", "--no-decoder-convssm", "--decoder-style", "light"
        )

        self.assertEqual(0, code)
        network = load_checkpoint(checkpoint).network
        self.assertFalse(network.deep_supervision)
        self.assertFalse(network.decoder_convssm)
        self.assertEqual("light", network.decoder_style)

    def test_plain_decoder_without_vss(self) -> None:
        """Verify a plain decoder and a decoder without VSS blocks both train for an epoch."""

        for flags in (("--decoder-style", "plain"), ("--no-decoder-vss",)):
            with self.subTest(flags=flags):
                checkpoint = self.tmp / "model.osdm"
                self.assertEqual(0, self.train_tiny(checkpoint, "--epochs", "1", "--batch-size", "2", *flags))

                restored = load_checkpoint(checkpoint)
                self.assertEqual(1, restored.step)
                if flags == ("--no-decoder-vss",):
                    self.assertFalse(restored.network.decoder_vss)
                else:
                    self.assertEqual("plain", restored.network.decoder_style)

    def test_config_file(self) -> None:
        """Verify values from a configuration file are applied and flags take precedence."""

        config = self.tmp / "run.yaml"
        config.write_text("convssm_length: 2\nepochs: 5\n")
        checkpoint = self.tmp / "model.osdm"

        code, _ = self.run_command(
            "--config", config, "train", "--synthetic", "2", "--size", "32x32", "--preset", "tiny",
            "--out", checkpoint, "--epochs", "0",
        )

        self.assertEqual(0, code)
        restored = load_checkpoint(checkpoint)
        self.assertEqual(2, restored.network.convssm_length)
        self.assertEqual(0, restored.step)

    def test_unknown_config_key(self) -> None:
        """Verify an unknown configuration key is a usage error."""

        config = self.tmp / "run.yaml"
        config.write_text("learning_rate: 0.1\n")
        code, _ = self.run_command("--config", config, "train", "--synthetic", "2", "--out", self.tmp / "model.osdm")
        self.assertEqual(64, code)

    def test_missing_data_directory(self) -> None:
        """Verify a missing data directory is a usage error."""

        code, _ = self.run_command("train", "--data", self.tmp / "missing", "--out", self.tmp / "model.osdm")
        self.assertEqual(64, code)

    def test_missing_data_source(self) -> None:
        """Verify omitting both `--data` and `--synthetic` is a usage error."""

        code, _ = self.run_command("train", "--out", self.tmp / "model.osdm")
        self.assertEqual(64, code)

    def test_bad_geometry(self) -> None:
        """Verify scenes that are not multiples of 32 are a data error."""

        code, _ = self.run_command(
            "train", "--synthetic", "2", "--size", "40x40", "--preset", "tiny", "--epochs", "0", "--out", self.tmp / "model.osdm"
        )
        self.assertEqual(65, code)
