"""
The `cli` module manages input/output operations for the application's
command line interface (CLI). Application inputs are parsed using the
built-in `argparse` module while output messages are handled using the
Python `logging` library.

!!! example "Example: Parsing Arguments"

    The `create_cli_parser` function returns an `ArgumentParser`
    instance with pre-populated subcommands and argument definitions.

    ```python
    from osdmamba.cli import create_cli_parser

    parser = create_cli_parser()
    args = parser.parse_args(["verify", "--suite", "scan"])
    print(vars(args))
    ```

!!! example "Example: Enabling Console Logging"

    The `configure_cli_logging` method overrides any existing logging
    configurations and enables console logging according to the provided log
    level.

    ```python
    from osdmamba.cli import configure_cli_logging

    configure_cli_logging(level="INFO")
    ```

Options that mirror configuration keys (for example `--epochs` or
`--no-deep-supervision`) default to `None` and only override the
configuration file when given. `config_overrides` collects them.
"""

import importlib.metadata
import logging.config
from argparse import ArgumentParser, ArgumentTypeError, HelpFormatter, Namespace
from pathlib import Path
from typing import Any

__all__ = ["CONFIG_OPTIONS", "VERSION", "config_overrides", "configure_cli_logging", "create_cli_parser", "parse_size"]

VERSION = importlib.metadata.version("osdmamba")

CONFIG_OPTIONS = (
    "base_width",
    "deep_supervision",
    "decoder_convssm",
    "decoder_style",
    "decoder_vss",
    "heavy_placement",
    "share_scan_parameters",
    "convssm_length",
    "epochs",
    "lr",
    "weight_decay",
    "batch_size",
    "gamma",
    "alpha_mode",
    "loss",
    "schedule",
    "spill_fraction",
    "height",
    "width",
)


def configure_cli_logging(level: str) -> None:
    """Enable console logging with the specified application log level.

    Calling this method overrides and removes all previously configured
    logging configurations.

    Args:
        level: The Python logging level (e.g., "DEBUG", "INFO", etc.).
    """

    # Normalize and validate the logging level.
    level = level.upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise ValueError(f"Invalid logging level: {level}")

    logging.config.dictConfig({
        "version": 1,
        "disable_existing_loggers": True,
        "formatters": {
            "app": {
                "()": "colorlog.ColoredFormatter",
                "format": "%(log_color)s%(levelname)-8s%(reset)s (%(asctime)s) %(message)s",
            },
        },
        "handlers": {
            "app": {
                "class": "colorlog.StreamHandler",
                "formatter": "app",
            },
        },
        "loggers": {
            "osdmamba": {
                "handlers": ["app"],
                "level": level,
                "propagate": False
            },
        }
    })


def parse_size(value: str) -> tuple[int, int]:
    """Parse an `HxW` image size."""

    try:
        height, width = (int(part) for part in value.lower().split("x"))

    except ValueError:
        raise ArgumentTypeError(f"expected a size of the form HxW, got {value!r}")

    return height, width


def _int_list(value: str) -> list[int]:
    try:
        return [int(part) for part in value.split(",") if part]

    except ValueError:
        raise ArgumentTypeError(f"expected a comma separated list of integers, got {value!r}")


def config_overrides(args: Namespace) -> dict[str, Any]:
    """Collect the configuration keys given explicitly on the command line."""

    overrides = {key: getattr(args, key, None) for key in CONFIG_OPTIONS}
    if getattr(args, "size", None) is not None:
        overrides["height"], overrides["width"] = args.size

    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed

    return {key: value for key, value in overrides.items() if value is not None}


def _add_network_options(parser: ArgumentParser) -> None:
    network = parser.add_argument_group("network settings")
    network.add_argument("--preset", default="desk", choices=["desk", "full", "tiny"], help="network size preset.")
    network.add_argument("--base-width", type=int, help="channel width of the first encoder stage.")
    network.add_argument("--decoder-style", choices=["asymmetric", "light", "plain"], help="decoder block layout.")
    network.add_argument("--heavy-placement", choices=["high", "low"], help="stages receiving the ConvSSM blocks.")
    network.add_argument("--convssm-length", type=int, help="sequence length of the decoder ConvSSM.")
    network.add_argument("--no-deep-supervision", dest="deep_supervision", action="store_const", const=False, help="disable the auxiliary heads.")
    network.add_argument("--no-decoder-convssm", dest="decoder_convssm", action="store_const", const=False, help="remove the decoder ConvSSM blocks.")
    network.add_argument("--no-decoder-vss", dest="decoder_vss", action="store_const", const=False, help="remove the decoder VSS blocks.")
    network.add_argument("--share-scan-parameters", action="store_const", const=True, help="share scan weights across directions.")


def _add_data_options(parser: ArgumentParser, required: bool = True) -> None:
    data = parser.add_argument_group("data source")
    source = data.add_mutually_exclusive_group(required=required)
    source.add_argument("--data", type=Path, help="directory of image/mask PGM pairs.")
    source.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic scenes.")
    data.add_argument("--size", type=parse_size, help="synthetic scene size as HxW.")
    data.add_argument("--spill-frac", dest="spill_fraction", type=float, help="synthetic spill pixel fraction.")


def create_cli_parser(exit_on_error: bool = True) -> ArgumentParser:
    """Create a command-line argument parser with preconfigured arguments.

    Args:
        exit_on_error: Whether to exit the program on a parsing error.

    Returns:
        An argument parser instance.
    """

    formatter = lambda prog: HelpFormatter(prog, max_help_position=34)
    parser = ArgumentParser(
        prog="osdmamba",
        description="Train and evaluate state space segmentation networks for oil spill detection.",
        exit_on_error=exit_on_error,
        formatter_class=formatter
    )

    parser.add_argument("--version", action="version", version=VERSION)
    parser.add_argument(
        "--log-level",
        default="INFO",
        type=lambda x: x.upper(),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Set the logging level."
    )
    parser.add_argument("--workers", type=int, default=1, help="worker threads (1 is strictly sequential).")
    parser.add_argument("--seed", type=int, help="random seed.")
    parser.add_argument("--config", type=Path, help="path to a YAML configuration file.")

    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="generate synthetic scenes.", formatter_class=formatter)
    synth.add_argument("--out", type=Path, required=True, help="output directory.")
    synth.add_argument("--count", type=int, default=16, help="number of scenes.")
    synth.add_argument("--size", type=parse_size, help="scene size as HxW.")
    synth.add_argument("--spill-frac", dest="spill_fraction", type=float, help="spill pixel fraction.")

    train = commands.add_parser("train", help="train a network.", formatter_class=formatter)
    _add_data_options(train)
    _add_network_options(train)
    optimization = train.add_argument_group("training settings")
    optimization.add_argument("--out", type=Path, required=True, help="checkpoint file to write.")
    optimization.add_argument("--log", type=Path, help="CSV training log, defaults to the checkpoint path with a .csv suffix.")
    optimization.add_argument("--epochs", type=int, help="number of epochs.")
    optimization.add_argument("--lr", type=float, help="learning rate.")
    optimization.add_argument("--weight-decay", type=float, help="decoupled weight decay.")
    optimization.add_argument("--batch-size", type=int, help="mini-batch size.")
    optimization.add_argument("--gamma", type=float, help="focal loss exponent.")
    optimization.add_argument("--alpha-mode", choices=["inverse_frequency", "uniform"], help="class weighting.")
    optimization.add_argument("--loss", choices=["hybrid", "cross_entropy"], help="training criterion.")
    optimization.add_argument("--schedule", choices=["constant", "cosine"], help="learning rate schedule.")
    optimization.add_argument("--dtype", choices=["f64", "f32"], default="f64", help="checkpoint storage precision.")

    evaluate = commands.add_parser("eval", help="evaluate a checkpoint.", formatter_class=formatter)
    evaluate.add_argument("--ckpt", type=Path, required=True, help="checkpoint file.")
    _add_data_options(evaluate)
    evaluate.add_argument("--masks-out", type=Path, help="directory receiving predicted mask PGMs.")
    evaluate.add_argument("--metrics-out", type=Path, help="metrics CSV, defaults to the checkpoint path with a .metrics.csv suffix.")

    verify = commands.add_parser("verify", help="run the verification suites.", formatter_class=formatter)
    verify.add_argument("--suite", choices=["grad", "scan", "loss", "all"], default="all", help="suite to run.")

    bench = commands.add_parser("bench", help="benchmark the ConvSSM scans.", formatter_class=formatter)
    bench.add_argument("--op", choices=["convssm"], default="convssm", help="operation to benchmark.")
    bench.add_argument("--L", dest="lengths", type=_int_list, default=[16, 32, 64, 128], help="comma separated sequence lengths.")
    bench.add_argument("--P", dest="state_channels", type=_int_list, default=[2, 4], help="comma separated state widths.")
    bench.add_argument("--repeats", type=int, default=3, help="timed repetitions per grid point.")

    return parser
