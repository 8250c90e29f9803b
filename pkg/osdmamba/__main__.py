"""Application entrypoint triggered by calling the packaged CLI command."""

import logging
import sys
from argparse import Namespace

import numpy as np

from .bench import *
from .checkpoints import *
from .cli import *
from .configs import *
from .data import *
from .metrics import write_metrics_csv
from .training import *
from .verification import run_suites

__all__ = ["EXIT_DATA", "EXIT_DIVERGED", "EXIT_FAILURE", "EXIT_OK", "EXIT_USAGE", "main", "run_application"]

logger = logging.getLogger("osdmamba")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_DIVERGED = 2
EXIT_USAGE = 64
EXIT_DATA = 65

BENCH_EXPONENT_RANGE = (0.8, 1.3)


def main() -> None:  # pragma: no cover
    """Application entry point called when executing the command line interface.

    This is a wrapper around the `run_application` function used to provide
    graceful error handling.
    """

    try:
        code = run_application()

    except KeyboardInterrupt:
        code = EXIT_FAILURE

    except Exception as e:
        logger.critical(str(e), exc_info=True)
        code = EXIT_FAILURE

    sys.exit(code)


def run_application(cli_args: list[str] = None, /) -> int:
    """Run a single `osdmamba` command.

    This function is equivalent to launching the application from the command
    line and accepts the same arguments as those provided in the CLI. Arguments
    are parsed from STDIN by default, unless specified in the function call.

    Args:
        A list of commandline arguments used to run the application.

    Returns:
        The process exit code.
    """

    try:
        args = create_cli_parser().parse_args(cli_args)

    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    configure_cli_logging(args.log_level)
    commands = {
        "synth": run_synth,
        "train": run_train,
        "eval": run_eval,
        "verify": run_verify,
        "bench": run_bench,
    }

    try:
        return commands[args.command](args)

    except ConfigError as exc:
        logger.error(f"Configuration error: {exc}")
        return EXIT_USAGE

    except (DatasetError, CheckpointError) as exc:
        logger.error(str(exc))
        return EXIT_DATA

    except DivergenceError as exc:
        logger.error(f"Training diverged: {exc}")
        return EXIT_DIVERGED

    except OSError as exc:
        logger.error(f"I/O failure: {exc}")
        return EXIT_DATA


def _load_dataset(args: Namespace, scene: SceneConfig, num_classes: int) -> list[Sample]:
    """Read `--data` or generate `--synthetic` scenes."""

    if args.data is not None:
        if not args.data.is_dir():
            raise ConfigError(f"Data directory {args.data} does not exist")

        logger.info(f"Loading samples from {args.data}.")
        return load_directory(args.data, num_classes)

    if args.synthetic < 0:
        raise ConfigError(f"Scene count must be non-negative, got {args.synthetic}")

    logger.info(f"Generating {args.synthetic} synthetic {scene.height}x{scene.width} scenes.")
    return generate_dataset(args.synthetic, scene, seed=scene.seed, workers=args.workers)


def _log_config(*models) -> None:
    logger.info("Resolved configuration:")
    for line in describe_config(*models):
        logger.info(f"  {line}")


def run_synth(args: Namespace) -> int:
    """Write synthetic image/mask pairs and print the class distribution."""

    if args.count < 0:
        raise ConfigError(f"Scene count must be non-negative, got {args.count}")

    scene = resolve_configs(args.config, config_overrides(args)).scene
    _log_config(scene)
    if args.count == 0:
        logger.warning("Scene count is zero; nothing to generate.")
        return EXIT_OK

    samples = generate_dataset(args.count, scene, seed=scene.seed, workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    for sample in samples:
        write_sample(sample, args.out)

    logger.info(f"Wrote {len(samples)} scenes to {args.out}.")
    counts = np.bincount(np.concatenate([s.mask.ravel() for s in samples]), minlength=scene.num_classes)
    print("class,pixels,fraction")
    for name, count in zip(class_names(scene.num_classes), counts):
        print(f"{name},{count},{count / counts.sum():.6f}")

    return EXIT_OK


def run_train(args: Namespace) -> int:
    """Train a network and write its checkpoint and CSV log."""

    if args.workers < 1:
        raise ConfigError(f"Worker count must be positive, got {args.workers}")

    resolved = resolve_configs(args.config, config_overrides(args), network_preset=args.preset)
    _log_config(resolved.network, resolved.train, resolved.scene)
    dataset = _load_dataset(args, resolved.scene, resolved.network.num_classes)

    log_path = args.log or args.out.with_suffix(".csv")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    result = train(
        resolved.train,
        resolved.network,
        dataset,
        workers=args.workers,
        log_path=log_path,
        checkpoint_path=args.out,
        dtype=args.dtype,
    )

    if result.history:
        last = result.history[-1]
        logger.info(f"Finished after {last.epoch} epochs with mIoU {last.miou:.4f}.")

    return EXIT_OK


def run_eval(args: Namespace) -> int:
    """Score a checkpoint and write the metrics CSV."""

    checkpoint = load_checkpoint(args.ckpt)
    scene = resolve_configs(args.config, config_overrides(args)).scene
    _log_config(checkpoint.network, scene)
    dataset = _load_dataset(args, scene, checkpoint.network.num_classes)
    if not dataset:
        raise DatasetError("Cannot evaluate on an empty dataset")

    result = evaluate(checkpoint, dataset, masks_out=args.masks_out, workers=args.workers)
    report = result.report

    print(f"{'class':<12} {'IoU':>8} {'F1':>8} {'FP rate':>8} {'fall-out':>8}")
    for i, name in enumerate(report.class_names):
        marker = "" if report.present[i] else " (absent)"
        print(f"{name:<12} {report.iou[i]:>8.4f} {report.f1[i]:>8.4f} {report.fp_rate[i]:>8.4f} {report.fall_out[i]:>8.4f}{marker}")

    print(f"mIoU {report.miou:.4f}  macro F1 {report.macro_f1:.4f}  OA {report.oa:.4f}  FP {report.overall_fp:.4f}")

    metrics_path = args.metrics_out or args.ckpt.with_suffix(".metrics.csv")
    write_metrics_csv(report, metrics_path)
    logger.info(f"Metrics written to {metrics_path}.")
    return EXIT_OK


def run_verify(args: Namespace) -> int:
    """Run the verification suites, failing when any property fails."""

    seed = args.seed or 0
    _log_config({"suite": args.suite, "seed": seed})
    results = run_suites([args.suite], seed=seed)
    failures = [r for r in results if not r.passed]
    logger.info(f"{len(results) - len(failures)}/{len(results)} properties passed.")
    return EXIT_FAILURE if failures else EXIT_OK


def run_bench(args: Namespace) -> int:
    """Benchmark the ConvSSM scans and check linear growth in sequence length."""

    if len(args.lengths) < 2 or not args.state_channels:
        raise ConfigError("Benchmarking needs at least two lengths and one state width")

    settings = {
        "lengths": args.lengths,
        "state_channels": args.state_channels,
        "repeats": args.repeats,
        "seed": args.seed or 0,
        "workers": args.workers,
    }
    _log_config(settings)
    rows = benchmark_convssm(**settings)
    print(format_bench_csv(rows), end="")

    low, high = BENCH_EXPONENT_RANGE
    code = EXIT_OK
    for p in args.state_channels:
        subset = [r for r in rows if r.state_channels == p]
        exponent = fit_exponent([r.length for r in subset], [r.sequential_seconds for r in subset])
        within = low <= exponent <= high
        log = logger.info if within else logger.error
        log(f"P={p}: sequential scan time grows as L^{exponent:.3f}")
        if not within:
            code = EXIT_FAILURE

    return code
