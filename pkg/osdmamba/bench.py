"""
The `bench` module times the sequential and parallel ConvSSM scans over a
grid of sequence lengths and state widths and compares the measurements
with the analytic multiply count of `convssm_flops`.

!!! example "Example: Measuring Scan Scaling"

    ```python
    from osdmamba.bench import benchmark_convssm, fit_exponent

    rows = benchmark_convssm(lengths=[16, 32, 64, 128], state_channels=[2, 4])
    p2 = [r for r in rows if r.state_channels == 2]
    print(fit_exponent([r.length for r in p2], [r.sequential_seconds for r in p2]))
    ```

The sequential scan costs a fixed amount of work per step, so its running
time should grow linearly in the sequence length. `fit_exponent` returns
the slope of a least squares fit in log-log space, which is close to one
for linear growth.
"""

import csv
import io
import logging
import time
from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np

from .convssm import ConvState, convssm_flops, convssm_scan_parallel, convssm_scan_sequential, init_hippo
from .tensor import Tensor, no_grad, zeros

__all__ = ["BenchRow", "benchmark_convssm", "fit_exponent", "format_bench_csv"]

logger = logging.getLogger("osdmamba")


@dataclass(frozen=True)
class BenchRow:
    """Timing of one `(length, state_channels)` grid point."""

    length: int
    state_channels: int
    sequential_seconds: float
    parallel_seconds: float
    flops: int


def _best_time(fn, repeats: int) -> float:
    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        timings.append(time.perf_counter() - start)

    return min(timings)


def benchmark_convssm(
    lengths: Sequence[int],
    state_channels: Sequence[int],
    input_channels: int = 2,
    kernel_size: int = 3,
    height: int = 8,
    width: int = 8,
    repeats: int = 3,
    seed: int = 0,
    workers: int = 1,
) -> list[BenchRow]:
    """Time both scan variants for every `(L, P)` pair.

    Args:
        lengths: Sequence lengths `L`.
        state_channels: State widths `P`.
        input_channels: Input and output channels.
        kernel_size: Spatial kernel size.
        height: Grid height.
        width: Grid width.
        repeats: Timed repetitions, the fastest is reported.
        seed: Seed of the kernels and inputs.
        workers: Threads used by the parallel scan.

    Returns:
        One row per pair, ordered by `P` then `L`.
    """

    rng = np.random.default_rng(seed)
    rows = []
    with no_grad():
        for p in state_channels:
            params = init_hippo(p, kernel_size, input_channels, input_channels, rng=rng)
            x0 = ConvState(zeros(p, height, width))
            for length in lengths:
                u = Tensor(rng.normal(size=(length, input_channels, height, width)))
                sequential = _best_time(lambda: convssm_scan_sequential(u, x0, params), repeats)
                parallel = _best_time(lambda: convssm_scan_parallel(u, x0, params, workers=workers), repeats)
                rows.append(BenchRow(length, p, sequential, parallel, convssm_flops(params, height, width, length)))
                logger.debug(f"L={length} P={p}: sequential {sequential:.4f}s, parallel {parallel:.4f}s")

    return rows


def fit_exponent(lengths: Sequence[int], seconds: Sequence[float]) -> float:
    """Slope of `log(seconds)` against `log(lengths)`."""

    if len(lengths) < 2:
        raise ValueError("At least two lengths are needed to fit a growth exponent")

    slope, _ = np.polyfit(np.log(lengths), np.log(seconds), 1)
    return float(slope)


def format_bench_csv(rows: Sequence[BenchRow]) -> str:
    """Render benchmark rows as CSV text with a header row."""

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([f.name for f in fields(BenchRow)])
    for row in rows:
        writer.writerow(astuple(row))

    return buffer.getvalue()
