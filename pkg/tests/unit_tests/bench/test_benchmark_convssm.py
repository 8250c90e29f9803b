from unittest import TestCase

from osdmamba.bench import BenchRow, benchmark_convssm, format_bench_csv
from osdmamba.convssm import convssm_flops, init_hippo


class TestBenchmarkConvssm(TestCase):
    """Unit tests for the `benchmark_convssm` function."""

    def test_grid(self) -> None:
        """Verify one row per grid point ordered by state width then length."""

        rows = benchmark_convssm([2, 4], [1, 2], height=4, width=4, repeats=1)
        self.assertEqual([(2, 1), (4, 1), (2, 2), (4, 2)], [(r.length, r.state_channels) for r in rows])
        for row in rows:
            self.assertGreater(row.sequential_seconds, 0.0)
            self.assertGreater(row.parallel_seconds, 0.0)

    def test_flops_column(self) -> None:
        """Verify the reported multiply counts match the analytic formula."""

        rows = benchmark_convssm([3], [2], height=4, width=4, repeats=1)
        params = init_hippo(2, 3, 2, 2)
        self.assertEqual(convssm_flops(params, 4, 4, 3), rows[0].flops)


class TestFormatBenchCsv(TestCase):
    """Unit tests for the `format_bench_csv` function."""

    def test_header_and_rows(self) -> None:
        """Verify a header line followed by one line per row."""

        text = format_bench_csv([BenchRow(16, 2, 0.5, 0.25, 100), BenchRow(32, 2, 1.0, 0.5, 200)])
        self.assertEqual(
            "length,state_channels,sequential_seconds,parallel_seconds,flops\n16,2,0.5,0.25,100\n32,2,1.0,0.5,200\n",
            text,
        )
