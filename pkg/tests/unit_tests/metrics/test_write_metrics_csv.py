import csv
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np

from osdmamba.metrics import compute_metrics, write_metrics_csv


class TestWriteMetricsCsv(TestCase):
    """Unit tests for the `write_metrics_csv` function."""

    def test_layout(self) -> None:
        """Verify the header, one row per class and the summary rows."""

        report = compute_metrics(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]), 2)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "metrics.csv"
            write_metrics_csv(report, path)
            with path.open(newline="") as handle:
                rows = list(csv.reader(handle))

        self.assertEqual(["class", "iou", "f1", "fp_rate", "fall_out"], rows[0])
        self.assertEqual(["class_0", "class_1"], [row[0] for row in rows[1:3]])
        self.assertEqual(["mIoU", "OA", "overall_fp"], [row[0] for row in rows[3:]])
        self.assertEqual("0.583333", rows[3][1])
        self.assertEqual("0.750000", rows[4][1])
