"""
The `metrics` module scores predicted segmentation masks against ground
truth. Scores are derived from a confusion matrix whose rows index the
true class and whose columns index the predicted class. Confusion matrices
merge by addition, so a dataset can be scored image by image (or in
parallel) and combined afterwards.

!!! example "Example: Scoring a Dataset"

    ```python
    from osdmamba.metrics import ConfusionMatrix, compute_metrics

    confusion = ConfusionMatrix.empty(5)
    for pred, true in zip(predictions, masks):
        confusion = confusion.merge(ConfusionMatrix.from_masks(pred, true, 5))

    report = confusion.report()
    print(report.miou)
    ```

Per-class scores follow the usual definitions, with `row_c` and `col_c`
the row and column sums of class `c`:

| Metric     | Definition                                   |
|------------|----------------------------------------------|
| IoU        | `M_cc / (row_c + col_c - M_cc)`              |
| F1         | `2 M_cc / (row_c + col_c)`                   |
| FP rate    | `(col_c - M_cc) / col_c` (false discoveries) |
| Fall-out   | `(col_c - M_cc) / (total - row_c)`           |

A class that is absent from both ground truth and prediction scores an IoU
and F1 of one. Empty denominators of the FP rate and fall-out score zero.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated

import numpy as np
from pydantic import BaseModel, Field

from .configs import class_names

__all__ = ["ConfusionMatrix", "MetricsReport", "compute_metrics", "write_metrics_csv"]

logger = logging.getLogger("osdmamba")

UnitFloat = Annotated[float, Field(ge=0, le=1)]


class MetricsReport(BaseModel):
    """Segmentation scores of a set of predictions.

    The mean IoU and macro F1 average over the classes present in the
    ground truth.
    """

    class_names: list[str]
    present: list[bool]
    iou: list[UnitFloat]
    f1: list[UnitFloat]
    fp_rate: list[UnitFloat]
    fall_out: list[UnitFloat]
    miou: UnitFloat
    macro_f1: UnitFloat
    oa: UnitFloat
    overall_fp: UnitFloat

    def per_class(self, name: str) -> dict[str, float]:
        """Return the scores of one class keyed by metric name."""

        i = self.class_names.index(name)
        return {"iou": self.iou[i], "f1": self.f1[i], "fp_rate": self.fp_rate[i], "fall_out": self.fall_out[i]}


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray, empty: float) -> np.ndarray:
    numerator = np.asarray(numerator, dtype=np.float64)
    denominator = np.asarray(denominator, dtype=np.float64)
    out = np.full(numerator.shape, empty)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """`K x K` pixel counts, rows are ground truth and columns are predictions."""

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        """Return an all-zero matrix."""

        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @classmethod
    def from_masks(
        cls,
        pred: np.ndarray,
        true: np.ndarray,
        num_classes: int,
        ignore_label: int | None = None,
    ) -> "ConfusionMatrix":
        """Tally a predicted mask against a ground truth mask.

        Args:
            pred: Predicted class ids.
            true: True class ids, same shape as `pred`.
            num_classes: Number of classes `K`.
            ignore_label: True label whose pixels are not scored.

        Raises:
            ValueError: If the shapes differ or a label lies outside `[0, K)`.
        """

        if np.shape(pred) != np.shape(true):
            raise ValueError(f"Mask shapes differ: {np.shape(pred)} and {np.shape(true)}")

        pred, true = np.asarray(pred, dtype=np.int64).ravel(), np.asarray(true, dtype=np.int64).ravel()

        if ignore_label is not None:
            keep = true != ignore_label
            pred, true = pred[keep], true[keep]

        for name, mask in (("predicted", pred), ("true", true)):
            if mask.size and (mask.min() < 0 or mask.max() >= num_classes):
                raise ValueError(f"The {name} mask holds labels outside [0, {num_classes})")

        flat = np.bincount(num_classes * true + pred, minlength=num_classes * num_classes)
        return cls(flat.reshape(num_classes, num_classes))

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Return the sum of two matrices."""

        if other.num_classes != self.num_classes:
            raise ValueError(f"Cannot merge {self.num_classes}-class and {other.num_classes}-class matrices")

        return ConfusionMatrix(self.counts + other.counts)

    def report(self, names: list[str] | None = None) -> MetricsReport:
        """Derive the metrics report of the tallied pixels."""

        m = self.counts
        diag = np.diag(m)
        rows, cols = m.sum(axis=1), m.sum(axis=0)
        total = self.total
        present = rows > 0

        iou = _safe_ratio(diag, rows + cols - diag, 1.0)
        f1 = _safe_ratio(2 * diag, rows + cols, 1.0)
        fp_rate = _safe_ratio(cols - diag, cols, 0.0)
        fall_out = _safe_ratio(cols - diag, total - rows, 0.0)

        if not present.any():
            logger.warning("Scoring an empty set of pixels.")

        return MetricsReport(
            class_names=names or class_names(self.num_classes),
            present=present.tolist(),
            iou=iou.tolist(),
            f1=f1.tolist(),
            fp_rate=fp_rate.tolist(),
            fall_out=fall_out.tolist(),
            miou=float(iou[present].mean()) if present.any() else 0.0,
            macro_f1=float(f1[present].mean()) if present.any() else 0.0,
            oa=float(diag.sum() / total) if total else 0.0,
            overall_fp=float((total - diag.sum()) / total) if total else 0.0,
        )


def compute_metrics(pred: np.ndarray, true: np.ndarray, num_classes: int) -> MetricsReport:
    """Score one predicted mask against its ground truth."""

    return ConfusionMatrix.from_masks(pred, true, num_classes).report()


def write_metrics_csv(report: MetricsReport, path: Path) -> None:
    """Write a report as CSV: one row per class followed by the summary rows."""

    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["class", "iou", "f1", "fp_rate", "fall_out"])
        for i, name in enumerate(report.class_names):
            writer.writerow([name] + [f"{v[i]:.6f}" for v in (report.iou, report.f1, report.fp_rate, report.fall_out)])

        writer.writerow(["mIoU", f"{report.miou:.6f}", "", "", ""])
        writer.writerow(["OA", f"{report.oa:.6f}", "", "", ""])
        writer.writerow(["overall_fp", f"{report.overall_fp:.6f}", "", "", ""])

    logger.info(f"Metrics written to {path}.")
