"""Confusion matrices, split statistics and their CSV reports.

Every number written to a CSV goes through `format_value`, which is also
what the commands print, so console and files always agree.
"""
import csv
import dataclasses
from collections.abc import Sequence

import numpy as np

SUMMARY_KEY = "mean±std"
METRICS_HEADER = ("split", "ratio", "strategy", "variant", "accuracy")
CURVES_HEADER = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc")
ABLATION_HEADER = ("strategy", "variant", "conv_features", "ratio", "mean",
                   "std")


def format_value(value: float) -> str:
    return f"{value:.6f}"


def format_summary(mean: float, std: float) -> str:
    return f"{format_value(mean)}±{format_value(std)}"


@dataclasses.dataclass
class Metrics:
    """Test-set statistics, possibly pooled over several splits.

    `confusion[i, j]` counts samples of true class i predicted as j.
    `per_split` holds the overall accuracy of each split.
    """
    confusion: np.ndarray
    per_split: list[float] = dataclasses.field(default_factory=list)

    @classmethod
    def from_predictions(cls, labels, predictions,
                         num_classes: int) -> "Metrics":
        labels = np.asarray(labels, dtype=np.int64)
        predictions = np.asarray(predictions, dtype=np.int64)
        if labels.shape != predictions.shape:
            raise ValueError(f"{labels.shape[0]} labels but "
                             f"{predictions.shape[0]} predictions")
        confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(confusion, (labels, predictions), 1)
        metrics = cls(confusion=confusion)
        metrics.per_split = [metrics.overall_accuracy]
        return metrics

    @classmethod
    def pooled(cls, splits: Sequence["Metrics"]) -> "Metrics":
        """Sums the confusion matrices; one accuracy per split."""
        if not splits:
            raise ValueError("Cannot pool an empty list of metrics")
        confusion = sum(m.confusion for m in splits)
        return cls(confusion=confusion,
                   per_split=[m.overall_accuracy for m in splits])

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def overall_accuracy(self) -> float:
        if not self.total:
            return 0.0
        return float(np.trace(self.confusion)) / self.total

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_split))

    @property
    def std(self) -> float:
        """Population standard deviation over the splits."""
        return float(np.std(self.per_split))

    def per_class_accuracy(self) -> np.ndarray:
        """Recall of each class; NaN for classes absent from the test set."""
        counts = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0,
                            np.diag(self.confusion) / np.maximum(counts, 1),
                            np.nan)


@dataclasses.dataclass
class SplitResult:
    split: int
    ratio: str
    strategy: str
    variant: str
    accuracy: float

    def row(self) -> list[str]:
        return [
            str(self.split), self.ratio, self.strategy, self.variant,
            format_value(self.accuracy)
        ]


@dataclasses.dataclass
class CurvePoint:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float

    def row(self) -> list[str]:
        return [str(self.epoch)] + [
            format_value(v) for v in (self.train_loss, self.val_loss,
                                      self.train_acc, self.val_acc)
        ]


@dataclasses.dataclass
class AblationCell:
    strategy: str
    variant: str
    conv_features: bool
    ratio: str
    metrics: Metrics

    def row(self) -> list[str]:
        return [
            self.strategy, self.variant,
            str(self.conv_features).lower(), self.ratio,
            format_value(self.metrics.mean),
            format_value(self.metrics.std)
        ]


def _write(path, header: Sequence[str], rows: Sequence[Sequence[str]]):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_metrics_csv(path, results: Sequence[SplitResult],
                      metrics: Metrics) -> None:
    """Per-split rows then the summary line `mean±std,<mean>±<std>`."""
    rows = [r.row() for r in sorted(results, key=lambda r: r.split)]
    rows.append([SUMMARY_KEY, format_summary(metrics.mean, metrics.std)])
    _write(path, METRICS_HEADER, rows)


def write_curves_csv(path, curve: Sequence[CurvePoint]) -> None:
    _write(path, CURVES_HEADER, [point.row() for point in curve])


def write_confusion_csv(path, metrics: Metrics) -> None:
    """Rows are true classes, columns predicted classes."""
    k = metrics.num_classes
    header = ["truth\\pred"] + [str(j) for j in range(k)] + ["accuracy"]
    per_class = metrics.per_class_accuracy()
    rows = []
    for i in range(k):
        accuracy = "" if np.isnan(per_class[i]) else format_value(
            per_class[i])
        rows.append([str(i)] + [str(int(c)) for c in metrics.confusion[i]] +
                    [accuracy])
    _write(path, header, rows)


def write_ablation_csv(path, cells: Sequence[AblationCell]) -> None:
    _write(path, ABLATION_HEADER, [cell.row() for cell in cells])


def write_ablation_splits_csv(path, cells: Sequence[AblationCell]) -> None:
    header = ("strategy", "variant", "conv_features", "ratio", "split",
              "accuracy")
    rows = []
    for cell in cells:
        for split, accuracy in enumerate(cell.metrics.per_split):
            rows.append([
                cell.strategy, cell.variant,
                str(cell.conv_features).lower(), cell.ratio,
                str(split),
                format_value(accuracy)
            ])
    _write(path, header, rows)


def read_csv(path) -> list[dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
