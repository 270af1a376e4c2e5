"""Accuracy, per-subset macro recall/precision/F1 and prediction-bias statistics."""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .datasets import SUBSETS
from .errors import IdOutOfRange, LengthMismatch


@dataclass
class ConfusionStats:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    n_samples: int

    @property
    def n_classes(self):
        return len(self.tp)

    @property
    def accuracy(self):
        return float(self.tp.sum() / self.n_samples) if self.n_samples else 0.0

    def recall(self):
        support = self.tp + self.fn
        return np.divide(self.tp, support, out=np.zeros(len(self.tp)), where=support > 0)

    def precision(self):
        # classes never predicted get precision 0
        predicted = self.tp + self.fp
        return np.divide(self.tp, predicted, out=np.zeros(len(self.tp)), where=predicted > 0)


def _check(predictions, labels, C):
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    for name, ids in (("prediction", predictions), ("label", labels)):
        if ids.size and (ids.min() < 0 or ids.max() >= C):
            raise IdOutOfRange(f"{name} ids must lie in [0, {C})")
    return predictions, labels


def confusion(predictions, labels, C):
    predictions, labels = _check(predictions, labels, C)
    hit = predictions == labels
    tp = np.bincount(labels[hit], minlength=C)
    support = np.bincount(labels, minlength=C)
    predicted = np.bincount(predictions, minlength=C)
    return ConfusionStats(tp, predicted - tp, support - tp, len(labels))


def _f1(r, p):
    return 2 * r * p / (r + p) if r + p > 0 else 0.0


def subset_macro(stats, partition):
    """Macro recall and precision per subset; F1 from the two subset averages.

    Subsets without classes are left out of the result.
    """
    if len(partition.assignment) != stats.n_classes:
        raise LengthMismatch("partition does not cover every class")
    recall, precision = stats.recall(), stats.precision()
    out = {}
    for subset in SUBSETS:
        members = partition.classes(subset)
        if not members:
            continue
        r = float(recall[members].mean())
        p = float(precision[members].mean())
        out[subset] = {"recall": r, "precision": p, "f1": _f1(r, p)}
    return out


def prediction_bias(predictions, labels, C):
    """Histogram of predicted classes and its L1 distance to the label frequencies."""
    predictions, labels = _check(predictions, labels, C)
    hist = np.bincount(predictions, minlength=C)
    truth = np.bincount(labels, minlength=C)
    # integer numerator keeps equal-distance histograms exactly tied
    return hist, float(np.abs(hist - truth).sum() / max(len(labels), 1))


@dataclass
class MetricsReport:
    accuracy: float
    subsets: dict
    stats: ConfusionStats
    prediction_histogram: np.ndarray
    l1_to_truth: float
    class_counts: np.ndarray

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "l1_to_truth": self.l1_to_truth,
            "n_samples": int(self.stats.n_samples),
            "class_counts": [int(v) for v in self.class_counts],
            "prediction_histogram": [int(v) for v in self.prediction_histogram],
            "subsets": {k: dict(self.subsets[k]) for k in SUBSETS if k in self.subsets},
            "per_class": {"tp": self.stats.tp.tolist(), "fp": self.stats.fp.tolist(),
                          "fn": self.stats.fn.tolist()},
        }

    @classmethod
    def from_dict(cls, d):
        stats = ConfusionStats(np.array(d["per_class"]["tp"]), np.array(d["per_class"]["fp"]),
                               np.array(d["per_class"]["fn"]), d["n_samples"])
        return cls(d["accuracy"], d["subsets"], stats, np.array(d["prediction_histogram"]),
                   d["l1_to_truth"], np.array(d["class_counts"]))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def per_class_csv(self, path):
        r, p = self.stats.recall(), self.stats.precision()
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["class", "tp", "fp", "fn", "recall", "precision"])
            for c in range(self.stats.n_classes):
                out.writerow([c, int(self.stats.tp[c]), int(self.stats.fp[c]),
                              int(self.stats.fn[c]), repr(float(r[c])), repr(float(p[c]))])


def evaluate(predictions, labels, C, partition):
    stats = confusion(predictions, labels, C)
    hist, l1 = prediction_bias(predictions, labels, C)
    return MetricsReport(stats.accuracy, subset_macro(stats, partition), stats, hist, l1,
                         np.bincount(np.asarray(labels, dtype=np.int64), minlength=C))
