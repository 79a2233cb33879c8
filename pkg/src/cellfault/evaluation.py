"""Confusion matrix and the summary statistics reported for a classifier."""

from __future__ import annotations

import csv
import io
import json
from fractions import Fraction
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .exceptions import ValidationError
from .schema import CLASS_LABELS


@dataclass(frozen=True)
class EvaluationReport:
    classes: tuple[str, ...]
    confusion: tuple[tuple[int, ...], ...]  # rows actual, columns predicted
    accuracy: float
    mean_absolute_error: float
    precision: dict
    recall: dict
    weighted_precision: float
    weighted_recall: float
    n_correct: int
    n_incorrect: int

    @property
    def n(self) -> int:
        return self.n_correct + self.n_incorrect

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "mae": self.mean_absolute_error,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "n_correct": self.n_correct,
            "n_incorrect": self.n_incorrect,
            "classes": list(self.classes),
            "precision": {c: self.precision[c] for c in self.classes},
            "recall": {c: self.recall[c] for c in self.classes},
            "confusion": [list(row) for row in self.confusion],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "class", "value"])
        for key in ("accuracy", "mae", "weighted_precision", "weighted_recall",
                    "n_correct", "n_incorrect"):
            w.writerow([key, "", repr(self.to_dict()[key])])
        for c in self.classes:
            w.writerow(["precision", c, repr(self.precision[c])])
            w.writerow(["recall", c, repr(self.recall[c])])
        for actual, row in zip(self.classes, self.confusion):
            for predicted, count in zip(self.classes, row):
                w.writerow(["confusion", f"{actual}->{predicted}", count])
        return buf.getvalue()

    def render(self) -> str:
        width = max(len(c) for c in self.classes)
        lines = [
            f"Correctly classified instances   {self.n_correct:>6}  {100 * self.accuracy:8.4f} %",
            f"Incorrectly classified instances {self.n_incorrect:>6}  "
            f"{100 * (1 - self.accuracy):8.4f} %",
            f"Mean absolute error              {self.mean_absolute_error:.6f}",
            f"Weighted average precision       {self.weighted_precision:.4f}",
            f"Weighted average recall          {self.weighted_recall:.4f}",
            "",
            f"{'class':<{width}}  precision  recall  support",
        ]
        supports = [sum(row) for row in self.confusion]
        for c, support in zip(self.classes, supports):
            lines.append(f"{c:<{width}}  {self.precision[c]:9.4f}  {self.recall[c]:6.4f}  {support:7d}")
        lines += ["", "Confusion matrix (rows: actual, columns: predicted)"]
        cell = max(width, max((len(str(v)) for row in self.confusion for v in row), default=1))
        lines.append(" " * (width + 2) + "  ".join(f"{c:>{cell}}" for c in self.classes))
        for c, row in zip(self.classes, self.confusion):
            lines.append(f"{c:<{width}}  " + "  ".join(f"{v:>{cell}}" for v in row))
        return "\n".join(lines) + "\n"


def class_order_for(*label_sets: Sequence[str]) -> tuple[str, ...]:
    """The reporting order, extended by any other labels that occur."""
    extra = sorted({str(x) for labels in label_sets for x in labels} - set(CLASS_LABELS))
    return CLASS_LABELS + tuple(extra)


def evaluate_distributions(actual: Sequence[str], distributions, classes: Sequence[str],
                           predicted: Sequence[str] | None = None) -> EvaluationReport:
    """Statistics from actual labels and per-record class distributions
    (columns ordered as ``classes``). Predictions default to the first
    most probable class of each distribution."""
    classes = tuple(str(c) for c in classes)
    actual = [str(a) for a in actual]
    n = len(actual)
    if n == 0:
        raise ValidationError("cannot evaluate on an empty test set")
    p = np.asarray(distributions, dtype=float).reshape(n, len(classes))
    index = {c: i for i, c in enumerate(classes)}
    unknown = sorted({a for a in actual if a not in index})
    if unknown:
        raise ValidationError(f"actual labels outside the class order: {unknown}")
    a_idx = np.array([index[a] for a in actual])
    if predicted is None:
        p_idx = p.argmax(axis=1)
    else:
        p_idx = np.array([index[str(x)] for x in predicted])
    k = len(classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (a_idx, p_idx), 1)
    onehot = np.zeros_like(p)
    onehot[np.arange(n), a_idx] = 1.0
    mae = float(np.abs(p - onehot).mean(axis=1).mean())
    # ratios of counts are formed exactly and rounded once
    diag = [int(v) for v in np.diag(confusion)]
    col = [int(v) for v in confusion.sum(axis=0)]
    row = [int(v) for v in confusion.sum(axis=1)]
    precision = [Fraction(d, c) if c else Fraction(0) for d, c in zip(diag, col)]
    recall = [Fraction(d, r) if r else Fraction(0) for d, r in zip(diag, row)]
    weights = [Fraction(r, n) for r in row]
    n_correct = sum(diag)
    return EvaluationReport(
        classes=classes,
        confusion=tuple(tuple(int(v) for v in r) for r in confusion),
        accuracy=float(Fraction(n_correct, n)),
        mean_absolute_error=mae,
        precision={c: float(v) for c, v in zip(classes, precision)},
        recall={c: float(v) for c, v in zip(classes, recall)},
        weighted_precision=float(sum(w * p for w, p in zip(weights, precision))),
        weighted_recall=float(sum(w * r for w, r in zip(weights, recall))),
        n_correct=n_correct,
        n_incorrect=n - n_correct,
    )


def evaluate_labels(actual: Sequence[str], predicted: Sequence[str],
                    classes: Sequence[str] | None = None) -> EvaluationReport:
    """Hard predictions: each distribution is one-hot on the predicted class."""
    classes = tuple(classes) if classes is not None else class_order_for(actual, predicted)
    index = {c: i for i, c in enumerate(classes)}
    dist = np.zeros((len(predicted), len(classes)))
    for i, label in enumerate(predicted):
        dist[i, index[str(label)]] = 1.0
    return evaluate_distributions(actual, dist, classes, predicted=[str(x) for x in predicted])


def evaluate(model, test: Dataset) -> EvaluationReport:
    """Score a fitted tree on a labeled dataset."""
    if len(test) == 0:
        raise ValidationError("cannot evaluate on an empty test set")
    actual = test.labels()
    X = test.matrix(list(model.feature_names_in_))
    proba = model.predict_proba(X)
    trained = [str(c) for c in model.classes_]
    classes = class_order_for(actual, trained)
    dist = np.zeros((len(actual), len(classes)))
    for j, c in enumerate(trained):
        dist[:, classes.index(c)] = proba[:, j]
    predicted = [str(x) for x in model.predict(X)]
    return evaluate_distributions(actual, dist, classes, predicted=predicted)


__all__ = [
    "EvaluationReport",
    "class_order_for",
    "evaluate",
    "evaluate_distributions",
    "evaluate_labels",
]
