"""Confusion matrices, per-class precision/recall/F1 and report rendering."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .classifiers import predict_dataset
from .errors import EmptyDataset, EmptyMatrix, LengthMismatch
from .features import LabeledDataset
from .session import LABELS, Label


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[t][p]``: rows are true labels, columns predictions, both in
    (CNN, RNN) order."""

    counts: tuple

    def __post_init__(self):
        c = tuple(tuple(int(v) for v in row) for row in self.counts)
        if len(c) != 2 or any(len(r) != 2 for r in c) or any(v < 0 for r in c for v in r):
            raise ValueError("confusion counts must be a 2x2 grid of non-negative integers")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def get(self, truth: Label, pred: Label) -> int:
        return self.counts[LABELS.index(truth)][LABELS.index(pred)]


def confusion(truth: Sequence[Label], predicted: Sequence[Label]) -> ConfusionMatrix:
    if len(truth) != len(predicted):
        raise LengthMismatch(f"{len(truth)} truths vs {len(predicted)} predictions")
    if not truth:
        raise EmptyDataset("nothing to compare")
    grid = [[0, 0], [0, 0]]
    for t, p in zip(truth, predicted):
        grid[LABELS.index(Label(t))][LABELS.index(Label(p))] += 1
    return ConfusionMatrix(grid)


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    # metric names whose denominator was zero (reported as 0)
    undefined: tuple = ()


@dataclass
class EvaluationReport:
    per_class: Dict[Label, ClassMetrics]
    accuracy: float
    counts: ConfusionMatrix
    misclassified: List[str] = field(default_factory=list)

    def macro_f1(self) -> float:
        return float(np.mean([m.f1 for m in self.per_class.values()]))

    def to_dict(self) -> dict:
        return {
            "confusion": {
                "order": [lab.value for lab in LABELS],
                "counts": [list(r) for r in self.counts.counts],
            },
            "accuracy": self.accuracy,
            "per_class": {
                lab.value: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "undefined": list(m.undefined),
                }
                for lab, m in self.per_class.items()
            },
            "display": {
                "accuracy": f"{100 * self.accuracy:.2f}%",
                "macro_f1": f"{self.macro_f1():.2f}",
                **{
                    lab.value: {k: f"{getattr(m, k):.2f}" for k in ("precision", "recall", "f1")}
                    for lab, m in self.per_class.items()
                },
            },
            "misclassified": list(self.misclassified),
        }


def _ratio(num: int, den: int):
    return (num / den, False) if den else (0.0, True)


def metrics(cm: ConfusionMatrix) -> EvaluationReport:
    total = cm.total
    if total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    per = {}
    for lab in LABELS:
        tp = cm.get(lab, lab)
        fp = cm.get(lab.other(), lab)
        fn = cm.get(lab, lab.other())
        p, p_undef = _ratio(tp, tp + fp)
        r, r_undef = _ratio(tp, tp + fn)
        f1, f_undef = (2 * p * r / (p + r), False) if p + r > 0 else (0.0, True)
        undefined = tuple(n for n, u in (("precision", p_undef), ("recall", r_undef), ("f1", f_undef)) if u)
        per[lab] = ClassMetrics(p, r, f1, undefined)
    acc = (cm.get(Label.CNN, Label.CNN) + cm.get(Label.RNN, Label.RNN)) / total
    return EvaluationReport(per, acc, cm)


def evaluate(model, test: LabeledDataset) -> EvaluationReport:
    preds = predict_dataset(model, test)
    report = metrics(confusion(test.labels, [p.label for p in preds]))
    if test.session_ids is not None:
        report.misclassified = [
            sid for sid, truth, p in zip(test.session_ids, test.labels, preds) if p.label is not truth
        ]
    return report


def render_table(rows: Sequence[tuple]) -> str:
    """Plain-text table with Method / Class / Precision / Recall / F1-score /
    Accuracy columns. ``rows`` holds (method name, EvaluationReport) pairs."""
    head = ("Method", "Class", "Precision", "Recall", "F1-score", "Accuracy")
    lines = []
    for name, rep in rows:
        for i, lab in enumerate(LABELS):
            m = rep.per_class[lab]
            lines.append(
                (
                    name if i == 0 else "",
                    lab.value,
                    f"{m.precision:.2f}",
                    f"{m.recall:.2f}",
                    f"{m.f1:.2f}",
                    f"{100 * rep.accuracy:.2f}%" if i == 0 else "",
                )
            )
    widths = [max(len(head[j]), *(len(r[j]) for r in lines)) for j in range(len(head))]
    fmt = lambda r: "| " + " | ".join(v.ljust(w) for v, w in zip(r, widths)) + " |"  # noqa: E731
    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    out = [sep, fmt(head), sep]
    for k in range(0, len(lines), 2):
        out += [fmt(lines[k]), fmt(lines[k + 1]), sep]
    return "\n".join(out) + "\n"


def report_json(report: EvaluationReport, **extra) -> str:
    return json.dumps({**extra, **report.to_dict()}, indent=2, sort_keys=True) + "\n"
