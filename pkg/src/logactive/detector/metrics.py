"""Binary classification metrics with anomalous as the positive class."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

from ..corpus import ANOMALOUS
from ..errors import InputError, LengthMismatch


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    def as_dict(self) -> dict:
        return asdict(self)


def metrics(predictions: Sequence[str], truth: Sequence[str]) -> Metrics:
    if len(predictions) != len(truth):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(truth)} truth labels")
    if not predictions:
        raise InputError("metrics need at least one prediction")
    tp = fp = fn = tn = 0
    for p, t in zip(predictions, truth):
        pos_p, pos_t = p == ANOMALOUS, t == ANOMALOUS
        if pos_p and pos_t:
            tp += 1
        elif pos_p:
            fp += 1
        elif pos_t:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics((tp + tn) / len(truth), precision, recall, f1, tp, fp, fn, tn)
