"""Evaluation metrics for multi-label prediction.

All five headline numbers live in a :class:`MetricsReport` together with the
per-class confusion counts. Zero-denominator conventions are pinned so the
golden tests are deterministic: an all-empty example scores example-F1 1.0,
a class with no positives and no predictions scores class-F1 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class MetricsReport:
    ha: float
    example_f1: float
    micro_f1: float
    macro_f1: float
    precision_at_1: float
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def to_dict(self) -> dict:
        return {
            "ha": self.ha,
            "example_f1": self.example_f1,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "precision_at_1": self.precision_at_1,
            "per_class": {
                "tp": self.tp.tolist(),
                "fp": self.fp.tolist(),
                "fn": self.fn.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        names = ["HA", "example-F1", "micro-F1", "macro-F1", "precision@1"]
        vals = [self.ha, self.example_f1, self.micro_f1, self.macro_f1, self.precision_at_1]
        width = max(len(n) for n in names)
        lines = [f"{n:<{width}}  {v:.4f}" for n, v in zip(names, vals)]
        return "\n".join(lines)


def _check_pair(y: np.ndarray, yhat: np.ndarray):
    if y.shape != yhat.shape or y.ndim != 2:
        raise ShapeError(f"label matrices must share a 2-D shape, got {y.shape} vs {yhat.shape}")


def threshold(probabilities: np.ndarray, t: float = 0.5) -> np.ndarray:
    """Binarize with the >= t rule."""
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"threshold must be in [0, 1], got {t}")
    return (np.asarray(probabilities) >= t).astype(np.int8)


def hamming_accuracy(y: np.ndarray, yhat: np.ndarray) -> float:
    _check_pair(y, yhat)
    return float((y == yhat).mean(axis=1).mean())


def example_f1(y: np.ndarray, yhat: np.ndarray) -> float:
    _check_pair(y, yhat)
    inter = (y * yhat).sum(axis=1).astype(np.float64)
    denom = y.sum(axis=1) + yhat.sum(axis=1)
    per = np.where(denom > 0, 2.0 * inter / np.maximum(denom, 1), 1.0)
    return float(per.mean())


def _confusion(y: np.ndarray, yhat: np.ndarray):
    tp = ((y == 1) & (yhat == 1)).sum(axis=0)
    fp = ((y == 0) & (yhat == 1)).sum(axis=0)
    fn = ((y == 1) & (yhat == 0)).sum(axis=0)
    return tp, fp, fn


def micro_f1(y: np.ndarray, yhat: np.ndarray) -> float:
    _check_pair(y, yhat)
    tp, fp, fn = _confusion(y, yhat)
    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    return float(2.0 * tp.sum() / denom) if denom > 0 else 0.0


def macro_f1(y: np.ndarray, yhat: np.ndarray) -> float:
    _check_pair(y, yhat)
    tp, fp, fn = _confusion(y, yhat)
    denom = 2 * tp + fp + fn
    per_class = np.where(denom > 0, 2.0 * tp / np.maximum(denom, 1), 0.0)
    return float(per_class.mean())


def precision_at_1(probabilities: np.ndarray, y: np.ndarray) -> float:
    """Fraction of samples whose highest-probability class is a true positive.

    np.argmax already breaks ties toward the lowest class index; an all-zero
    label row can never score.
    """
    probabilities = np.asarray(probabilities)
    if probabilities.shape != y.shape or y.ndim != 2:
        raise ShapeError(f"shapes differ: {probabilities.shape} vs {y.shape}")
    top = probabilities.argmax(axis=1)
    return float(y[np.arange(y.shape[0]), top].mean())


def compute_report(probabilities: np.ndarray, y: np.ndarray, t: float = 0.5) -> MetricsReport:
    yhat = threshold(probabilities, t)
    y = np.asarray(y).astype(np.int8)
    tp, fp, fn = _confusion(y, yhat)
    return MetricsReport(
        ha=hamming_accuracy(y, yhat),
        example_f1=example_f1(y, yhat),
        micro_f1=micro_f1(y, yhat),
        macro_f1=macro_f1(y, yhat),
        precision_at_1=precision_at_1(probabilities, y),
        tp=tp,
        fp=fp,
        fn=fn,
    )
