"""Accuracy, NLL, expected calibration error and reliability bins.

Percentages are kept at full float precision. ``cost`` is classification
error plus ECE, both in percent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_BINS = 15


@dataclass(frozen=True)
class ScoreReport:
    accuracy_pct: float
    nll: float
    ece_pct: float
    cost: float

    @classmethod
    def from_parts(cls, accuracy_pct: float, nll: float, ece_pct: float) -> "ScoreReport":
        return cls(float(accuracy_pct), float(nll), float(ece_pct), cost_of(accuracy_pct, ece_pct))


def cost_of(accuracy_pct: float, ece_pct: float) -> float:
    return (100.0 - float(accuracy_pct)) + float(ece_pct)


@dataclass(frozen=True)
class ReliabilityBins:
    m_bins: int
    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray
    mean_confidence: np.ndarray  # nan where empty
    accuracy: np.ndarray  # nan where empty

    @property
    def empty(self) -> np.ndarray:
        return self.count == 0

    @property
    def ece_pct(self) -> float:
        return _ece_from_bins(self.count, self.mean_confidence, self.accuracy)

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_lo", "bin_hi", "count", "mean_confidence", "accuracy"])
            for row in zip(self.lo, self.hi, self.count, self.mean_confidence, self.accuracy):
                lo, hi, c, conf, acc = row
                w.writerow([repr(float(lo)), repr(float(hi)), int(c),
                            "" if c == 0 else repr(float(conf)), "" if c == 0 else repr(float(acc))])


def _validate(probs, labels, m_bins):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValueError("probs must be a non-empty (N, K) matrix")
    if labels.shape[0] != probs.shape[0]:
        raise ValueError(f"{probs.shape[0]} predictions but {labels.shape[0]} labels")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ValueError(f"labels must lie in [0, {probs.shape[1]})")
    if m_bins < 1:
        raise ValueError("m_bins must be >= 1")
    return probs, labels


def _bin_stats(probs, labels, m_bins):
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    # equal-width bins [k/m, (k+1)/m); confidence 1.0 falls in the top bin
    idx = np.minimum((conf * m_bins).astype(np.int64), m_bins - 1)
    count = np.bincount(idx, minlength=m_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=m_bins)
    acc_sum = np.bincount(idx, weights=correct, minlength=m_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_conf = np.where(count > 0, conf_sum / np.maximum(count, 1), np.nan)
        acc = np.where(count > 0, acc_sum / np.maximum(count, 1), np.nan)
    return count, mean_conf, acc, correct


def _ece_from_bins(count, mean_conf, acc) -> float:
    n = count.sum()
    nz = count > 0
    return float(np.sum(count[nz] / n * np.abs(acc[nz] - mean_conf[nz])) * 100.0)


def score(probs, labels, m_bins: int = DEFAULT_BINS) -> ScoreReport:
    probs, labels = _validate(probs, labels, m_bins)
    count, mean_conf, acc, correct = _bin_stats(probs, labels, m_bins)
    p_target = probs[np.arange(len(labels)), labels]
    nll = float(-np.mean(np.log(np.maximum(p_target, np.finfo(np.float64).tiny))))
    return ScoreReport.from_parts(
        accuracy_pct=float(correct.mean() * 100.0),
        nll=max(nll, 0.0),
        ece_pct=_ece_from_bins(count, mean_conf, acc),
    )


def reliability(probs, labels, m_bins: int = DEFAULT_BINS) -> ReliabilityBins:
    probs, labels = _validate(probs, labels, m_bins)
    count, mean_conf, acc, _ = _bin_stats(probs, labels, m_bins)
    edges = np.arange(m_bins + 1) / m_bins
    return ReliabilityBins(m_bins, edges[:-1], edges[1:], count, mean_conf, acc)
