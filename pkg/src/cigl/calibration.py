"""Confidence-calibration metrics and baselines: top-label expected
calibration error, reliability diagrams, NLL, temperature scaling, label
smoothing, and mixup."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12  # clamp for log() in NLL


@dataclass(frozen=True)
class BinStats:
    lower: float
    upper: float
    count: int
    mean_confidence: float | None
    mean_accuracy: float | None


@dataclass(frozen=True)
class ReliabilityBins:
    n_bins: int
    total: int
    bins: tuple[BinStats, ...]


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    nll: float
    accuracy: float
    bins: ReliabilityBins
    temperature: float | None = None


def _validate_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs)
    if probs.ndim != 2 or probs.shape[0] == 0 or probs.shape[1] == 0:
        raise ValueError("probs must be a nonempty [n, K] array")
    sums = probs.sum(axis=1, dtype=np.float64)
    if np.max(np.abs(sums - 1.0)) > 1e-6:
        raise ValueError("probability rows must sum to 1 within 1e-6")
    return probs


def reliability_bins(probs, labels, n_bins: int = 15) -> ReliabilityBins:
    """Top-label reliability histogram.

    Bins partition (0, 1] into n_bins equal (lower, upper] intervals; a
    confidence of exactly 0 falls in the first bin. Prediction ties break
    to the lowest class index. Per-bin means accumulate in float64 and in
    sample order.
    """
    probs = _validate_probs(probs)
    labels = np.asarray(labels)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    conf = probs.max(axis=1).astype(np.float64)
    pred = probs.argmax(axis=1)
    correct = (pred == labels).astype(np.float64)

    uppers = np.array([(m + 1) / n_bins for m in range(n_bins)])
    idx = np.minimum(np.searchsorted(uppers, conf, side="left"), n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=correct, minlength=n_bins)

    bins = []
    for m in range(n_bins):
        c = int(count[m])
        bins.append(
            BinStats(
                lower=m / n_bins,
                upper=(m + 1) / n_bins,
                count=c,
                mean_confidence=float(conf_sum[m] / c) if c else None,
                mean_accuracy=float(acc_sum[m] / c) if c else None,
            )
        )
    return ReliabilityBins(n_bins=n_bins, total=len(conf), bins=tuple(bins))


def ece_from_bins(rb: ReliabilityBins) -> float:
    """Sum of (count/n) * |accuracy - confidence| over bins, in bin order."""
    total = 0.0
    for b in rb.bins:
        if b.count:
            total += (b.count / rb.total) * abs(b.mean_accuracy - b.mean_confidence)
    return total


def ece(probs, labels, n_bins: int = 15) -> float:
    return ece_from_bins(reliability_bins(probs, labels, n_bins))


def nll(probs, labels) -> float:
    """Mean negative log-likelihood; probabilities clamped below at 1e-12."""
    probs = _validate_probs(probs)
    labels = np.asarray(labels)
    picked = probs[np.arange(len(labels)), labels].astype(np.float64)
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def _nll_of_logits(logits: np.ndarray, labels: np.ndarray, temperature: float) -> float:
    z = logits / temperature
    zmax = z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def fit_temperature(logits, labels, lo: float = 0.05, hi: float = 10.0,
                    tol: float = 1e-4) -> float:
    """Scalar temperature minimising validation NLL of softmax(logits / T).

    Golden-section search over [lo, hi] down to an interval of `tol`.
    Falls back to T=1 when scaling does not improve the NLL, so the fitted
    temperature never increases it. Degenerate logits (all rows constant)
    return T=1 with a warning.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError("validation logits must be a nonempty [n, K] array")
    if np.all(logits == logits[:, :1]):
        log.warning("degenerate logits (all rows constant); temperature fixed at 1")
        return 1.0

    def f(t: float) -> float:
        return _nll_of_logits(logits, labels, t)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    t_best = c if fc < fd else d
    if f(t_best) > f(1.0):
        return 1.0
    return float(t_best)


def label_smoothing_targets(labels, epsilon: float, n_classes: int) -> np.ndarray:
    """Smoothed one-hot rows: true class 1 - eps + eps/K, others eps/K."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError("epsilon must be in [0, 1)")
    labels = np.asarray(labels)
    out = np.full((len(labels), n_classes), epsilon / n_classes, dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0 - epsilon + epsilon / n_classes
    return out


def mixup_batch(x1, y1, x2, y2, alpha: float, rng: np.random.Generator):
    """Convex combination of two batches with one Beta(alpha, alpha) draw.

    Targets must already be probability rows. Returns (x, y, lam).
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if x1.shape != x2.shape or y1.shape != y2.shape:
        raise ValueError("mixup batches must have identical shapes")
    lam = float(rng.beta(alpha, alpha))
    x = (lam * x1 + (1.0 - lam) * x2).astype(x1.dtype, copy=False)
    y = (lam * y1 + (1.0 - lam) * y2).astype(y1.dtype, copy=False)
    return x, y, lam


def write_reliability_csv(rb: ReliabilityBins, path) -> None:
    """CSV rows (bin_lower, bin_upper, count, mean_confidence, mean_accuracy);
    empty bins leave the mean cells blank. Written atomically."""
    from .fileio import atomic_write_text

    lines = ["bin_lower,bin_upper,count,mean_confidence,mean_accuracy"]
    for b in rb.bins:
        conf = "" if b.mean_confidence is None else repr(b.mean_confidence)
        acc = "" if b.mean_accuracy is None else repr(b.mean_accuracy)
        lines.append(f"{b.lower!r},{b.upper!r},{b.count},{conf},{acc}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_reliability_csv(path) -> list[BinStats]:
    import csv as _csv

    out = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = _csv.reader(f)
        next(reader)
        for row in reader:
            out.append(
                BinStats(
                    lower=float(row[0]),
                    upper=float(row[1]),
                    count=int(row[2]),
                    mean_confidence=float(row[3]) if row[3] else None,
                    mean_accuracy=float(row[4]) if row[4] else None,
                )
            )
    return out
