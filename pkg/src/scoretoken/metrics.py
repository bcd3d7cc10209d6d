"""SRCC / PLCC with average-rank ties, plus a seeded bootstrap interval."""

from __future__ import annotations

import numpy as np

from .errors import ConstantInput, LengthMismatch, TooFewSamples


def _paired(predictions, ground_truth) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(predictions, dtype=np.float64).reshape(-1)
    y = np.asarray(ground_truth, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise LengthMismatch(f"paired inputs differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise TooFewSamples("correlation needs at least 2 pairs")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("paired inputs must be finite")
    for v in (x, y):
        if _numerically_constant(v):
            raise ConstantInput("correlation undefined: an input has zero variance")
    return x, y


def _numerically_constant(v: np.ndarray) -> bool:
    """Spread no larger than a few ulps of the magnitude counts as constant.

    Batched decoding of identical logit rows can differ in the last bit, which
    would otherwise turn rounding noise into a spurious ranking.
    """
    return float(np.ptp(v)) <= 16.0 * np.finfo(np.float64).eps * float(np.max(np.abs(v)))


def rankdata(a) -> np.ndarray:
    """1-based ranks, tied values sharing the mean of their positions."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    n = a.size
    order = np.argsort(a, kind="mergesort")
    sorted_a = a[order]
    # run boundaries of equal values
    starts = np.flatnonzero(np.r_[True, sorted_a[1:] != sorted_a[:-1]])
    ends = np.r_[starts[1:], n]
    avg = 0.5 * (starts + ends - 1) + 1.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantInput("correlation undefined: an input has zero variance")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def plcc(predictions, ground_truth) -> float:
    """Pearson linear correlation coefficient."""
    x, y = _paired(predictions, ground_truth)
    return _pearson(x, y)


def srcc(predictions, ground_truth) -> float:
    """Spearman rank correlation: Pearson on average ranks."""
    x, y = _paired(predictions, ground_truth)
    return _pearson(rankdata(x), rankdata(y))


METRICS = {"srcc": srcc, "plcc": plcc}


def bootstrap_ci(
    predictions,
    ground_truth,
    metric: str = "srcc",
    n_resamples: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap interval of ``metric`` over paired resamples.

    Resamples in which either side is constant are skipped; they have no
    defined correlation.
    """
    x, y = _paired(predictions, ground_truth)
    if x.size < 10:
        raise TooFewSamples(f"bootstrap needs at least 10 pairs, got {x.size}")
    if n_resamples < 100:
        raise TooFewSamples(f"bootstrap needs at least 100 resamples, got {n_resamples}")
    fn = METRICS[metric]
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(n_resamples):
        idx = rng.integers(0, x.size, size=x.size)
        try:
            values.append(fn(x[idx], y[idx]))
        except ConstantInput:
            continue
    if not values:
        raise ConstantInput("every bootstrap resample was degenerate")
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(np.asarray(values), [tail, 100.0 - tail])
    return float(low), float(high)
