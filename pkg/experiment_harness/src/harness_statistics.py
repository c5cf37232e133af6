#!/usr/bin/env python3
"""
harness_statistics.py

Summary statistics for experiment observables.

Means, medians and standard deviations are exact; 95% intervals come from
a seeded percentile bootstrap, since chain observables are far too
heavy-tailed for normal intervals. Log-magnitude summaries report the
median of ln|x|.

Author: s2659865
Date: October 2026
"""

# ── Imports ───────────────────────────────────────────────────────────────────
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vanishlab.src.init_distributions import make_rng
from experiment_harness.src.harness_core import BOOTSTRAP_RESAMPLES

CENTERS = ("mean", "median")


# ── Summaries ─────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class StatSummary:
    """
    Summary of a sample.

    Attributes:
        mean: Sample mean
        median: Sample median
        std: Sample standard deviation (ddof = 1; 0 for a single value)
        ci95_low: Lower end of the bootstrap 95% interval
        ci95_high: Upper end of the bootstrap 95% interval
        n: Sample size
    """
    mean: float
    median: float
    std: float
    ci95_low: float
    ci95_high: float
    n: int


def bootstrap_interval(
    samples: np.ndarray,
    center: str = "mean",
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0
):
    """
    Percentile bootstrap 95% interval of the mean or the median.

    Args:
        samples: 1-D array of finite values
        center: 'mean' or 'median'
        resamples: Number of bootstrap resamples
        seed: Seed of the resampling generator

    Returns:
        (low, high)
    """
    if center not in CENTERS:
        raise ValueError(f"center must be one of {CENTERS}, got '{center}'")
    n = samples.size
    rng = make_rng(seed)
    picks = rng.integers(0, n, size=(resamples, n))
    resampled = samples[picks]
    stats = resampled.mean(axis=1) if center == "mean" else np.median(resampled, axis=1)
    low, high = np.percentile(stats, [2.5, 97.5])
    return float(low), float(high)


def summarize(
    samples: Sequence[float],
    center: str = "mean",
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0
) -> StatSummary:
    """
    Summarize a sample with a bootstrap interval around the chosen center.

    A single value gives mean = median = value, std = 0 and a collapsed
    interval; a constant sample gives a zero-width interval.

    Raises:
        ValueError: If the sample is empty
    """
    values = np.asarray(samples, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError("cannot summarize an empty sample")
    n = int(values.size)
    mean = float(np.mean(values))
    median = float(np.median(values))
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    if n == 1 or np.all(values == values[0]):
        low = high = mean if center == "mean" else median
    else:
        low, high = bootstrap_interval(values, center, resamples, seed)
    return StatSummary(mean=mean, median=median, std=std, ci95_low=low, ci95_high=high, n=n)


def log_summary(samples: Sequence[float], resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> StatSummary:
    """
    Summary of ln|x| with the interval bootstrapped around the median.

    Exact zeros (ln = -inf) are left out; n counts the finite logs.

    Raises:
        ValueError: If no sample has a finite logarithm
    """
    values = np.abs(np.asarray(samples, dtype=np.float64).reshape(-1))
    values = values[(values > 0) & np.isfinite(values)]
    if values.size == 0:
        raise ValueError("no sample has a finite logarithm")
    return summarize(np.log(values), center="median", resamples=resamples, seed=seed)


# ── Fits ──────────────────────────────────────────────────────────────────────
def fit_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """
    Least-squares slope of ys against xs.

    Raises:
        ValueError: If fewer than two points are given or ys holds non-finite values
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise ValueError(f"a slope needs at least two matching points, got {x.size} and {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot fit a slope through non-finite values")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
