"""Shared statistics helpers: intervals, bootstrap slopes, two-sample tests."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps

Z99 = 2.5758293035489004


def wilson_interval(successes: int, trials: int, z: float = Z99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def mean_ci(values: np.ndarray, z: float = Z99) -> tuple[float, float, float]:
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return mean, mean, mean
    sem = float(values.std(ddof=1) / math.sqrt(values.size))
    return mean, mean - z * sem, mean + z * sem


def fit_log_slope(sizes, means) -> float:
    """Least-squares slope of mean value against log2(size)."""
    x = np.log2(np.asarray(sizes, dtype=float))
    y = np.asarray(means, dtype=float)
    return float(np.polyfit(x, y, 1)[0])


def bootstrap_log_slope(sizes, per_size_values, n_boot: int,
                        rng: np.random.Generator,
                        level: float = 0.99) -> tuple[float, float, float]:
    """Slope of mean-vs-log2(size) with a bootstrap CI over trial resamples."""
    slope = fit_log_slope(sizes, [np.mean(v) for v in per_size_values])
    boots = np.empty(n_boot)
    arrays = [np.asarray(v, dtype=float) for v in per_size_values]
    for i in range(n_boot):
        means = [a[rng.integers(0, a.size, a.size)].mean() for a in arrays]
        boots[i] = fit_log_slope(sizes, means)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(boots, [alpha, 1 - alpha])
    return slope, float(lo), float(hi)


def welch_test(a, b) -> tuple[float, float]:
    """Welch's t-test; returns (statistic, p_value)."""
    res = sps.ttest_ind(np.asarray(a, float), np.asarray(b, float), equal_var=False)
    return float(res.statistic), float(res.pvalue)


def weighted_slope(xs, ys, sigmas) -> tuple[float, float]:
    """Weighted least-squares slope and its standard error."""
    x = np.asarray(xs, float)
    y = np.asarray(ys, float)
    w = 1.0 / np.maximum(np.asarray(sigmas, float), 1e-300) ** 2
    xbar = (w * x).sum() / w.sum()
    sxx = (w * (x - xbar) ** 2).sum()
    slope = (w * (x - xbar) * y).sum() / sxx
    return float(slope), float(1.0 / math.sqrt(sxx))


def ratio_per_factor(sizes, means, factor: float) -> float:
    """Geometric growth ratio per multiplicative `factor` step in size.

    Fits ln(mean) = a + beta * ln(size) and reports factor**beta, so all
    ladder points contribute, not just the endpoints.
    """
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    beta = float(np.polyfit(x, y, 1)[0])
    return float(factor ** beta)
