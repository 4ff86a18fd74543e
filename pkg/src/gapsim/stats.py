"""Small statistical toolkit shared by the estimators.

Everything reports 95% two-sided intervals with the same normal quantile.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Z95 = 1.959964

__all__ = [
    "Z95",
    "CIMethod",
    "EstimateWithCI",
    "wilson_interval",
    "batch_means",
    "ratio_delta_interval",
    "kolmogorov_sf",
    "ks_statistic",
    "isotonic_nonincreasing",
    "falling_factorial",
    "falling_factorial_mean",
]


class CIMethod(str, enum.Enum):
    WILSON = "wilson"
    BATCH_MEANS = "batch_means"
    DELTA = "delta"


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    lo: float
    hi: float
    n: int
    method: CIMethod

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("estimate needs at least one sample")
        if not (self.lo <= self.value <= self.hi):
            raise ValueError(f"interval [{self.lo}, {self.hi}] does not contain {self.value}")

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def overlaps(self, other: "EstimateWithCI") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi


def wilson_interval(successes: int, n: int) -> EstimateWithCI:
    """Wilson score interval for a binomial proportion."""
    if n < 1:
        raise ValueError("wilson_interval requires n >= 1")
    if not 0 <= successes <= n:
        raise ValueError(f"successes={successes} outside [0, {n}]")
    p = successes / n
    z2 = Z95 * Z95
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else min(p, max(0.0, centre - half))
    hi = 1.0 if successes == n else max(p, min(1.0, centre + half))
    return EstimateWithCI(p, lo, hi, n, CIMethod.WILSON)


def batch_means(batch_values, batch_sizes=None) -> EstimateWithCI:
    """Combine per-batch means into an estimate with a normal interval.

    ``batch_values`` holds one mean per batch. With ``batch_sizes`` the
    overall value is the size-weighted mean; the standard error is still
    taken from the spread of the batch means.
    """
    vals = np.asarray(batch_values, dtype=float)
    b = vals.size
    if b < 2:
        raise ValueError("batch means need at least two batches")
    if batch_sizes is None:
        sizes = np.ones(b)
    else:
        sizes = np.asarray(batch_sizes, dtype=float)
    value = float(np.sum(vals * sizes) / np.sum(sizes))
    se = float(np.std(vals, ddof=1) / math.sqrt(b))
    return EstimateWithCI(value, value - Z95 * se, value + Z95 * se, int(np.sum(sizes)), CIMethod.BATCH_MEANS)


def ratio_delta_interval(n: int, joint: int, marginals: Sequence[int], pair_counts) -> EstimateWithCI:
    """Ratio P[all events] / prod P[event_i] from shared indicator samples.

    ``pair_counts[i][j]`` is the number of samples where events i and j both
    hold (diagonal = marginal counts). The interval comes from the delta
    method applied to the log of the ratio.
    """
    k = len(marginals)
    if n < 1:
        raise ValueError("need at least one sample")
    if joint == 0 or min(marginals) == 0:
        raise ZeroDivisionError("ratio undefined: a zero count in the joint or a marginal event")
    pj = joint / n
    pm = np.asarray(marginals, dtype=float) / n
    ratio = pj / float(np.prod(pm))
    # indicator vector (J, X_1..X_k); J implies every X_i
    pc = np.asarray(pair_counts, dtype=float) / n
    second = np.empty((k + 1, k + 1))
    second[0, 0] = pj
    second[0, 1:] = pj
    second[1:, 0] = pj
    second[1:, 1:] = pc
    means = np.concatenate([[pj], pm])
    cov = second - np.outer(means, means)
    grad = np.concatenate([[1.0 / pj], -1.0 / pm])
    var_log = max(float(grad @ cov @ grad) / n, 0.0)
    se = math.sqrt(var_log)
    return EstimateWithCI(ratio, ratio * math.exp(-Z95 * se), ratio * math.exp(Z95 * se), n, CIMethod.DELTA)


def kolmogorov_sf(x: float, terms: int = 100) -> float:
    """P[K > x] for the limiting Kolmogorov distribution."""
    if x <= 0:
        return 1.0
    k = np.arange(1, terms + 1, dtype=float)
    if x < 1.0:
        # Jacobi-transformed series; the alternating one is useless near 0
        s = np.sum(np.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * x * x)))
        p = 1.0 - math.sqrt(2 * math.pi) / x * s
    else:
        p = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * x * x))
    return float(min(1.0, max(0.0, p)))


def ks_statistic(sorted_sample, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    ``cdf`` must accept an array; ``+inf`` entries are allowed in the sample.
    """
    x = np.asarray(sorted_sample, dtype=float)
    n = x.size
    if n < 8:
        raise ValueError("KS test needs at least 8 observations")
    if np.any(np.diff(x) < 0):
        raise ValueError("sample must be sorted in nondecreasing order")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - F)), float(np.max(F - (i - 1) / n)))
    return d, kolmogorov_sf(math.sqrt(n) * d)


def isotonic_nonincreasing(values, weights=None) -> np.ndarray:
    """Weighted least-squares projection onto nonincreasing sequences (PAV)."""
    y = np.asarray(values, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != y.shape:
        raise ValueError("values and weights must have equal length")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    # blocks as (weighted mean, total weight, length)
    means: list[float] = []
    wts: list[float] = []
    lens: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        wts.append(float(wi))
        lens.append(1)
        while len(means) > 1 and means[-2] < means[-1]:
            m2, w2, l2 = means.pop(), wts.pop(), lens.pop()
            m1, w1, l1 = means.pop(), wts.pop(), lens.pop()
            wt = w1 + w2
            means.append((w1 * m1 + w2 * m2) / wt)
            wts.append(wt)
            lens.append(l1 + l2)
    return np.repeat(means, lens)


def falling_factorial(x, k: int) -> np.ndarray:
    """(x)_k = x (x-1) ... (x-k+1), elementwise."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    for j in range(k):
        out = out * (x - j)
    return out


def falling_factorial_mean(counts, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    c = np.asarray(counts)
    if c.size == 0:
        raise ValueError("no counts")
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    return float(np.mean(falling_factorial(c, k)))
