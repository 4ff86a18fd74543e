"""Splitting and clustering coefficients on fixed probe families.

Both coefficients are suprema over infinite interval families. Only finite
probe families are estimated here, so every result is a lower bound on the
corresponding supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import gaussian as gs
from . import kernels as kn
from .io import write_csv
from .montecarlo import run_tasks, split
from .rng import stream
from .stats import CIMethod, EstimateWithCI, ratio_delta_interval, wilson_interval
from .zeros import zero_in_interval

__all__ = [
    "IntervalConfig",
    "UndefinedRatioError",
    "gap_indicators",
    "indicator_ratio",
    "splitting_ratio",
    "splitting_decay_scan",
    "clustering_estimate",
    "write_splitting_csv",
    "write_clustering_csv",
]

STREAM_SPLIT = 4
STREAM_CLUSTER = 5
REL_TOL = 1e-3
CHUNK = 20_000


class UndefinedRatioError(ZeroDivisionError):
    """A marginal (or the joint) gap event was never observed."""


@dataclass(frozen=True)
class IntervalConfig:
    """``k >= 2`` disjoint closed intervals, sorted by left endpoint.

    ``r`` bounds the lengths and ``s`` the pairwise separations; when omitted
    they default to the largest length and the smallest separation.
    """

    intervals: tuple[tuple[float, float], ...]
    r: Optional[float] = None
    s: Optional[float] = None

    def __post_init__(self):
        iv = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        if len(iv) < 2:
            raise ValueError("need at least two intervals")
        for a, b in iv:
            if not (math.isfinite(a) and math.isfinite(b)) or b < a:
                raise ValueError(f"bad interval [{a}, {b}]")
        seps = [c - b for (_, b), (c, _) in zip(iv, iv[1:])]
        if min(seps) <= 0:
            i = int(np.argmin(seps))
            raise ValueError(f"intervals {iv[i]} and {iv[i + 1]} are not disjoint")
        longest = max(b - a for a, b in iv)
        r = longest if self.r is None else float(self.r)
        s = min(seps) if self.s is None else float(self.s)
        if longest > r:
            raise ValueError(f"an interval has length {longest} > r={r}")
        if min(seps) < s:
            raise ValueError(f"separation {min(seps)} < s={s}")
        object.__setattr__(self, "intervals", iv)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)

    @classmethod
    def equally_spaced(cls, k: int, r: float, s: float) -> "IntervalConfig":
        return cls(tuple((i * (r + s), i * (r + s) + r) for i in range(k)), r, s)

    @property
    def k(self) -> int:
        return len(self.intervals)

    @property
    def hull(self) -> tuple[float, float]:
        return self.intervals[0][0], self.intervals[-1][1]


def _grid_for(kernel, lo, hi, grid_factor):
    spacing = gs.default_spacing(kernel, grid_factor)
    # two spare points on each side keep the cubic refinement available at the ends
    origin = lo - 2 * spacing
    n_grid = math.ceil((hi - lo) / spacing) + 5
    return origin, spacing, n_grid


def gap_indicators(values: np.ndarray, origin: float, spacing: float, intervals) -> np.ndarray:
    """Boolean ``(n_paths, len(intervals))``: no zero of the path in each interval."""
    return np.column_stack([~zero_in_interval(values, origin, spacing, a, b, REL_TOL) for a, b in intervals])


def _accumulate(ind: np.ndarray):
    x = ind.astype(np.int64)
    return ind.shape[0], int(np.count_nonzero(ind.all(axis=1))), x.T @ x


def indicator_ratio(indicators) -> EstimateWithCI:
    """Ratio P[all] / prod P[each] from a shared ``(n, k)`` indicator matrix."""
    ind = np.asarray(indicators, dtype=bool)
    n, joint, pair = _accumulate(ind)
    try:
        return ratio_delta_interval(n, joint, np.diag(pair).tolist(), pair)
    except ZeroDivisionError as e:
        raise UndefinedRatioError(str(e)) from None


def _split_task(task, sampler, origin, intervals, start, size, seed, sub, independent):
    spacing = sampler.spacing
    rng = stream(seed, task, STREAM_SPLIT, sub)
    if independent:
        # one independent path per interval: the test double for exact independence
        cols = [gap_indicators(sampler.sample(rng, size), origin, spacing, [iv])[:, 0] for iv in intervals]
        ind = np.column_stack(cols)
    else:
        ind = gap_indicators(sampler.sample(rng, size), origin, spacing, intervals)
    return _accumulate(ind)


def _reduce(parts):
    n = sum(p[0] for p in parts)
    joint = sum(p[1] for p in parts)
    pair = parts[0][2].copy()
    for p in parts[1:]:
        pair += p[2]
    return n, joint, pair


def splitting_ratio(
    kernel: kn.Kernel,
    config: IntervalConfig,
    n_paths: int,
    seed: int,
    *,
    grid_factor: float = 0.05,
    workers: int = 1,
    independent: bool = False,
    sub: int = 0,
) -> dict:
    """Joint over product of marginal gap frequencies, from shared paths.

    Returns the ratio with a delta-method interval, the raw counts, and the
    empirical splitting error ``|ratio - 1|`` for this configuration.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if independent:
        lo = min(a for a, _ in config.intervals)
        hi = lo + max(b - a for a, b in config.intervals)
        ivs = [(lo, lo + b - a) for a, b in config.intervals]
    else:
        lo, hi = config.hull
        ivs = list(config.intervals)
    origin, spacing, n_grid = _grid_for(kernel, lo, hi, grid_factor)
    sampler = gs.stationary_sampler(kernel, n_grid, spacing)
    tasks = [(sampler, origin, ivs, s0, sz, seed, sub, independent) for s0, sz in split(n_paths, CHUNK)]
    n, joint, pair = _reduce(run_tasks(_split_task, tasks, workers))
    marg = np.diag(pair).tolist()
    try:
        est = ratio_delta_interval(n, joint, marg, pair)
    except ZeroDivisionError as e:
        raise UndefinedRatioError(f"{e}; counts joint={joint}, marginals={marg}") from None
    low = [i for i, m in enumerate(marg) if m < 10]
    return {
        "ratio": est,
        "deviation": _abs_dev(est),
        "n_paths": n,
        "joint": joint,
        "marginals": marg,
        "low_count_intervals": low,
    }


def _abs_dev(est: EstimateWithCI) -> EstimateWithCI:
    """|ratio - 1| with the interval mapped through the absolute value."""
    a, b = est.lo - 1.0, est.hi - 1.0
    lo = 0.0 if a <= 0 <= b else min(abs(a), abs(b))
    return EstimateWithCI(abs(est.value - 1.0), lo, max(abs(a), abs(b)), est.n, est.method)


def splitting_decay_scan(
    kernel: kn.Kernel,
    r: float,
    s_list: Sequence[float],
    k: int,
    n_paths: int,
    seed: int,
    *,
    grid_factor: float = 0.05,
    workers: int = 1,
) -> dict:
    """``|ratio - 1|`` for equally spaced configurations over increasing ``s``.

    Each ``s`` uses its own random streams. The report sets ``r^2 Kbar(s)``
    beside the deviations for a qualitative comparison of decay.
    """
    s_arr = np.asarray(s_list, dtype=float)
    if s_arr.size < 1 or np.any(np.diff(s_arr) <= 0):
        raise ValueError("s_list must be strictly increasing")
    rows = []
    for j, s in enumerate(s_arr):
        res = splitting_ratio(
            kernel, IntervalConfig.equally_spaced(k, r, s), n_paths, seed,
            grid_factor=grid_factor, workers=workers, sub=j,
        )
        kb = kn.kbar(kernel, float(s))
        rows.append({"s": float(s), "ratio": res["ratio"], "deviation": res["deviation"],
                     "Kbar_s": kb, "r2_Kbar_s": r * r * kb, "counts": (res["joint"], res["marginals"])})
    dev = [row["deviation"].value for row in rows]
    return {
        "kernel": kernel.spec(),
        "k": k,
        "r": r,
        "rows": rows,
        "deviation_decreasing": all(b < a for a, b in zip(dev, dev[1:])),
        # strict version: successive deviation intervals do not overlap
        "deviation_separated": all(
            rows[i + 1]["deviation"].hi < rows[i]["deviation"].lo for i in range(len(rows) - 1)
        ),
        "ratio_sign_matches_kbar": [
            (row["ratio"].value - 1.0) * row["Kbar_s"] >= 0 for row in rows
        ],
    }


def _probe_family(r: float):
    probes = [("touching", (0.0, r), (r, 2 * r))]
    for name, d in (("sep_half", 0.5 * r), ("sep_1", r), ("sep_2", 2 * r)):
        probes.append((name, (0.0, r), (r + d, 2 * r + d)))
    return probes


def _cluster_task(task, sampler, origin, r, start, size, seed):
    vals = sampler.sample(stream(seed, task, STREAM_CLUSTER), size)
    sp = sampler.spacing
    single = gap_indicators(vals, origin, sp, [(0.0, r), (0.0, 2 * r)])
    out = [int(np.count_nonzero(single[:, 0])), int(np.count_nonzero(single[:, 1]))]
    for _, i1, i2 in _probe_family(r):
        ind = gap_indicators(vals, origin, sp, [i1, i2])
        out.append(int(np.count_nonzero(ind.all(axis=1))))
    return size, out


def _kappa(phi: EstimateWithCI, g: EstimateWithCI) -> tuple[float, float, float]:
    """log phi / log G with a conservative interval from the two marginal intervals."""

    def ratio(p, q):
        if not 0 < q < 1:
            return math.nan
        return math.log(p) / math.log(q) if p > 0 else math.inf

    # kappa decreases in phi and increases in G
    return ratio(phi.value, g.value), ratio(phi.hi, g.lo), ratio(phi.lo, g.hi)


def clustering_estimate(
    kernel: kn.Kernel,
    r: float,
    n_paths: int,
    seed: int,
    *,
    grid_factor: float = 0.05,
    workers: int = 1,
) -> dict:
    """Joint gap probabilities over the probe family and their maximum.

    Probes: the touching pair ``[0,r], [r,2r]`` and pairs ``[0,r], [r+d, 2r+d]``
    for ``d`` in ``{r/2, r, 2r}``. The maximum over probes is a lower bound on
    the clustering coefficient. Intervals are Wilson intervals, which stay
    one-sided (``lo = 0``) when a count is zero.
    """
    if n_paths < 10_000:
        raise ValueError("clustering_estimate needs n_paths >= 1e4")
    if r < 0:
        raise ValueError("r must be nonnegative")
    probes = _probe_family(r)
    if r == 0:
        one = EstimateWithCI(1.0, 1.0, 1.0, n_paths, CIMethod.WILSON)
        return {"kernel": kernel.spec(), "r": 0.0, "probes": [(p[0], one) for p in probes], "phi": one,
                "phi_probe": probes[0][0], "G_r": one, "G_2r": one, "kappa": (math.nan,) * 3}
    origin, spacing, n_grid = _grid_for(kernel, 0.0, 4 * r, grid_factor)
    sampler = gs.stationary_sampler(kernel, n_grid, spacing)
    tasks = [(sampler, origin, r, s0, sz, seed) for s0, sz in split(n_paths, CHUNK)]
    parts = run_tasks(_cluster_task, tasks, workers)
    n = sum(p[0] for p in parts)
    tot = np.sum([p[1] for p in parts], axis=0)
    g_r, g_2r = wilson_interval(int(tot[0]), n), wilson_interval(int(tot[1]), n)
    est = [(name, wilson_interval(int(c), n)) for (name, _, _), c in zip(probes, tot[2:])]
    best = max(range(len(est)), key=lambda i: est[i][1].value)
    phi = est[best][1]
    return {
        "kernel": kernel.spec(),
        "r": float(r),
        "probes": est,
        "phi": phi,
        "phi_probe": est[best][0],
        "G_r": g_r,
        "G_2r": g_2r,
        "kappa": _kappa(phi, g_r),
    }


def write_splitting_csv(path, scan: dict) -> None:
    rows = [
        (scan["kernel"], scan["k"], scan["r"], row["s"], row["ratio"].value, row["ratio"].lo, row["ratio"].hi, row["Kbar_s"])
        for row in scan["rows"]
    ]
    write_csv(path, ["kernel", "k", "r", "s", "ratio", "ratio_lo", "ratio_hi", "Kbar_s"], rows)


def write_clustering_csv(path, results: Sequence[dict]) -> None:
    rows = []
    for res in results:
        for name, est in res["probes"]:
            rows.append((res["kernel"], res["r"], name, est.value, est.lo, est.hi, res["G_r"].value, res["kappa"][0]))
    write_csv(path, ["kernel", "r", "probe_id", "phi_hat", "lo", "hi", "G_hat_r", "kappa_hat"], rows)
