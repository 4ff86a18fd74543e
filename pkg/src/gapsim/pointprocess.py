"""Rescaled gap point process and the statistics of the largest gap.

Each atom is ``(z_i / R, theta(z_{i+1} - z_i) - log R)`` for a zero ``z_i``
in ``[0, R]``. Gaps longer than the theta table can resolve become atoms at
``v = +inf``; they are counted, never dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import gaussian as gs
from . import kernels as kn
from .montecarlo import run_tasks
from .rng import stream
from .scaling import InsufficientDataError, ScalingTable, RangeError, theta_inverse
from .stats import batch_means, falling_factorial, ks_statistic
from .zeros import HorizonExhaustedError, PathSample, ZeroSet, find_zeros, largest_gap

__all__ = [
    "AtomSet",
    "ExtremeSample",
    "GapRun",
    "build_psi",
    "count",
    "factorial_moment_test",
    "gumbel_cdf",
    "gumbel_uniform_tests",
    "scaling_law_check",
    "simulate_runs",
    "horizon_for",
]

STREAM_RUNS = 3
REL_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class AtomSet:
    R: float
    u: np.ndarray
    v: np.ndarray

    @property
    def n_sentinel(self) -> int:
        return int(np.count_nonzero(np.isinf(self.v)))

    def __len__(self) -> int:
        return self.u.size


@dataclass(frozen=True)
class ExtremeSample:
    L: float
    Z: float
    R: float
    seed: str
    n_zeros: int = 0

    def __post_init__(self):
        if self.L < 0 or not 0 <= self.Z <= self.R:
            raise ValueError(f"invalid extreme record L={self.L}, Z={self.Z}, R={self.R}")


@dataclass(frozen=True, eq=False)
class GapRun:
    """Zeros of one simulated path covering ``[0, R + horizon]``."""

    R: float
    zeroset: ZeroSet
    seed: str

    def extreme(self) -> ExtremeSample:
        L, Z = largest_gap(self.zeroset, self.R)
        z = self.zeroset.zeros
        n = int(np.count_nonzero((z >= 0) & (z <= self.R)))
        return ExtremeSample(L, Z, self.R, self.seed, n)


def _theta_or_inf(table: ScalingTable, r: np.ndarray) -> np.ndarray:
    n = table.n_valid
    lo, hi = table.r_range
    if np.any(r < lo):
        raise RangeError("gap shorter than the theta table start", (lo, hi))
    out = np.interp(r, table.r_grid[:n], table.theta_hat[:n])
    out[r > hi] = np.inf
    return out


def build_psi(zeroset: ZeroSet, R: float, table: ScalingTable) -> AtomSet:
    z = zeroset.zeros
    lo, hi = zeroset.domain
    if lo > 0 or hi < R:
        raise HorizonExhaustedError(f"zero set covers [{lo}, {hi}], need [0, {R}]")
    i0 = int(np.searchsorted(z, 0.0, side="left"))
    i1 = int(np.searchsorted(z, R, side="right"))
    if i1 == i0:
        return AtomSet(R, np.empty(0), np.empty(0))
    if i1 >= z.size:
        raise HorizonExhaustedError(f"zero at {z[i1 - 1]:.6g} <= R={R} has no recorded successor")
    left = z[i0:i1]
    gap = z[i0 + 1 : i1 + 1] - left
    return AtomSet(R, left / R, _theta_or_inf(table, gap) - math.log(R))


def count(atoms: AtomSet, I: tuple[float, float] = (0.0, 1.0), A: tuple[float, float] = (-math.inf, math.inf)) -> int:
    """Atoms with ``u`` in the closed interval ``I`` and ``v`` in closed ``A``.

    ``A = (a, inf)`` includes the sentinel atoms at ``v = +inf``.
    """
    i1, i2 = I
    if not 0.0 <= i1 <= i2 <= 1.0:
        raise ValueError(f"I={I} is not a subinterval of [0, 1]")
    a, b = A
    if a > b:
        return 0
    m = (atoms.u >= i1) & (atoms.u <= i2) & (atoms.v >= a) & (atoms.v <= b)
    return int(np.count_nonzero(m))


def poisson_target(k: int, I: tuple[float, float], A: tuple[float, float]) -> float:
    """k-th factorial moment of Poisson(|I| * int_A e^{-y} dy)."""
    a, b = A
    mass = math.exp(-a) - (0.0 if math.isinf(b) else math.exp(-b))
    return ((I[1] - I[0]) * mass) ** k


def factorial_moment_test(runs: Sequence[AtomSet], k: int, I=(0.0, 1.0), A=(0.0, math.inf)):
    """Mean falling factorial of the window count, and its Poisson target."""
    if len(runs) < 100:
        raise InsufficientDataError(f"need at least 100 runs, got {len(runs)}")
    if not 1 <= k <= 3:
        raise ValueError("k must be 1, 2 or 3")
    counts = np.array([count(r, I, A) for r in runs])
    ff = falling_factorial(counts, k)
    nb = min(32, len(runs))
    groups = np.array_split(ff, nb)
    est = batch_means([g.mean() for g in groups], [g.size for g in groups])
    return est, poisson_target(k, I, A)


def gumbel_cdf(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = np.exp(-np.exp(-x))
    return float(out) if out.ndim == 0 else out


def _uniform_cdf(x):
    return np.clip(x, 0.0, 1.0)


def gumbel_uniform_tests(extremes: Sequence[ExtremeSample], table: ScalingTable) -> dict:
    """KS tests of the rescaled largest gap against Gumbel and its location against uniform."""
    used = [e for e in extremes if e.L > 0]
    n_excl = len(extremes) - len(used)
    if len(used) < 200:
        raise InsufficientDataError(f"need at least 200 runs with zeros, got {len(used)}")
    Rs = {e.R for e in used}
    if len(Rs) != 1:
        raise ValueError("all runs must share the same R")
    R = Rs.pop()
    L = np.array([e.L for e in used])
    x = _theta_or_inf(table, L) - math.log(R)
    u = np.array([e.Z for e in used]) / R
    d_g, p_g = ks_statistic(np.sort(x), gumbel_cdf)
    d_u, p_u = ks_statistic(np.sort(u), _uniform_cdf)
    fin = np.isfinite(x)
    corr = float(np.corrcoef(u[fin], x[fin])[0, 1]) if fin.sum() > 2 else float("nan")
    return {
        "R": R,
        "n_used": len(used),
        "n_excluded": n_excl,
        "n_sentinel": int((~fin).sum()),
        "ks_gumbel": d_g,
        "p_gumbel": p_g,
        "ks_uniform": d_u,
        "p_uniform": p_u,
        "corr_u_x": corr,
    }


def scaling_law_check(
    extremes_by_R: Mapping[float, Sequence[ExtremeSample]],
    kernel: kn.Kernel,
    zeta_hat: Optional[float] = None,
) -> dict:
    """Medians of the normalised largest gap against its predicted limit.

    Linear-theta regime: ``L / log R -> 1 / zeta``. Long-range regime
    (alpha < 1): ``L (log log R)^{1/alpha} / (log R)^{1/alpha} -> (alpha / zeta)^{1/alpha}``.
    ``zeta`` is the closed form when available, else ``zeta_hat``.
    """
    if len(extremes_by_R) < 2:
        raise InsufficientDataError("need at least two values of R")
    a = kernel.alpha
    long_range = a is not None and a < 1
    zeta = kn.zeta_predicted(kernel)
    source = "closed form"
    if zeta is None:
        if zeta_hat is None:
            raise ValueError("no closed-form zeta for this kernel; pass a fitted zeta_hat")
        zeta, source = zeta_hat, "fitted"
    limit = (a / zeta) ** (1 / a) if long_range else 1.0 / zeta
    rows = []
    for R in sorted(extremes_by_R):
        ex = extremes_by_R[R]
        if len(ex) < 100:
            raise InsufficientDataError(f"R={R}: need at least 100 runs, got {len(ex)}")
        L = np.array([e.L for e in ex])
        lr = math.log(R)
        stat = L * math.log(lr) ** (1 / a) / lr ** (1 / a) if long_range else L / lr
        q1, med, q3 = np.percentile(stat, [25, 50, 75])
        rows.append({"R": R, "median": float(med), "iqr": float(q3 - q1), "rel_gap": abs(med / limit - 1.0)})
    gaps = [r["rel_gap"] for r in rows]
    return {
        "limit": limit,
        "zeta": zeta,
        "zeta_source": source,
        "statistic": "L (loglog R)^(1/a) / (log R)^(1/a)" if long_range else "L / log R",
        "rows": rows,
        "monotone_toward": all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:])),
        "final_rel_gap": gaps[-1],
    }


def horizon_for(kernel: kn.Kernel, R: float, table: Optional[ScalingTable] = None) -> float:
    """Extra simulated length beyond R: ten times the predicted largest gap."""
    scale = None
    if table is not None:
        try:
            scale = theta_inverse(table, math.log(R))
        except RangeError:
            scale = table.r_range[1]
    if scale is None:
        scale = math.log(max(R, math.e)) / kn.rice_intensity(kernel)
    return 10.0 * scale


def _runs_task(task, kernel, R, horizon, sampler, seed):
    spacing = sampler.spacing
    while True:
        n_grid = sampler.n_grid
        paths = sampler.sample(stream(seed, task, STREAM_RUNS, n_grid), 2)
        out = []
        try:
            for part, p in enumerate(paths):
                zs = find_zeros(PathSample(p, spacing), REL_TOL * spacing)
                run = GapRun(R, zs, f"{seed}:{task}:{part}:{n_grid}")
                run.extreme()
                out.append(run)
            return out
        except HorizonExhaustedError:
            horizon *= 2
            sampler = gs.stationary_sampler(kernel, math.ceil((R + horizon) / spacing) + 1, spacing)


def simulate_runs(
    kernel: kn.Kernel,
    R: float,
    n_runs: int,
    seed: int,
    *,
    horizon: Optional[float] = None,
    table: Optional[ScalingTable] = None,
    grid_factor: float = 0.05,
    workers: int = 1,
) -> list[GapRun]:
    """Independent paths on ``[0, R + horizon]`` with their zero sets.

    Runs come in pairs from one complex draw; a pair whose horizon turns out
    too short is re-simulated on a doubled grid.
    """
    if horizon is None:
        horizon = horizon_for(kernel, R, table)
    spacing = gs.default_spacing(kernel, grid_factor)
    sampler = gs.stationary_sampler(kernel, math.ceil((R + horizon) / spacing) + 1, spacing)
    n_tasks = (n_runs + 1) // 2
    parts = run_tasks(_runs_task, [(kernel, R, horizon, sampler, seed)] * n_tasks, workers)
    return [r for pair in parts for r in pair][:n_runs]
