"""Gap probability G(r), its derivative lambda(r) = -G'(r), and theta = -log lambda.

``G`` is estimated from independent stationary paths; ``lambda`` from the
Kac-Rice representation

    lambda(r) = (2 pi K(0))^{-1/2} E[ |f'(0)| 1{no zero in (0, r]} | f(0) = 0 ],

sampled through :class:`~gapsim.gaussian.ConditionalZeroModel`. Both passes
produce the whole curve at once from the first-zero location of each draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import gaussian as gs
from . import kernels as kn
from .io import read_csv, write_csv
from .montecarlo import run_tasks, split
from .rng import stream
from .stats import Z95, EstimateWithCI, batch_means, isotonic_nonincreasing, wilson_interval
from .zeros import first_zero_index

__all__ = [
    "RangeError",
    "InsufficientDataError",
    "GCurve",
    "LambdaCurve",
    "ScalingTable",
    "estimate_G_curve",
    "estimate_lambda_curve",
    "build_table",
    "theta",
    "theta_inverse",
    "t_R",
    "fit_theta_asymptotics",
    "derivative_check",
    "write_scaling_csv",
    "read_scaling_csv",
    "merge_G_curves",
    "merge_lambda_curves",
    "estimate_zero_intensity",
]

N_BATCHES = 32
REL_TOL = 1e-3
MIN_HITS = 10
# stream namespaces so that G paths, lambda draws and gap runs never share streams
STREAM_G = 1
STREAM_LAMBDA = 2
STREAM_RICE = 6


class RangeError(ValueError):
    def __init__(self, msg, valid):
        super().__init__(f"{msg}; valid interval is [{valid[0]:.6g}, {valid[1]:.6g}]")
        self.valid = valid


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GCurve:
    """Counts of paths with no zero in [0, r] (and of those that stay positive)."""

    r_grid: np.ndarray
    n: int
    gap_counts: np.ndarray
    pos_counts: np.ndarray

    @property
    def G(self) -> np.ndarray:
        return self.gap_counts / self.n

    @property
    def P(self) -> np.ndarray:
        return self.pos_counts / self.n

    def G_estimate(self, i: int) -> EstimateWithCI:
        return wilson_interval(int(self.gap_counts[i]), self.n)

    def P_estimate(self, i: int) -> EstimateWithCI:
        return wilson_interval(int(self.pos_counts[i]), self.n)


@dataclass(frozen=True, eq=False)
class LambdaCurve:
    """Per-batch sums of ``|f'(0)| 1{tau > r}`` with the Kac-Rice normalisation."""

    r_grid: np.ndarray
    batch_sums: np.ndarray  # (N_BATCHES, n_r)
    batch_sizes: np.ndarray
    hits: np.ndarray
    norm: float

    @property
    def n(self) -> int:
        return int(self.batch_sizes.sum())

    @property
    def values(self) -> np.ndarray:
        return self.norm * self.batch_sums.sum(axis=0) / self.n

    @property
    def se(self) -> np.ndarray:
        means = self.norm * self.batch_sums / self.batch_sizes[:, None]
        return means.std(axis=0, ddof=1) / math.sqrt(len(self.batch_sizes))

    def estimate(self, i: int) -> EstimateWithCI:
        means = self.norm * self.batch_sums[:, i] / self.batch_sizes
        return batch_means(means, self.batch_sizes)


def _rice_task(task, sampler, start, size, seed):
    paths = sampler.sample(stream(seed, task, STREAM_RICE), size)
    sign_changes = np.count_nonzero(paths[:, :-1] * paths[:, 1:] < 0, axis=1)
    return sign_changes + np.count_nonzero(paths == 0, axis=1)


def estimate_zero_intensity(
    kernel: kn.Kernel,
    length: float,
    n_paths: int,
    seed: int,
    *,
    grid_factor: float = 0.05,
    workers: int = 1,
    chunk: int = 64,
) -> tuple[EstimateWithCI, np.ndarray]:
    """Zeros per unit length on ``n_paths`` paths over ``[0, length]``.

    Returns the estimate (batch means over paths) and the per-path counts.
    """
    if length <= 0 or n_paths < 2:
        raise ValueError("need length > 0 and at least two paths")
    spacing = gs.default_spacing(kernel, grid_factor)
    n_grid = math.ceil(length / spacing) + 1
    span = (n_grid - 1) * spacing
    sampler = gs.stationary_sampler(kernel, n_grid, spacing)
    parts = run_tasks(_rice_task, [(sampler, s, m, seed) for s, m in split(n_paths, chunk)], workers)
    counts = np.concatenate(parts)
    groups = np.array_split(counts / span, min(N_BATCHES, n_paths))
    return batch_means([g.mean() for g in groups], [g.size for g in groups]), counts


def _default_r_grid(r_max: float, n_r: int) -> np.ndarray:
    return np.linspace(0.0, r_max, n_r)


def _g_task(task, sampler, n_pad, spacing, start, size, seed, r_grid):
    rng = stream(seed, task, STREAM_G)
    paths = sampler.sample(rng, size)
    tau = (first_zero_index(paths, n_pad, REL_TOL) - n_pad) * spacing
    positive = paths[:, n_pad] > 0
    gap = size - np.searchsorted(np.sort(tau), r_grid, side="right")
    pos = positive.sum() - np.searchsorted(np.sort(tau[positive]), r_grid, side="right")
    return gap, pos


def estimate_G_curve(
    kernel: kn.Kernel,
    r_max: float,
    n_paths: int,
    seed: int,
    *,
    r_grid=None,
    n_r: int = 201,
    grid_factor: float = 0.05,
    workers: int = 1,
    chunk: int = 20_000,
) -> GCurve:
    """Fraction of stationary paths with no zero in [0, r], for all r at once.

    Paths live on [-pad, r_max] with pad = 5 / rice_intensity; the first zero
    at or after 0 decides every r.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if n_paths < 1000:
        raise ValueError("n_paths must be >= 1000")
    r_grid = _default_r_grid(r_max, n_r) if r_grid is None else np.asarray(r_grid, dtype=float)
    spacing = gs.default_spacing(kernel, grid_factor)
    n_pad = math.ceil(5.0 / kn.rice_intensity(kernel) / spacing)
    n_grid = n_pad + math.ceil(r_max / spacing) + 3
    sampler = gs.stationary_sampler(kernel, n_grid, spacing)
    args = [(sampler, n_pad, spacing, s, m, seed, r_grid) for s, m in split(n_paths, chunk)]
    parts = run_tasks(_g_task, args, workers)
    gap = np.sum([p[0] for p in parts], axis=0)
    pos = np.sum([p[1] for p in parts], axis=0)
    return GCurve(r_grid, n_paths, gap, pos)


def _first_zero_after_origin(fp0, values, spacing):
    """First zero in (0, end] of a path pinned to zero at the origin."""
    n = values.shape[0]
    aug = np.empty((n, values.shape[1] + 1))
    aug[:, 0] = 0.0
    aug[:, 1:] = values
    tau = first_zero_index(aug, 1, REL_TOL) * spacing
    # an extra zero inside the first cell: root of v x + c x^2 through (x1, f(x1))
    early = np.sign(values[:, 0]) != np.sign(fp0)
    if np.any(early):
        x1 = spacing
        c = (values[early, 0] - fp0[early] * x1) / x1**2
        tau[early] = np.clip(-fp0[early] / c, 0.0, x1)
    return tau


def _lambda_task(task, model, spacing, start, size, seed, r_grid):
    rng = stream(seed, task, STREAM_LAMBDA)
    sums = np.zeros((N_BATCHES, r_grid.size))
    sizes = np.zeros(N_BATCHES)
    hits = np.zeros(r_grid.size, dtype=np.int64)
    done = 0
    while done < size:
        b = min(8192, size - done)
        fp0, vals = model.sample(rng, b)
        tau = _first_zero_after_origin(fp0, vals, spacing)
        w = np.abs(fp0)
        # bin index k: tau > r_grid[j] for all j < k
        k = np.searchsorted(r_grid, tau, side="left")
        batch = (start + done + np.arange(b)) % N_BATCHES
        nb = r_grid.size + 1
        acc = np.bincount(batch * nb + k, weights=w, minlength=N_BATCHES * nb).reshape(N_BATCHES, nb)
        sums += np.cumsum(acc[:, ::-1], axis=1)[:, ::-1][:, 1:]
        cnt = np.bincount(k, minlength=r_grid.size + 1)
        hits += np.cumsum(cnt[::-1])[::-1][1:]
        sizes += np.bincount(batch, minlength=N_BATCHES)
        done += b
    return sums, sizes, hits


def estimate_lambda_curve(
    kernel: kn.Kernel,
    r_max: float,
    n_samples: int,
    seed: int,
    *,
    r_grid=None,
    n_r: int = 201,
    grid_factor: float = 0.05,
    workers: int = 1,
    chunk: int = 50_000,
) -> LambdaCurve:
    """Kac-Rice estimate of lambda(r) = -G'(r) on [0, r_max]."""
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    r_grid = _default_r_grid(r_max, n_r) if r_grid is None else np.asarray(r_grid, dtype=float)
    if r_grid[-1] > r_max:
        raise ValueError("r_grid extends beyond r_max; extend r_max")
    spacing = gs.default_spacing(kernel, grid_factor)
    grid = spacing * np.arange(1, math.ceil(r_max / spacing) + 3)
    model = gs.build_conditional_zero_model(kernel, grid)
    args = [(model, spacing, s, m, seed, r_grid) for s, m in split(n_samples, chunk)]
    parts = run_tasks(_lambda_task, args, workers)
    sums = np.sum([p[0] for p in parts], axis=0)
    sizes = np.sum([p[1] for p in parts], axis=0)
    hits = np.sum([p[2] for p in parts], axis=0)
    return LambdaCurve(r_grid, sums, sizes, hits, (2 * math.pi * kernel.variance) ** -0.5)


def merge_G_curves(*curves: GCurve) -> GCurve:
    """Pool G curves estimated from disjoint seeds on the same r grid."""
    r = curves[0].r_grid
    if any(not np.array_equal(c.r_grid, r) for c in curves):
        raise ValueError("curves must share the r grid")
    return GCurve(r, sum(c.n for c in curves), sum(c.gap_counts for c in curves), sum(c.pos_counts for c in curves))


def merge_lambda_curves(*curves: LambdaCurve) -> LambdaCurve:
    """Pool lambda curves batch by batch (batch j of each curve goes into batch j)."""
    r = curves[0].r_grid
    if any(not np.array_equal(c.r_grid, r) or c.norm != curves[0].norm for c in curves):
        raise ValueError("curves must share the r grid and normalisation")
    return LambdaCurve(
        r,
        sum(c.batch_sums for c in curves),
        sum(c.batch_sizes for c in curves),
        sum(c.hits for c in curves),
        curves[0].norm,
    )


@dataclass(frozen=True, eq=False)
class ScalingTable:
    """Monotone-corrected estimates of G, lambda and theta on a common r grid.

    ``theta`` is finite on the reliable prefix ``r_grid[:n_valid]``; queries
    outside it raise :class:`RangeError`.
    """

    r_grid: np.ndarray
    theta_hat: np.ndarray
    n_valid: int
    G_hat: Optional[np.ndarray] = None
    G_lo: Optional[np.ndarray] = None
    G_hi: Optional[np.ndarray] = None
    G_raw: Optional[np.ndarray] = None
    lambda_hat: Optional[np.ndarray] = None
    lambda_lo: Optional[np.ndarray] = None
    lambda_hi: Optional[np.ndarray] = None
    lambda_raw: Optional[np.ndarray] = None
    n_samples: tuple = (0, 0)
    G_counts: Optional[np.ndarray] = None
    lambda_hits: Optional[np.ndarray] = None
    flags: list = field(default_factory=list)

    @classmethod
    def from_theta(cls, r_grid, theta_values) -> "ScalingTable":
        """Table from a known nondecreasing theta (testing and injection)."""
        r = np.asarray(r_grid, dtype=float)
        t = np.asarray(theta_values, dtype=float)
        if r.shape != t.shape or r.size < 2:
            raise ValueError("r_grid and theta must have equal length >= 2")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(t) < 0):
            raise ValueError("r_grid must increase and theta must be nondecreasing")
        return cls(r, t, r.size, lambda_hat=np.exp(-t))

    @property
    def r_range(self) -> tuple[float, float]:
        return float(self.r_grid[0]), float(self.r_grid[self.n_valid - 1])

    @property
    def theta_range(self) -> tuple[float, float]:
        return float(self.theta_hat[0]), float(self.theta_hat[self.n_valid - 1])

    def G_usable(self) -> np.ndarray:
        """Mask of r values outside the unresolvable deep tail."""
        ok = np.zeros(self.r_grid.size, dtype=bool)
        ok[: self.n_valid] = True
        if self.G_counts is not None:
            ok &= self.G_counts >= MIN_HITS
        return ok


def build_table(gcurve: GCurve, lcurve: LambdaCurve, min_hits: int = MIN_HITS) -> ScalingTable:
    """Combine the two curves, enforce monotonicity, and take logs."""
    if not np.array_equal(gcurve.r_grid, lcurve.r_grid):
        raise ValueError("G and lambda curves must share the r grid")
    r = gcurve.r_grid
    n = gcurve.n
    g_raw = gcurve.G
    g_ci = [gcurve.G_estimate(i) for i in range(r.size)]
    g_lo = np.array([e.lo for e in g_ci])
    g_hi = np.array([e.hi for e in g_ci])
    g_w = n / np.maximum(g_raw * (1 - g_raw), 1.0 / n)
    g_iso = isotonic_nonincreasing(g_raw, g_w)

    lam_raw = lcurve.values
    se = lcurve.se
    lam_lo = lam_raw - Z95 * se
    lam_hi = lam_raw + Z95 * se
    floor = lcurve.norm / lcurve.n
    lam_iso = isotonic_nonincreasing(lam_raw, 1.0 / np.maximum(se, floor) ** 2)

    flags = []
    for i in range(r.size):
        if abs(g_iso[i] - g_raw[i]) > 2 * (g_hi[i] - g_lo[i]):
            flags.append(("G", float(r[i])))
        if abs(lam_iso[i] - lam_raw[i]) > 2 * max(lam_hi[i] - lam_lo[i], floor):
            flags.append(("lambda", float(r[i])))

    ok = (lcurve.hits >= min_hits) & (lam_iso > 0)
    n_valid = int(np.argmin(ok)) if not ok.all() else r.size
    if n_valid < 2:
        raise InsufficientDataError("fewer than two reliable r values in the lambda curve")
    with np.errstate(divide="ignore"):
        theta_hat = -np.log(lam_iso)
    theta_hat[n_valid:] = np.inf
    return ScalingTable(
        r_grid=r,
        theta_hat=theta_hat,
        n_valid=n_valid,
        G_hat=g_iso,
        G_lo=g_lo,
        G_hi=g_hi,
        G_raw=g_raw,
        lambda_hat=lam_iso,
        lambda_lo=lam_lo,
        lambda_hi=lam_hi,
        lambda_raw=lam_raw,
        n_samples=(n, lcurve.n),
        G_counts=gcurve.gap_counts,
        lambda_hits=lcurve.hits,
        flags=flags,
    )


def theta(table: ScalingTable, r):
    """Piecewise-linear interpolation of theta on the reliable range."""
    lo, hi = table.r_range
    ra = np.asarray(r, dtype=float)
    if np.any(ra < lo) or np.any(ra > hi):
        raise RangeError(f"r={r!r} outside the theta table", (lo, hi))
    n = table.n_valid
    out = np.interp(ra, table.r_grid[:n], table.theta_hat[:n])
    return float(out) if ra.ndim == 0 else out


def theta_inverse(table: ScalingTable, s: float) -> float:
    """Left-continuous inverse: the smallest r with theta(r) >= s."""
    lo, hi = table.theta_range
    if not lo <= s <= hi:
        raise RangeError(f"level s={s!r} outside the theta range", (lo, hi))
    n = table.n_valid
    r, t = table.r_grid[:n], table.theta_hat[:n]
    j = int(np.searchsorted(t, s, side="left"))
    if j == 0:
        return float(r[0])
    return float(r[j - 1] + (s - t[j - 1]) / (t[j] - t[j - 1]) * (r[j] - r[j - 1]))


def t_R(table: ScalingTable, s: float, R: float) -> float:
    return theta_inverse(table, s + math.log(R))


def _linfit(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2, resid


def fit_theta_asymptotics(table: ScalingTable, kernel: kn.Kernel, min_points: int = 5):
    """Least-squares slope of theta against its predicted growth profile.

    The regressor is ``r`` for super-polynomial decay or alpha > 1, and
    ``r**alpha * log(r)`` for alpha < 1. The fit (with intercept) uses the
    top half of the usable r range, where usable means reliable theta and
    G not in the deep tail. Returns ``(zeta_hat, diagnostics)``.
    """
    ok = table.G_usable()
    r_all = table.r_grid[ok]
    if r_all.size == 0:
        raise InsufficientDataError("no usable r values")
    r_top = r_all[-1]
    sel = ok & (table.r_grid >= r_top / 2)
    a = kernel.alpha
    poly = a is not None and a < 1
    if poly:
        sel &= table.r_grid > 1.0
    r = table.r_grid[sel]
    if r.size < min_points:
        raise InsufficientDataError(f"only {r.size} usable r points for the fit (need {min_points})")
    y = table.theta_hat[sel]
    x = r**a * np.log(r) if poly else r
    slope, icpt, r2, resid = _linfit(x, y)
    q = max(2, r.size // 4)
    lo_slope = _linfit(x[:q], y[:q])[0] if q >= 2 else float("nan")
    hi_slope = _linfit(x[-q:], y[-q:])[0] if q >= 2 else float("nan")
    diag = {
        "model": "r^alpha log r" if poly else "r",
        "r2": r2,
        "intercept": icpt,
        "n_points": int(r.size),
        "r_fit": (float(r[0]), float(r[-1])),
        "slope_low_quarter": lo_slope,
        "slope_high_quarter": hi_slope,
        "max_abs_residual": float(np.max(np.abs(resid))),
    }
    if table.G_hat is not None:
        diag["G_at_top"] = float(table.G_hat[sel][-1])
        if diag["G_at_top"] > 1e-2:
            diag["warning"] = "table does not reach G < 1e-2"
    return slope, diag


def derivative_check(gcurve: GCurve, lcurve: LambdaCurve, indices, step: int):
    """Compare -(G(r+h) - G(r-h)) / 2h with lambda(r) at grid indices.

    ``h = step * dr``; both sides carry 95% intervals and a point agrees
    when the intervals overlap.
    """
    r = gcurve.r_grid
    out = []
    for i in indices:
        h = r[i + step] - r[i]
        if not np.isclose(r[i] - r[i - step], h):
            raise ValueError("derivative check needs a uniform r grid around each point")
        k = int(gcurve.gap_counts[i - step] - gcurve.gap_counts[i + step])
        p = k / gcurve.n
        d = p / (2 * h)
        d_se = math.sqrt(max(p * (1 - p), 1.0 / gcurve.n) / gcurve.n) / (2 * h)
        lam = lcurve.estimate(i)
        agree = abs(d - lam.value) <= Z95 * d_se + lam.half_width
        out.append(
            {"r": float(r[i]), "dG": d, "dG_lo": d - Z95 * d_se, "dG_hi": d + Z95 * d_se,
             "lambda": lam.value, "lambda_lo": lam.lo, "lambda_hi": lam.hi, "agree": bool(agree)}
        )
    return out


def write_scaling_csv(table: ScalingTable, path) -> None:
    n = table.r_grid.size

    def col(a):
        return a if a is not None else [None] * n

    rows = zip(
        table.r_grid, col(table.G_hat), col(table.G_lo), col(table.G_hi), col(table.lambda_hat),
        col(table.lambda_lo), col(table.lambda_hi), table.theta_hat,
    )
    write_csv(path, ["r", "G_hat", "G_lo", "G_hi", "lambda_hat", "lambda_lo", "lambda_hi", "theta_hat"], rows)


def read_scaling_csv(path) -> ScalingTable:
    """Inverse of :func:`write_scaling_csv` for the columns it stores."""
    rows = read_csv(path)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two rows")

    def arr(key):
        vals = [row[key] for row in rows]
        return None if all(v == "" for v in vals) else np.array([float(v) if v else np.nan for v in vals])

    theta_hat = arr("theta_hat")
    fin = np.isfinite(theta_hat)
    n_valid = int(np.argmin(fin)) if not fin.all() else fin.size
    if n_valid < 2:
        raise InsufficientDataError(f"{path}: fewer than two finite theta values")
    return ScalingTable(
        arr("r"), theta_hat, n_valid,
        G_hat=arr("G_hat"), G_lo=arr("G_lo"), G_hi=arr("G_hi"),
        lambda_hat=arr("lambda_hat"), lambda_lo=arr("lambda_lo"), lambda_hi=arr("lambda_hi"),
    )
