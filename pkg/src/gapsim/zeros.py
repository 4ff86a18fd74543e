"""Zero detection on sampled paths, gaps, and the largest-gap functional."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .io import write_csv

__all__ = [
    "PathSample",
    "ZeroSet",
    "GapRecord",
    "HorizonExhaustedError",
    "find_zeros",
    "gaps",
    "largest_gap",
    "refine_in_cells",
    "first_zero_index",
    "zero_in_interval",
    "write_zeros_csv",
]


class HorizonExhaustedError(RuntimeError):
    """A zero in the window has no recorded successor; simulate further."""


@dataclass(frozen=True, eq=False)
class PathSample:
    values: np.ndarray
    spacing: float
    origin: float = 0.0
    seed_info: Optional[tuple] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a path needs at least two grid values")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "values", v)

    @property
    def end(self) -> float:
        return self.origin + (self.values.size - 1) * self.spacing

    @property
    def grid(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.values.size)


@dataclass(frozen=True, eq=False)
class ZeroSet:
    zeros: np.ndarray
    domain: tuple[float, float]
    refine_tol: float


class GapRecord(NamedTuple):
    left_zero: float
    length: float


def _cubic(ym1, y0, y1, y2, t):
    # Lagrange cubic through nodes -1, 0, 1, 2
    return (
        -ym1 * t * (t - 1) * (t - 2) / 6
        + y0 * (t + 1) * (t - 1) * (t - 2) / 2
        - y1 * (t + 1) * t * (t - 2) / 2
        + y2 * (t + 1) * t * (t - 1) / 6
    )


def refine_in_cells(values: np.ndarray, rows: np.ndarray, cells: np.ndarray, rel_tol: float) -> np.ndarray:
    """Fractional root position in each sign-change cell.

    ``values`` is 2-D (paths x grid); cell ``i`` of row ``r`` spans grid
    points ``i`` and ``i+1`` and must contain a strict sign change. Interior
    cells are bisected on the cubic through grid points ``i-1 .. i+2`` until
    the bracket is below ``rel_tol`` (in grid units); the two end cells use
    the linear root.
    """
    n = values.shape[1]
    rows = np.asarray(rows, dtype=np.intp)
    cells = np.asarray(cells, dtype=np.intp)
    y0 = values[rows, cells]
    y1 = values[rows, cells + 1]
    t = y0 / (y0 - y1)
    inner = (cells >= 1) & (cells <= n - 3)
    if np.any(inner):
        r, c = rows[inner], cells[inner]
        ym1, a, b, y2 = values[r, c - 1], values[r, c], values[r, c + 1], values[r, c + 2]
        lo = np.zeros(r.size)
        hi = np.ones(r.size)
        s_lo = np.sign(a)
        iters = max(1, math.ceil(math.log2(1.0 / rel_tol)))
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            same = np.sign(_cubic(ym1, a, b, y2, mid)) == s_lo
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        t[inner] = 0.5 * (lo + hi)
    return t


def find_zeros(path: PathSample, refine_tol: float) -> ZeroSet:
    """Zeros of the path: grid zeros as-is, one refined root per sign change."""
    if not 0 < refine_tol < path.spacing:
        raise ValueError("refine_tol must lie in (0, spacing)")
    v = path.values
    exact = np.flatnonzero(v == 0.0).astype(float)
    cells = np.flatnonzero(v[:-1] * v[1:] < 0)
    t = refine_in_cells(v[None, :], np.zeros(cells.size, dtype=np.intp), cells, refine_tol / path.spacing)
    pos = np.sort(np.concatenate([exact, cells + t]))
    return ZeroSet(path.origin + path.spacing * pos, (path.origin, path.end), refine_tol)


def first_zero_index(values: np.ndarray, start: int, rel_tol: float) -> np.ndarray:
    """Position (in grid units) of the first zero at or after grid index ``start``.

    Rows with no zero in ``[start, n-1]`` get ``inf``.
    """
    s = values[:, start:]
    nrow, m = s.shape
    hit = np.zeros((nrow, m), dtype=bool)
    hit[:, :-1] = (s[:, :-1] * s[:, 1:] < 0) | (s[:, :-1] == 0)
    hit[:, -1] = s[:, -1] == 0
    any_hit = hit.any(axis=1)
    j = np.argmax(hit, axis=1)
    out = np.full(nrow, np.inf)
    rows = np.flatnonzero(any_hit)
    if rows.size:
        jj = j[rows]
        pos = jj.astype(float)
        cell = s[rows, jj] != 0
        if np.any(cell):
            pos[cell] += refine_in_cells(values, rows[cell], jj[cell] + start, rel_tol)
        out[rows] = pos + start
    return out


def zero_in_interval(values: np.ndarray, origin: float, spacing: float, a: float, b: float,
                     rel_tol: float = 1e-3) -> np.ndarray:
    """Per row: does the sampled path vanish somewhere in the closed interval [a, b]?

    Cells fully inside [a, b] count any sign change; the two boundary cells
    locate their root before comparing it with ``a`` or ``b``.
    """
    n = values.shape[1]
    fa = (a - origin) / spacing
    fb = (b - origin) / spacing
    if fa < 0 or fb > n - 1 or fb < fa:
        raise ValueError(f"interval [{a}, {b}] not inside the sampled grid")
    ja = int(math.floor(fa))
    jb = min(int(math.ceil(fb)), n - 1)
    v = values
    out = np.any(v[:, ja : jb + 1] == 0, axis=1) if jb > ja else v[:, ja] == 0
    if jb == ja:
        return out
    change = v[:, ja:jb] * v[:, ja + 1 : jb + 1] < 0
    inner = change.copy()
    rows_all = np.arange(v.shape[0])
    # boundary cells: root must fall inside [fa, fb]
    for col in sorted({0, jb - ja - 1}):
        cell = ja + col
        if not (cell < fa or cell + 1 > fb):
            continue
        rows = rows_all[change[:, col]]
        inner[:, col] = False
        if rows.size:
            pos = cell + refine_in_cells(v, rows, np.full(rows.size, cell), rel_tol)
            ok = (pos >= fa) & (pos <= fb)
            out[rows[ok]] = True
    out |= inner.any(axis=1)
    return out


def gaps(zeroset: ZeroSet) -> list[GapRecord]:
    z = zeroset.zeros
    if z.size < 2:
        return []
    return [GapRecord(float(a), float(b - a)) for a, b in zip(z[:-1], z[1:])]


def largest_gap(zeroset: ZeroSet, R: float) -> tuple[float, float]:
    """Largest gap with left endpoint in [0, R] and its (smallest) location.

    Returns ``(0.0, 0.0)`` when no zero falls in [0, R].
    """
    z = zeroset.zeros
    lo, hi = zeroset.domain
    if lo > 0 or hi < R:
        raise HorizonExhaustedError(f"zero set covers [{lo}, {hi}], need [0, {R}]")
    i0 = int(np.searchsorted(z, 0.0, side="left"))
    i1 = int(np.searchsorted(z, R, side="right"))
    if i1 == i0:
        return 0.0, 0.0
    if i1 >= z.size:
        raise HorizonExhaustedError(
            f"zero at {z[i1 - 1]:.6g} <= R={R} has no successor within the simulated domain; extend the horizon"
        )
    lengths = z[i0 + 1 : i1 + 1] - z[i0:i1]
    k = int(np.argmax(lengths))
    return float(lengths[k]), float(z[i0 + k])


def write_zeros_csv(path, zerosets) -> None:
    """CSV of (path_id, z, gap_to_next) for a sequence of zero sets."""

    def rows():
        for pid, zs in enumerate(zerosets):
            z = zs.zeros
            for i, x in enumerate(z):
                yield pid, x, (z[i + 1] - x) if i + 1 < z.size else None

    write_csv(path, ["path_id", "z", "gap_to_next"], rows())
