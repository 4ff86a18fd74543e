"""Exact Gaussian sampling and small Gaussian oracles.

Stationary paths on a uniform grid come from circulant embedding: the
Toeplitz covariance is embedded in a nonnegative-definite circulant whose
eigenvalues are one FFT away, and each complex FFT of scaled white noise
yields two independent paths (real and imaginary part).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels as kn
from .stats import EstimateWithCI, wilson_interval
from .zeros import PathSample

__all__ = [
    "EmbeddingError",
    "ConditioningError",
    "SPDError",
    "CirculantSpectrum",
    "build_spectrum",
    "sample_paths",
    "sample_path",
    "CirculantSampler",
    "DenseSampler",
    "stationary_sampler",
    "default_spacing",
    "ConditionalZeroModel",
    "build_conditional_zero_model",
    "orthant2",
    "mvn_positive_orthant_mc",
]

NEG_TOL = 1e-10
MAX_PADDED = 2**26
# complex entries per FFT block; bounds memory without affecting the draws' order
_BLOCK = 1 << 21


class EmbeddingError(RuntimeError):
    """Circulant embedding stayed indefinite up to the padding cap."""


class ConditioningError(ValueError):
    """Conditional covariance is (near-)singular for the requested grid."""


class SPDError(np.linalg.LinAlgError):
    """Matrix failed to factorise as symmetric positive definite."""


@dataclass(frozen=True, eq=False)
class CirculantSpectrum:
    n_grid: int
    spacing: float
    padded_size: int
    eigenvalues: np.ndarray
    clamp_report: tuple[int, float]

    @property
    def scale(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues / self.padded_size)


def default_spacing(kernel: kn.Kernel, grid_factor: float = 0.05) -> float:
    """Grid step placing roughly ``1/grid_factor`` points between typical zeros."""
    return grid_factor / kn.rice_intensity(kernel)


def build_spectrum(
    kernel: Callable,
    n_grid: int,
    spacing: float,
    neg_tol: float = NEG_TOL,
    max_padded: int = MAX_PADDED,
) -> CirculantSpectrum:
    """Smallest power-of-two circulant embedding that is numerically PSD.

    ``kernel`` is any callable returning covariances at an array of lags.
    Eigenvalues down to ``-neg_tol * max`` are clamped to zero; otherwise the
    padding is doubled until ``max_padded``.
    """
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    if neg_tol < 0:
        raise ValueError("neg_tol must be nonnegative")
    m = 1 << max(1, math.ceil(math.log2(2 * (n_grid - 1))))
    worst = None
    while m <= max_padded:
        half = np.arange(m // 2 + 1) * spacing
        c = np.asarray(kernel(half), dtype=float)
        row = np.concatenate([c, c[-2:0:-1]])
        eig = np.fft.rfft(row).real
        eig = np.concatenate([eig, eig[-2:0:-1]])
        lo, top = float(eig.min()), float(eig.max())
        if lo >= -neg_tol * top:
            neg = eig < 0
            report = (int(neg.sum()), float(-lo) if neg.any() else 0.0)
            eig = np.where(neg, 0.0, eig)
            return CirculantSpectrum(n_grid, float(spacing), m, eig, report)
        worst = (m, lo, top)
        m *= 2
    raise EmbeddingError(
        f"circulant embedding indefinite at padded size {worst[0]}: most negative eigenvalue "
        f"{worst[1]:.3e} (max {worst[2]:.3e}, tolerance {neg_tol:g})"
    )


def sample_paths(spectrum: CirculantSpectrum, rng: np.random.Generator, n_paths: int) -> np.ndarray:
    """``n_paths`` independent paths, shape ``(n_paths, n_grid)``."""
    m = spectrum.padded_size
    scale = spectrum.scale
    n_fft = (n_paths + 1) // 2
    per_block = max(1, _BLOCK // m)
    out = np.empty((2 * n_fft, spectrum.n_grid))
    for b0 in range(0, n_fft, per_block):
        b = min(per_block, n_fft - b0)
        z = rng.standard_normal((b, m)) + 1j * rng.standard_normal((b, m))
        y = np.fft.fft(z * scale, axis=1)[:, : spectrum.n_grid]
        out[2 * b0 : 2 * (b0 + b) : 2] = y.real
        out[2 * b0 + 1 : 2 * (b0 + b) : 2] = y.imag
    return out[:n_paths]


class CirculantSampler:
    """Path sampler backed by a circulant spectrum."""

    def __init__(self, spectrum: CirculantSpectrum):
        self.spectrum = spectrum
        self.n_grid = spectrum.n_grid
        self.spacing = spectrum.spacing

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return sample_paths(self.spectrum, rng, n)


class DenseSampler:
    """Path sampler from a (rank-truncated) square root of the Toeplitz covariance.

    Cheaper than circulant embedding for short windows of long-range kernels,
    whose embeddings need heavy padding.
    """

    def __init__(self, kernel: Callable, n_grid: int, spacing: float, rank_tol: float = 1e-13):
        x = spacing * np.arange(n_grid)
        cov = np.asarray(kernel(x[:, None] - x[None, :]), dtype=float)
        w, v = np.linalg.eigh(cov)
        if w[0] < -1e-9 * w[-1]:
            raise SPDError(f"Toeplitz covariance is indefinite (min eigenvalue {w[0]:.3e})")
        keep = w > rank_tol * w[-1]
        self.factor = v[:, keep] * np.sqrt(w[keep])
        self.n_grid = n_grid
        self.spacing = spacing

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty((n, self.n_grid))
        per = max(1, _BLOCK // self.factor.shape[1])
        for b0 in range(0, n, per):
            b = min(per, n - b0)
            out[b0 : b0 + b] = rng.standard_normal((b, self.factor.shape[1])) @ self.factor.T
        return out


def stationary_sampler(kernel: Callable, n_grid: int, spacing: float, dense_max: int = 1500):
    """The cheaper exact sampler for ``n_grid`` points: circulant or dense.

    Per-path cost model in rough nanoseconds: a normal draw ~10, an FFT
    butterfly ~1 per element and level, a dense multiply-add ~0.1.
    """
    spectrum = build_spectrum(kernel, n_grid, spacing)
    if n_grid > dense_max:
        return CirculantSampler(spectrum)
    m = spectrum.padded_size
    circ_cost = 0.5 * m * (20 + 2 * math.log2(m))
    dense = DenseSampler(kernel, n_grid, spacing)
    rank = dense.factor.shape[1]
    if rank * (10 + 0.1 * n_grid) < circ_cost:
        return dense
    return CirculantSampler(spectrum)


def sample_path(spectrum: CirculantSpectrum, rng: np.random.Generator, origin: float = 0.0) -> PathSample:
    return PathSample(sample_paths(spectrum, rng, 1)[0], spectrum.spacing, origin)


@dataclass(frozen=True, eq=False)
class ConditionalZeroModel:
    """Law of ``(f'(0), f(grid))`` given ``f(0) = 0``.

    ``mean_op[i] = K(x_i) / K(0)`` are the regression coefficients of
    ``f(x_i)`` on ``f(0)``; ``cond_cov_factor`` is a square root ``A`` with
    ``A @ A.T`` equal to the conditional covariance, first coordinate
    ``f'(0)``.

    Sign convention: ``Cov(f'(0), f(x)) = -K'(x)``.
    """

    grid: np.ndarray
    mean_op: np.ndarray
    cond_cov_factor: np.ndarray
    cond_cov: np.ndarray

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(fprime0, values)`` of shapes ``(n,)`` and ``(n, len(grid))``."""
        z = rng.standard_normal((n, self.cond_cov_factor.shape[1]))
        x = z @ self.cond_cov_factor.T
        return x[:, 0], x[:, 1:]


def build_conditional_zero_model(
    kernel: kn.Kernel,
    grid,
    min_sep: float | None = None,
    neg_tol: float = 1e-9,
    rank_tol: float = 1e-13,
) -> ConditionalZeroModel:
    """Conditional structure of the process around a zero at the origin.

    The covariance is factorised through a symmetric eigendecomposition with
    round-off negatives clamped, since smooth kernels make dense-grid
    covariances numerically rank deficient. The factor keeps only directions
    with non-negligible variance, which also makes sampling cheaper.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("grid must be a nonempty 1-D array")
    if min_sep is None:
        min_sep = 1e-6 * math.sqrt(kernel.variance / kernel.lambda2)
    if np.any(np.diff(x) <= 0):
        i = int(np.argmin(np.diff(x)))
        raise ConditioningError(f"grid must be strictly increasing: x[{i}]={x[i]!r}, x[{i + 1}]={x[i + 1]!r}")
    if x[0] < min_sep:
        raise ConditioningError(f"grid point x[0]={x[0]!r} too close to the conditioning point 0")
    d = np.diff(x)
    if d.size and d.min() < min_sep:
        i = int(np.argmin(d))
        raise ConditioningError(f"grid points x[{i}]={x[i]!r} and x[{i + 1}]={x[i + 1]!r} closer than {min_sep:g}")
    k0 = kernel.variance
    kx = kn.eval(kernel, x)
    n = x.size
    cov = np.empty((n + 1, n + 1))
    cov[0, 0] = kernel.lambda2
    cov[0, 1:] = cov[1:, 0] = -kn.eval_d1(kernel, x)
    cov[1:, 1:] = kn.eval(kernel, x[:, None] - x[None, :]) - np.outer(kx, kx) / k0
    w, v = np.linalg.eigh(cov)
    if w[0] < -neg_tol * w[-1]:
        raise ConditioningError(f"conditional covariance is indefinite (min eigenvalue {w[0]:.3e})")
    # directions with variance below rank_tol * max are dropped (std < 1e-6 relative)
    keep = w > rank_tol * w[-1]
    factor = v[:, keep] * np.sqrt(w[keep])
    return ConditionalZeroModel(x, kx / k0, factor, cov)


def orthant2(rho: float) -> float:
    """P[X > 0, Y > 0] for a standard bivariate normal with correlation rho."""
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation {rho} outside [-1, 1]")
    return 0.25 + math.asin(rho) / (2 * math.pi)


def mvn_positive_orthant_mc(cov, n_samples: int, rng: np.random.Generator) -> EstimateWithCI:
    """Crude Monte Carlo for P[all coordinates > 0] of N(0, cov)."""
    c = np.asarray(cov, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] > 8:
        raise ValueError("cov must be a square matrix of dimension <= 8")
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    try:
        L = np.linalg.cholesky(c)
    except np.linalg.LinAlgError as e:
        raise SPDError(f"covariance is not SPD: {e}") from None
    hits = 0
    done = 0
    while done < n_samples:
        b = min(1 << 18, n_samples - done)
        x = rng.standard_normal((b, c.shape[0])) @ L.T
        hits += int(np.count_nonzero(np.all(x > 0, axis=1)))
        done += b
    return wilson_interval(hits, n_samples)
