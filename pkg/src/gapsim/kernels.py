"""Stationary covariance kernels with analytic first and second derivatives.

A kernel is ``K(x) = amplitude * k0(x / length)`` where ``k0`` is one of the
unit-variance base kernels below. Kernels are addressed from the command line
by strings such as ``"gaussian"`` or ``"cauchy:alpha=0.5,scale=2,len=0.5"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "Kernel",
    "KernelSpecError",
    "UnsupportedError",
    "gaussian",
    "cauchy",
    "parse_kernel",
    "eval",
    "eval_d1",
    "eval_d2",
    "rice_intensity",
    "zeta_predicted",
    "zeta_gamma_form",
    "kbar",
]

SUPERPOLY = "superpoly"
POLY = "poly"


class KernelSpecError(ValueError):
    """Malformed or incomplete kernel description."""


class UnsupportedError(ValueError):
    """Requested quantity is not defined for this kernel."""


def _gauss0(x):
    return np.exp(-0.5 * x * x)


def _gauss1(x):
    return -x * np.exp(-0.5 * x * x)


def _gauss2(x):
    return (x * x - 1.0) * np.exp(-0.5 * x * x)


def _cauchy0(x, a):
    return (1.0 + x * x) ** (-0.5 * a)


def _cauchy1(x, a):
    return -a * x * (1.0 + x * x) ** (-0.5 * a - 1.0)


def _cauchy2(x, a):
    u = 1.0 + x * x
    return -a * u ** (-0.5 * a - 1.0) + a * (a + 2.0) * x * x * u ** (-0.5 * a - 2.0)


@dataclass(frozen=True)
class Kernel:
    """Covariance kernel ``K(x) = amplitude * base(x / length)``.

    ``params`` carries base-kernel parameters as a sorted tuple of pairs so
    that kernels stay hashable.
    """

    name: str
    params: tuple = ()
    amplitude: float = 1.0
    length: float = 1.0
    _alpha: Optional[float] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.name not in ("gaussian", "cauchy"):
            raise KernelSpecError(f"unknown kernel {self.name!r}")
        if not (self.amplitude > 0 and math.isfinite(self.amplitude)):
            raise KernelSpecError("amplitude must be positive")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise KernelSpecError("length must be positive")
        p = dict(self.params)
        if self.name == "cauchy":
            if "alpha" not in p:
                raise KernelSpecError("cauchy kernel needs alpha")
            a = float(p["alpha"])
            if not 0 < a < 2:
                raise KernelSpecError(f"cauchy alpha must lie in (0, 2), got {a}")
            object.__setattr__(self, "_alpha", a)
        elif p:
            raise KernelSpecError("gaussian kernel takes no parameters")

    @property
    def variance(self) -> float:
        return self.amplitude

    @property
    def lambda2(self) -> float:
        """Second spectral moment ``-K''(0)``."""
        base = 1.0 if self.name == "gaussian" else self._alpha
        return self.amplitude * base / self.length**2

    @property
    def decay_class(self) -> str:
        return SUPERPOLY if self.name == "gaussian" else POLY

    @property
    def alpha(self) -> Optional[float]:
        """Polynomial decay exponent, ``None`` for super-polynomial decay."""
        return self._alpha

    def scaled(self, c: float) -> "Kernel":
        return Kernel(self.name, self.params, self.amplitude * c, self.length)

    def dilated(self, ell: float) -> "Kernel":
        """Kernel ``x -> K(x / ell)``."""
        return Kernel(self.name, self.params, self.amplitude, self.length * ell)

    def spec(self) -> str:
        parts = [f"{k}={v!r}" for k, v in self.params]
        if self.amplitude != 1.0:
            parts.append(f"scale={self.amplitude!r}")
        if self.length != 1.0:
            parts.append(f"len={self.length!r}")
        return self.name + (":" + ",".join(parts) if parts else "")

    def __call__(self, x):
        return eval(self, x)


def gaussian() -> Kernel:
    return Kernel("gaussian")


def cauchy(alpha: float) -> Kernel:
    return Kernel("cauchy", (("alpha", float(alpha)),))


def parse_kernel(spec: str) -> Kernel:
    """Parse ``name[:key=value,...]``; keys ``scale`` and ``len`` wrap the base."""
    name, _, rest = spec.strip().partition(":")
    name = name.strip().lower()
    kv = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise KernelSpecError(f"bad kernel parameter {item!r} in {spec!r}")
            try:
                kv[key.strip()] = float(val)
            except ValueError:
                raise KernelSpecError(f"non-numeric value in {item!r}") from None
    amp = kv.pop("scale", 1.0)
    ell = kv.pop("len", 1.0)
    return Kernel(name, tuple(sorted(kv.items())), amp, ell)


def _checked(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel argument must be finite")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def eval(kernel: Kernel, x):
    """K(x), vectorised over ``x``."""
    xs = _checked(x) / kernel.length
    if kernel.name == "gaussian":
        v = _gauss0(xs)
    else:
        v = _cauchy0(xs, kernel.alpha)
    return _out(kernel.amplitude * v, x)


def eval_d1(kernel: Kernel, x):
    """K'(x), the derivative in the lag."""
    xs = _checked(x) / kernel.length
    if kernel.name == "gaussian":
        v = _gauss1(xs)
    else:
        v = _cauchy1(xs, kernel.alpha)
    return _out(kernel.amplitude / kernel.length * v, x)


def eval_d2(kernel: Kernel, x):
    xs = _checked(x) / kernel.length
    if kernel.name == "gaussian":
        v = _gauss2(xs)
    else:
        v = _cauchy2(xs, kernel.alpha)
    return _out(kernel.amplitude / kernel.length**2 * v, x)


def rice_intensity(kernel: Kernel) -> float:
    """Expected number of zeros per unit length."""
    return math.sqrt(kernel.lambda2 / kernel.variance) / math.pi


def zeta_predicted(kernel: Kernel) -> Optional[float]:
    """Closed-form asymptotic constant for polynomial decay with alpha < 1.

    Returns ``None`` whenever no closed form is available (super-polynomial
    decay or alpha > 1).
    """
    a = kernel.alpha
    if a is None:
        return None
    if a == 1.0:
        raise UnsupportedError("alpha = 1 is excluded")
    if a > 1.0:
        return None
    return 2.0 * kernel.variance * (1.0 - a) * math.sin(a * math.pi / 2) / (math.sqrt(math.pi) * a)


def zeta_gamma_form(kernel: Kernel) -> Optional[float]:
    """The alternative Gamma-function expression, kept for comparison only.

    It does not agree with :func:`zeta_predicted`; see the README.
    """
    a = kernel.alpha
    if a is None or a >= 1.0:
        return None
    return kernel.variance * math.sqrt(math.pi) * (1 - a) / (math.gamma((1 - a) / 2) * math.gamma(1 + a / 2))


def kbar(kernel: Kernel, s: float, horizon: float = 1e4, n: int = 20001) -> float:
    """max_{x >= s} |K(x)|, evaluated on a grid out to ``s + horizon``.

    Both built-in kernels are monotone in |x| so this is K(s) for them; the
    grid search keeps the definition honest for wrappers.
    """
    xs = s + np.linspace(0.0, horizon, n)
    return float(np.max(np.abs(eval(kernel, xs))))
