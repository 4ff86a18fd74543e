"""Simulation of zero gaps of smooth stationary Gaussian processes.

Modules: ``kernels`` (covariances), ``gaussian`` (exact samplers and small
Gaussian oracles), ``zeros`` (zero detection), ``scaling`` (G, lambda,
theta), ``pointprocess`` (largest-gap statistics), ``coefficients``
(splitting and clustering probes), ``stats`` and ``cli``.
"""

__version__ = "0.1.0"
