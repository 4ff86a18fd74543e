import math

import numpy as np
import pytest

from gapsim import kernels as kn

G = kn.gaussian()
C = kn.cauchy(0.5)


def test_eval_examples():
    assert kn.eval(G, 0.0) == 1.0
    assert kn.eval(G, 1.0) == pytest.approx(0.606531, abs=1e-6)
    assert kn.eval(C, 2.0) == pytest.approx(5 ** -0.25, rel=1e-14)
    assert kn.eval(C, 2.0) == pytest.approx(0.668740, abs=1e-6)
    with pytest.raises(ValueError):
        kn.eval(G, math.inf)
    with pytest.raises(ValueError):
        kn.eval(G, np.array([0.0, math.nan]))


def test_derivative_examples():
    assert kn.eval_d2(G, 0.0) == -1.0
    assert kn.eval_d1(C, 0.0) == 0.0
    assert kn.eval_d2(C, 0.0) == pytest.approx(-0.5)


@pytest.mark.parametrize("kernel", [G, C, kn.cauchy(1.5), kn.parse_kernel("gaussian:scale=2,len=0.5")])
def test_finite_difference_second_order(kernel):
    x = np.linspace(-10, 10, 2001)
    # error constants scale with amplitude / length^3 (d1) and / length^4 (d2)
    c1 = 5 * kernel.amplitude / kernel.length**3
    c2 = 5 * kernel.amplitude / kernel.length**4
    errs = []
    for h in (1e-3, 1e-4):
        fd1 = (kn.eval(kernel, x + h) - kn.eval(kernel, x - h)) / (2 * h)
        fd2 = (kn.eval_d1(kernel, x + h) - kn.eval_d1(kernel, x - h)) / (2 * h)
        e1 = np.max(np.abs(kn.eval_d1(kernel, x) - fd1))
        e2 = np.max(np.abs(kn.eval_d2(kernel, x) - fd2))
        errs.append((e1, e2))
        assert e1 < c1 * h * h + 1e-10
        assert e2 < c2 * h * h + 1e-10
    # the h=1e-3 error shrinks by ~100 at h=1e-4 until round-off takes over
    assert errs[1][0] < errs[0][0] / 20 or errs[1][0] < 1e-10


def test_rice_intensity_examples():
    assert kn.rice_intensity(G) == pytest.approx(1 / math.pi)
    assert kn.rice_intensity(C) == pytest.approx(math.sqrt(0.5) / math.pi)
    assert kn.rice_intensity(G.dilated(2.0)) == pytest.approx(1 / (2 * math.pi))
    assert kn.rice_intensity(G.scaled(7.0)) == pytest.approx(1 / math.pi)


def test_lambda2_matches_second_derivative():
    for k in (G, C, kn.cauchy(1.3).dilated(0.7).scaled(2.0)):
        assert k.lambda2 == pytest.approx(-kn.eval_d2(k, 0.0))


def test_zeta_predicted():
    assert kn.zeta_predicted(C) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-14)
    assert kn.zeta_predicted(C) == pytest.approx(0.797885, abs=1e-6)
    assert kn.zeta_predicted(G) is None
    assert kn.zeta_predicted(kn.cauchy(1.5)) is None
    assert kn.zeta_predicted(kn.cauchy(1 - 1e-9)) < 1e-8
    with pytest.raises(kn.UnsupportedError):
        kn.zeta_predicted(kn.cauchy(1.0))
    for c in (0.5, 3.0):
        assert kn.zeta_predicted(C.scaled(c)) == pytest.approx(c * kn.zeta_predicted(C))


def test_gamma_form_is_a_different_number():
    assert kn.zeta_gamma_form(C) == pytest.approx(0.2697, abs=1e-4)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 1.5])
def test_cauchy_tail(alpha):
    k = kn.cauchy(alpha)
    for x in (1e3, 1e4):
        assert kn.eval(k, x) * x**alpha == pytest.approx(1.0, rel=0.01)


def test_parse_kernel():
    k = kn.parse_kernel("cauchy:alpha=0.5,scale=2,len=0.5")
    assert k.alpha == 0.5 and k.variance == 2.0 and k.length == 0.5
    assert kn.parse_kernel(k.spec()) == k
    assert kn.parse_kernel("gaussian") == G
    for bad in ("cauchy", "cauchy:alpha=2", "cauchy:alpha=x", "matern:nu=1", "gaussian:alpha=1", "gaussian:scale=-1"):
        with pytest.raises(kn.KernelSpecError):
            kn.parse_kernel(bad)


def test_covariance_matrices_are_spd():
    rng = np.random.default_rng(0)
    for k in (G, C):
        x = np.sort(rng.uniform(0, 20, 12))
        x = x[np.diff(x, prepend=-1) > 0.05]
        np.linalg.cholesky(kn.eval(k, x[:, None] - x[None, :]))


def test_kbar():
    assert kn.kbar(G, 3.0) == pytest.approx(math.exp(-4.5))
    assert kn.kbar(C, 100.0) == pytest.approx(kn.eval(C, 100.0))
