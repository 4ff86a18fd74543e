import math

import numpy as np
import pytest

from gapsim import kernels as kn
from gapsim import pointprocess as pp
from gapsim import scaling as sc
from gapsim.zeros import ZeroSet

TOY = sc.ScalingTable.from_theta(np.linspace(0, 50, 501), np.linspace(0, 50, 501))
LOG4 = math.log(4)


def toy_zeros():
    return ZeroSet(np.array([0.2, 1.0, 4.0, 4.5, 6.0]), (0.0, 10.0), 1e-6)


def test_build_psi_toy():
    a = pp.build_psi(toy_zeros(), 4.0, TOY)
    assert np.allclose(a.u, [0.05, 0.25, 1.0])
    assert np.allclose(a.v, [0.8 - LOG4, 3.0 - LOG4, 0.5 - LOG4])
    empty = pp.build_psi(ZeroSet(np.array([5.0, 7.0]), (0.0, 10.0), 1e-6), 4.0, TOY)
    assert len(empty) == 0


def test_build_psi_sentinel():
    short = sc.ScalingTable.from_theta([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    a = pp.build_psi(toy_zeros(), 4.0, short)
    assert a.n_sentinel == 1 and math.isinf(a.v[1])
    assert pp.count(a, (0, 1), (0, math.inf)) == 1


def test_count_examples_and_additivity():
    a = pp.build_psi(toy_zeros(), 4.0, TOY)
    assert pp.count(a, (0, 1), (-math.inf, math.inf)) == 3
    assert pp.count(a, (0, 1), (1.0, 0.0)) == 0
    assert pp.count(a, (0, 0.5), (0, math.inf)) == 1
    for cut in (-1.0, 0.0, 1.6):
        total = pp.count(a, (0, 1), (-math.inf, math.inf))
        lower = pp.count(a, (0, 1), (-math.inf, np.nextafter(cut, -math.inf)))
        assert total == lower + pp.count(a, (0, 1), (cut, math.inf))
    with pytest.raises(ValueError):
        pp.count(a, (0.5, 1.5))


def _atoms_with_counts(counts, rng):
    return [pp.AtomSet(1.0, rng.random(c), rng.exponential(size=c)) for c in counts]


def test_factorial_moment_poisson_injection():
    rng = np.random.default_rng(4)
    runs = _atoms_with_counts(rng.poisson(0.7, 20_000), rng)
    est, target = pp.factorial_moment_test(runs, 2, (0, 1), (0, math.inf))
    assert target == 1.0
    assert est.contains(0.49)
    zero = _atoms_with_counts([0] * 150, rng)
    for k in (1, 2, 3):
        assert pp.factorial_moment_test(zero, k)[0].value == 0
    with pytest.raises(sc.InsufficientDataError):
        pp.factorial_moment_test(zero[:99], 1)


def test_poisson_target():
    assert pp.poisson_target(1, (0, 1), (0, math.inf)) == 1.0
    assert pp.poisson_target(2, (0, 0.5), (1, 2)) == pytest.approx((0.5 * (math.exp(-1) - math.exp(-2))) ** 2)


def _injected_extremes(n, R, seed):
    rng = np.random.default_rng(seed)
    x = -np.log(-np.log(rng.random(n)))
    # theta = identity on the toy table, so L = x + log R
    return [pp.ExtremeSample(float(xi + math.log(R)), float(u * R), R, "inj") for xi, u in zip(x, rng.random(n))]


def test_gumbel_uniform_injected():
    res = pp.gumbel_uniform_tests(_injected_extremes(1000, 100.0, 0), TOY)
    assert res["p_gumbel"] > 0.01 and res["p_uniform"] > 0.01
    assert res["ks_uniform"] < 0.05
    assert abs(res["corr_u_x"]) < 0.1


def test_gumbel_shifted_rejected_and_exclusions():
    ex = [pp.ExtremeSample(e.L + 0.5, e.Z, e.R, e.seed) for e in _injected_extremes(1000, 100.0, 1)]
    assert pp.gumbel_uniform_tests(ex, TOY)["p_gumbel"] < 0.01
    ex = _injected_extremes(300, 100.0, 2) + [pp.ExtremeSample(0.0, 0.0, 100.0, "none")] * 5
    assert pp.gumbel_uniform_tests(ex, TOY)["n_excluded"] == 5
    with pytest.raises(sc.InsufficientDataError):
        pp.gumbel_uniform_tests(_injected_extremes(100, 100.0, 3), TOY)


def test_scaling_law_injected():
    g = kn.gaussian()
    zeta = 0.4
    by_R = {R: [pp.ExtremeSample(math.log(R) / zeta, 0.0, R, "x")] * 100 for R in (500.0, 2000.0)}
    res = pp.scaling_law_check(by_R, g, zeta_hat=zeta)
    assert all(r["rel_gap"] < 1e-12 for r in res["rows"])
    c = kn.cauchy(0.5)
    assert pp.scaling_law_check(by_R, c)["limit"] == pytest.approx(0.39270, abs=1e-5)
    with pytest.raises(ValueError):
        pp.scaling_law_check(by_R, g)


@pytest.fixture(scope="module")
def small_runs():
    g = kn.gaussian()
    return pp.simulate_runs(g, 60.0, 120, 8, table=TOY)


def test_max_atom_identity(small_runs):
    for run in small_runs[:20]:
        a = pp.build_psi(run.zeroset, 60.0, TOY)
        e = run.extreme()
        L, Z = e.L, e.Z
        assert a.v.max() == pytest.approx(sc.theta(TOY, L) - math.log(60.0))
        assert Z / 60.0 in a.u


def test_first_moment_is_zero_count(small_runs):
    atoms = [pp.build_psi(r.zeroset, 60.0, TOY) for r in small_runs]
    est, _ = pp.factorial_moment_test(atoms, 1, (0, 1), (-math.inf, math.inf))
    # allow the batch-means interval plus a little for the closed window ends
    assert abs(est.value - 60.0 / math.pi) < 2 * est.half_width


def test_horizon_doubling():
    g = kn.gaussian()
    runs = pp.simulate_runs(g, 30.0, 4, 1, horizon=0.01)
    for r in runs:
        assert r.zeroset.domain[1] > 30.0
        r.extreme()


def test_runs_deterministic_across_workers():
    g = kn.gaussian()
    a = [r.extreme() for r in pp.simulate_runs(g, 40.0, 6, 3, table=TOY)]
    b = [r.extreme() for r in pp.simulate_runs(g, 40.0, 6, 3, table=TOY, workers=2)]
    assert a == b
