import math

import numpy as np
import pytest

from gapsim import gaussian as gs
from gapsim import kernels as kn
from gapsim import scaling as sc

G = kn.gaussian()


@pytest.fixture(scope="module")
def curves():
    g = sc.estimate_G_curve(G, 6.0, 40_000, 1, n_r=61)
    lam = sc.estimate_lambda_curve(G, 6.0, 100_000, 1, n_r=61)
    return g, lam


def test_G_curve_basic(curves):
    g, _ = curves
    assert g.G[0] == 1.0
    assert np.all(np.diff(g.G) <= 0)
    for i in (5, 20, 40):
        assert g.P_estimate(i).overlaps(wilson_half(g, i))


def wilson_half(g, i):
    from gapsim.stats import wilson_interval
    e = wilson_interval(int(g.gap_counts[i]), g.n)
    return type(e)(e.value / 2, e.lo / 2, e.hi / 2, e.n, e.method)


def test_G_far_tail_is_zero_with_one_sided_ci():
    g = sc.estimate_G_curve(G, 40.0, 2000, 3, n_r=5)
    e = g.G_estimate(4)
    assert e.value == 0.0 and e.lo == 0.0 and e.hi > 0


def test_two_point_orthant_analogue():
    # the machinery behind G: P[f(0) > 0, f(dx) > 0] on the same sampler
    dx = gs.default_spacing(G)
    s = gs.stationary_sampler(G, 50, dx)
    from gapsim.rng import stream
    x = s.sample(stream(9, 0), 100_000)
    p = np.mean((x[:, 0] > 0) & (x[:, 1] > 0))
    ref = gs.orthant2(kn.eval(G, dx))
    assert abs(2 * p - 2 * ref) < 3 * 2 * math.sqrt(ref * (1 - ref) / 1e5)


def test_lambda_zero_is_rice(curves):
    _, lam = curves
    e = lam.estimate(0)
    # 3 SE: a unit-level sanity check; the acceptance suite uses the 95% interval
    assert abs(e.value - kn.rice_intensity(G)) < 3 * e.half_width / 1.959964


def test_derivative_check(curves):
    g, lam = curves
    res = sc.derivative_check(g, lam, [10, 20, 30, 40, 50], 2)
    assert sum(r["agree"] for r in res) >= 4


def test_build_table_and_theta(curves):
    t = sc.build_table(*curves)
    assert np.all(np.diff(t.theta_hat[: t.n_valid]) >= 0)
    assert t.theta_hat[0] == pytest.approx(-math.log(kn.rice_intensity(G)), abs=0.02)
    with pytest.raises(sc.RangeError) as ei:
        sc.theta(t, 100.0)
    assert ei.value.valid == t.r_range


def test_theta_toy_tables():
    r = np.linspace(0, 10, 11)
    t = sc.ScalingTable.from_theta(r, r)
    R = 50.0
    for s in (0.0, 1.3, 5.0):
        assert sc.t_R(t, s, R) == pytest.approx(s + math.log(R))
        assert sc.theta(t, sc.t_R(t, s, R)) - math.log(R) == pytest.approx(s)
    for s in (0.5, 2.25, 9.9):
        assert sc.theta(t, sc.theta_inverse(t, s)) == pytest.approx(s)
    flat = sc.ScalingTable.from_theta([0, 1, 2, 3], [0, 1, 1, 2])
    assert sc.theta_inverse(flat, 1.0) == 1.0
    with pytest.raises(sc.RangeError):
        sc.theta_inverse(flat, 2.5)


def test_fit_injected_linear():
    r = np.linspace(0, 20, 41)
    z, d = sc.fit_theta_asymptotics(sc.ScalingTable.from_theta(r, 2 * r), G)
    assert z == pytest.approx(2.0) and d["r2"] == pytest.approx(1.0)


def test_fit_injected_poly():
    r = np.linspace(0.5, 100, 200)
    th = 0.8 * np.sqrt(r) * np.log(r)
    th = np.maximum.accumulate(th)
    z, d = sc.fit_theta_asymptotics(sc.ScalingTable.from_theta(r, th), kn.cauchy(0.5))
    assert z == pytest.approx(0.8) and d["model"] == "r^alpha log r"


def test_fit_insufficient():
    with pytest.raises(sc.InsufficientDataError):
        sc.fit_theta_asymptotics(sc.ScalingTable.from_theta([0, 1, 2, 3], [0, 1, 2, 3]), G)


def test_zero_intensity():
    est, counts = sc.estimate_zero_intensity(G, 400.0, 64, 2)
    assert est.value == pytest.approx(1 / math.pi, rel=0.03)
    assert counts.size == 64


def test_csv_round_trip(curves, tmp_path):
    t = sc.build_table(*curves)
    sc.write_scaling_csv(t, tmp_path / "s.csv")
    back = sc.read_scaling_csv(tmp_path / "s.csv")
    assert back.n_valid == t.n_valid
    assert np.array_equal(back.theta_hat[: t.n_valid], t.theta_hat[: t.n_valid])
    assert sc.theta(back, 2.0) == sc.theta(t, 2.0)


def test_seed_determinism_across_workers():
    a = sc.estimate_G_curve(G, 3.0, 3000, 5, n_r=11, chunk=1000)
    b = sc.estimate_G_curve(G, 3.0, 3000, 5, n_r=11, chunk=1000, workers=2)
    assert np.array_equal(a.gap_counts, b.gap_counts)


def test_merge_curves_pools_counts(curves):
    g, lam = curves
    g2 = sc.merge_G_curves(g, g)
    assert g2.n == 2 * g.n
    np.testing.assert_allclose(g2.G, g.G)
    l2 = sc.merge_lambda_curves(lam, lam)
    assert l2.n == 2 * lam.n
    np.testing.assert_allclose(l2.values, lam.values)
    bad = sc.GCurve(g.r_grid + 1.0, g.n, g.gap_counts, g.pos_counts)
    with pytest.raises(ValueError):
        sc.merge_G_curves(g, bad)
