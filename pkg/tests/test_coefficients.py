import math

import numpy as np
import pytest

from gapsim import coefficients as co
from gapsim import gaussian as gs
from gapsim import kernels as kn
from gapsim.rng import stream

G = kn.gaussian()


def test_interval_config_invariants():
    c = co.IntervalConfig.equally_spaced(3, 2.0, 1.5)
    assert c.k == 3 and c.r == 2.0 and c.s == 1.5 and c.hull == (0.0, 9.0)
    with pytest.raises(ValueError):
        co.IntervalConfig(((0, 1), (0, 1)))
    with pytest.raises(ValueError):
        co.IntervalConfig(((0, 1),))
    with pytest.raises(ValueError):
        co.IntervalConfig(((0, 1), (1.5, 2.5)), r=1.0, s=1.0)
    with pytest.raises(ValueError):
        co.IntervalConfig(((0, 2), (3, 4)), r=1.0)


def test_indicator_ratio_identity():
    rng = np.random.default_rng(0)
    ind = rng.random((5000, 2)) < [0.4, 0.7]
    e = co.indicator_ratio(ind)
    n = ind.shape[0]
    assert e.value == pytest.approx(ind.all(axis=1).sum() * n / (ind[:, 0].sum() * ind[:, 1].sum()), rel=1e-14)
    with pytest.raises(co.UndefinedRatioError):
        co.indicator_ratio(np.zeros((10, 2), dtype=bool))


def test_two_point_orthant_analogue():
    s = 0.7
    rho = kn.eval(G, s)
    x = gs.DenseSampler(G, 2, s).sample(stream(1, 0), 400_000)
    e = co.indicator_ratio(x > 0)
    assert e.contains(4 * gs.orthant2(rho))


def test_far_separation_ratio_is_one():
    res = co.splitting_ratio(G, co.IntervalConfig.equally_spaced(2, 3.0, 10.0), 100_000, 3)
    assert res["ratio"].contains(1.0)
    assert res["low_count_intervals"] == []


def test_independent_double():
    res = co.splitting_ratio(G, co.IntervalConfig.equally_spaced(2, 1.0, 0.5), 100_000, 4, independent=True)
    assert res["ratio"].contains(1.0)


def test_undefined_ratio():
    with pytest.raises(co.UndefinedRatioError):
        co.splitting_ratio(G, co.IntervalConfig.equally_spaced(2, 40.0, 1.0), 2000, 1)


def test_decay_scan_cauchy_sign():
    scan = co.splitting_decay_scan(kn.cauchy(0.5), 3.0, [3.0, 10.0], 2, 100_000, 5)
    assert all(scan["ratio_sign_matches_kbar"])
    assert scan["rows"][0]["r2_Kbar_s"] == pytest.approx(9 * kn.eval(kn.cauchy(0.5), 3.0))
    with pytest.raises(ValueError):
        co.splitting_decay_scan(G, 3.0, [6.0, 3.0], 2, 1000, 1)


def test_clustering_properties():
    res = co.clustering_estimate(G, 2.0, 40_000, 6)
    phi, g2 = res["phi"], res["G_2r"]
    touching = dict(res["probes"])["touching"]
    assert touching.hi >= g2.lo
    assert phi.value >= touching.value
    for _, e in res["probes"]:
        assert e.lo <= res["G_r"].hi
    k, lo, hi = res["kappa"]
    assert lo > 1.0 and lo <= k <= hi


def test_clustering_degenerate():
    res = co.clustering_estimate(G, 0.0, 10_000, 1)
    assert res["phi"].value == 1.0
    with pytest.raises(ValueError):
        co.clustering_estimate(G, 1.0, 100, 1)


def test_csv_writers(tmp_path):
    scan = co.splitting_decay_scan(G, 1.0, [1.0, 2.0], 2, 20_000, 1)
    co.write_splitting_csv(tmp_path / "s.csv", scan)
    head = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert head == "kernel,k,r,s,ratio,ratio_lo,ratio_hi,Kbar_s"
    co.write_clustering_csv(tmp_path / "c.csv", [co.clustering_estimate(G, 1.0, 10_000, 1)])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "kernel,r,probe_id,phi_hat,lo,hi,G_hat_r,kappa_hat" and len(lines) == 5
