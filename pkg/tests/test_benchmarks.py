import datetime as dt

import numpy as np
import pytest
from scipy import stats

from idmix import constants as C
from idmix.benchmarks import (KINDS, BenchmarkFitError, BenchmarkSpec, auto_arima, fit_benchmark,
                              simulate_benchmark, t_fit_profile)
from idmix.marketgrid import SessionGrid

T = C.T_STEPS
KEY = (dt.date(2021, 6, 1), 10)


def grid(diffs, alpha=None, history=None, day=0, anchor=40.0):
    diffs = np.asarray(diffs, float)
    alpha = diffs != 0 if alpha is None else np.asarray(alpha, bool)
    prices = anchor + np.cumsum(diffs)
    hist = np.full(12, anchor) if history is None else np.asarray(history, float)
    hd = np.diff(np.r_[hist[0], hist])
    return SessionGrid(dt.date(2021, 1, 1) + dt.timedelta(days=day), 10, anchor, anchor, prices, diffs, alpha,
                       hist, hd, hd != 0)


def training(n=60, seed=0, pi=0.6, scale=1.0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        a = rng.random(T) < pi
        out.append(grid(np.where(a, scale * rng.standard_t(5, T), 0.0), a, day=i))
    return out


def test_naive_pool_is_the_training_set():
    g = training(45)
    spec = fit_benchmark("naive", g)
    assert np.asarray(spec.params["pool"]).shape == (45, T)


def test_naive_single_trajectory_gives_identical_paths():
    spec = BenchmarkSpec("naive", {"pool": np.arange(T, dtype=float)[None, :]})
    ens = simulate_benchmark(spec, 50.0, 30, T, seed=1, key=KEY)
    assert np.all(ens.P == ens.P[0]) and ens.P[0, -1] == 50.0 + np.arange(T).sum()


def test_rw_normal_moments():
    rng = np.random.default_rng(1)
    g = [grid(rng.standard_normal(T), np.ones(T), day=i) for i in range(200)]
    p = fit_benchmark("rw_normal", g).params
    n = 200 * T
    assert abs(p["mu"]) < 3 / np.sqrt(n)
    assert abs(p["sigma"] - 1.0) < 3 / np.sqrt(2 * n)


def test_rw_t_mix_pi_is_mean_alpha():
    g = training(40, seed=2)
    spec = fit_benchmark("rw_t_mix", g)
    expected = np.vstack([x.alpha for x in g]).mean(axis=0)
    assert np.array_equal(np.asarray(spec.params["pi"]), expected)


def test_rw_t_degrees_of_freedom_stay_on_the_grid():
    for kind in ("rw_t", "rw_t_mix"):
        spec = fit_benchmark(kind, training(40, seed=3, pi=0.3))
        assert 3 <= spec.params["df"] <= 30
        ens = simulate_benchmark(spec, 40.0, 200, T, seed=0, key=KEY)
        assert np.all(np.isfinite(ens.P))


def test_t_profile_matches_grid_search_oracle():
    x = stats.t.rvs(6, loc=0.3, scale=2.0, size=3000, random_state=4)
    df, loc, scale = t_fit_profile(x)
    lls = {d: stats.t.logpdf(x, *stats.t.fit(x, fdf=d)).sum() for d in range(3, 31)}
    assert df == max(lls, key=lls.get)


def test_flat_paths_for_zero_scale_and_zero_pi():
    ens = simulate_benchmark(BenchmarkSpec("rw_normal", {"mu": 0.0, "sigma": 0.0}), 33.0, 20, T, 0, KEY)
    assert np.all(ens.P == 33.0)
    spec = BenchmarkSpec("rw_t_mix", {"df": 4.0, "loc": 1.0, "scale": 5.0, "pi": np.zeros(T)})
    ens = simulate_benchmark(spec, 33.0, 20, T, 0, KEY)
    assert np.all(ens.P == 33.0) and not ens.alpha.any()


@pytest.mark.parametrize("kind", KINDS)
def test_every_benchmark_telescopes_and_is_reproducible(kind):
    rng = np.random.default_rng(5)
    hist = 40 + np.cumsum(rng.normal(0, 0.5, 60))
    g = training(40, seed=5)
    target = grid(np.zeros(T), history=hist)
    spec = fit_benchmark(kind, g, target)
    a = simulate_benchmark(spec, 40.0, 50, T, seed=7, key=KEY)
    b = simulate_benchmark(BenchmarkSpec.from_dict(spec.to_dict()), 40.0, 50, T, seed=7, key=KEY)
    assert a.telescopes() and a.P.shape == (50, T)
    assert np.array_equal(a.P, b.P)


def test_too_few_sessions():
    with pytest.raises(BenchmarkFitError):
        fit_benchmark("rw_normal", training(29))


def test_mv_t_approaches_mv_normal():
    spec = BenchmarkSpec("mv_t", {"mean": np.zeros(T), "cov": np.eye(T), "df": 1e7})
    ens = simulate_benchmark(spec, 0.0, 3300, T, seed=3, key=KEY)
    x = ens.dP.ravel()[:100_000]
    assert stats.kstest(x, "norm").statistic < 0.01


def test_mv_normal_moments():
    rng = np.random.default_rng(6)
    L = np.tril(rng.normal(0, 0.3, (T, T))) + np.eye(T)
    g = [grid(L @ rng.standard_normal(T), np.ones(T), day=i) for i in range(400)]
    spec = fit_benchmark("mv_normal", g)
    dP = np.vstack([x.diffs for x in g])
    np.testing.assert_allclose(spec.params["cov"], np.cov(dP, rowvar=False, bias=True), atol=1e-6)


def test_arima_recovers_ar1():
    rng = np.random.default_rng(8)
    y = np.empty(400)
    y[0] = 50.0
    for i in range(1, 400):
        y[i] = 20.0 + 0.6 * y[i - 1] + rng.normal()
    fit = auto_arima(y)
    assert (fit.p, fit.d, fit.q) == (1, 0, 0)
    assert fit.ar[0] == pytest.approx(0.6, abs=0.1)
    assert fit.const / (1 - fit.ar[0]) == pytest.approx(50.0, abs=1.0)


def test_arima_differences_a_random_walk():
    y = 40 + np.cumsum(np.random.default_rng(9).normal(size=300))
    assert auto_arima(y).d == 1
