import numpy as np
import pytest
from scipy import stats

from oracles import cr_ws_oracle, crps_oracle, es_oracle
from idmix.distributions import ContractViolation
from idmix.evaluation import (SCORE_REPORT_SCHEMA, DegenerateTestError, acf_lag_test, build_report,
                              coverage_and_winkler, dm_test, energy_score, mae, pinball_crps, rmse)


def random_sessions(n, M, T, seed):
    rng = np.random.default_rng(seed)
    E = [40 + np.cumsum(rng.standard_t(4, (M, T)), axis=1) for _ in range(n)]
    R = [40 + np.cumsum(rng.standard_t(4, T)) for _ in range(n)]
    return E, R


def test_point_errors():
    E = [np.full((5, 3), 2.0)]
    assert rmse(E, [np.full(3, 2.0)]) == 0 and mae(E, [np.full(3, 2.0)]) == 0
    assert rmse(E, [np.full(3, 2.5)]) == pytest.approx(0.5) and mae(E, [np.full(3, 1.5)]) == pytest.approx(0.5)
    Es, Rs = random_sessions(4, 9, 6, 0)
    oracle = np.sqrt(np.mean([(r[t] - e[:, t].mean()) ** 2 for e, r in zip(Es, Rs) for t in range(6)]))
    assert rmse(Es, Rs) == pytest.approx(oracle, rel=1e-12)


def test_crps_examples():
    assert pinball_crps([np.ones((10, 2))], [np.ones(2)])[1] == 0
    grid, crps = pinball_crps([np.zeros((10, 1))], [np.ones(1)])
    assert crps == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(grid, np.arange(1, 100) / 100)


def test_crps_matches_loop_oracle():
    E, R = random_sessions(6, 23, 5, 1)
    assert abs(pinball_crps(E, R)[1] - crps_oracle([e.tolist() for e in E], [r.tolist() for r in R])) < 1e-10


def test_energy_score_examples():
    assert energy_score(np.array([[0.0], [2.0]]), np.array([0.0])) == 0.0
    assert energy_score(np.tile([1.0, 2.0, 3.0], (4, 1)), np.array([1.0, 2.0, 3.0])) == 0.0
    with pytest.raises(ContractViolation):
        energy_score(np.zeros((1, 3)), np.zeros(3))


def test_energy_score_matches_loop_oracle_and_is_permutation_invariant():
    E, R = random_sessions(5, 17, 8, 2)
    for e, r in zip(E, R):
        es = energy_score(e, r)
        assert abs(es - es_oracle(e.tolist(), r.tolist())) < 1e-10
        assert energy_score(e[::-1], r) == pytest.approx(es, rel=1e-14)


def test_winkler_examples():
    E = [np.arange(1.0, 101.0)[:, None]]
    cr, ws = coverage_and_winkler(E, [np.array([50.0])], 0.1)
    assert cr == 1 and ws == pytest.approx(95.0 - 5.0)
    cr, ws = coverage_and_winkler(E, [np.array([2.0])], 0.1)
    assert cr == 0 and ws == pytest.approx(90.0 + 20 * 3.0)
    cr, _ = coverage_and_winkler([E[0], E[0]], [np.array([50.0]), np.array([500.0])], 0.1)
    assert cr == 0.5


def test_winkler_and_coverage_match_loop_oracle():
    E, R = random_sessions(6, 31, 4, 3)
    for level in (0.5, 0.1, 0.01):
        cr, ws = coverage_and_winkler(E, R, level)
        ocr, ows = cr_ws_oracle([e.tolist() for e in E], [r.tolist() for r in R], level)
        assert cr == ocr and abs(ws - ows) < 1e-10


def test_nan_realized_sessions_are_excluded():
    E, R = random_sessions(3, 10, 4, 4)
    R[1] = np.full(4, np.nan)
    assert pinball_crps(E, R)[1] == pytest.approx(pinball_crps([E[0], E[2]], [R[0], R[2]])[1], rel=1e-15)


def test_dm_equal_losses():
    L = np.random.default_rng(0).uniform(size=(30, 4))
    r = dm_test(L, L)
    assert r.statistic == 0 and r.pvalue == 0.5


def test_dm_antisymmetry_and_textbook_value():
    rng = np.random.default_rng(5)
    A = rng.uniform(1, 2, (1618, 3))
    B = A - 0.01 + rng.normal(0, 0.2, A.shape)
    ab, ba = dm_test(A, B), dm_test(B, A)
    assert ab.statistic == pytest.approx(-ba.statistic, rel=1e-12)
    d = np.abs(A).sum(1) - np.abs(B).sum(1)
    N = len(d)
    t_plain = d.mean() / np.sqrt(np.var(d) / N)
    assert ab.statistic == pytest.approx(np.sqrt((N + 3) / N) * t_plain, rel=1e-12)
    assert ab.pvalue == pytest.approx(stats.t.sf(ab.statistic, N - 1), rel=1e-12)
    assert ab.pvalue < 0.05 < ba.pvalue


def test_dm_errors():
    with pytest.raises(ValueError):
        dm_test(np.ones((5, 2)), np.ones((5, 2)))
    with pytest.raises(DegenerateTestError):
        dm_test(np.ones((20, 2)), np.zeros((20, 2)))


def test_acf_test():
    rng = np.random.default_rng(6)
    ps = [acf_lag_test(rng.normal(size=31), 1)[1] for _ in range(2000)]
    assert 0.03 < np.mean(np.array(ps) < 0.05) < 0.07
    x = np.arange(40.0)
    r, p = acf_lag_test(x, 1)
    assert r == pytest.approx(1.0) and p == 0.0
    with pytest.raises(DegenerateTestError):
        acf_lag_test(np.ones(20), 1)


def test_report_schema_and_dm_layout():
    import datetime as dt

    import jsonschema

    rng = np.random.default_rng(7)
    results = {"good": {}, "bad": {}}
    for d in range(12):
        for h in (6, 18):
            key = (dt.date(2021, 1, 1) + dt.timedelta(days=d), h)
            real = rng.normal(size=5)
            results["good"][key] = (real + rng.normal(0, 0.3, (50, 5)), real)
            results["bad"][key] = (real + 2 + rng.normal(0, 0.3, (50, 5)), real)
    rep = build_report(results)
    rep.validate()
    assert rep.dm["CRPS"]["bad"]["good"] < 0.01 and rep.dm["CRPS"]["good"]["bad"] > 0.99
    assert rep.dm["ES"]["good"]["good"] is None
    lines = rep.dm_csv("CRPS").splitlines()
    assert lines[0] == ",good,bad"
    agg = rep.aggregates["good"]
    assert agg["WS_90"] >= 0 and 0 <= agg["CR_90"] <= 1
    broken = rep.to_dict()
    broken["aggregates"]["good"]["CR_90"] = 1.5
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(broken, SCORE_REPORT_SCHEMA)
