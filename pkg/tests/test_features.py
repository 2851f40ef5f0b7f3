import datetime as dt

import numpy as np
import pandas as pd
import pytest

from idmix import constants as C
from idmix.curves import MonotoneCurve
from idmix.features import (ForecastVersionSeries, MissingFeatureError, OutageBook, OutageMessage, assemble_rows,
                            da_cutoff, forecast_update, manifest, outage_deltas, outage_level, session_statics,
                            sidc_dummy, ttd_encoding, update_volatility)
from idmix.marketgrid import SessionGrid, build_session_grid, delivery_start, simulation_start

DAY = dt.date(2021, 3, 3)
HOUR = 14
KEY = (DAY, HOUR)
DA_CUT = da_cutoff(DAY)
SIM_CUT = simulation_start(DAY, HOUR)
B = delivery_start(DAY, HOUR)


def series(times, values, tech="wind"):
    return ForecastVersionSeries(KEY, tech, tuple(times), tuple(float(v) for v in values))


def test_cutoffs():
    assert DA_CUT == dt.datetime(2021, 3, 2, 12)
    assert B - SIM_CUT == dt.timedelta(minutes=185)


def test_forecast_update_examples():
    before, between = DA_CUT - dt.timedelta(hours=1), DA_CUT + dt.timedelta(hours=3)
    assert forecast_update(series([before, between], [1000, 1200]), DA_CUT, SIM_CUT) == (200, 200, 0)
    assert forecast_update(series([before, between], [1000, 700]), DA_CUT, SIM_CUT) == (-300, 0, 300)
    assert forecast_update(series([before], [1000]), DA_CUT, SIM_CUT) == (0, 0, 0)


def test_versions_after_simulation_start_are_ignored():
    s = series([DA_CUT - dt.timedelta(hours=1), SIM_CUT, SIM_CUT + dt.timedelta(minutes=1)], [1000, 1100, 9999])
    assert forecast_update(s, DA_CUT, SIM_CUT)[0] == 100  # the cutoff itself is inclusive


def test_forecast_update_needs_day_ahead_version():
    with pytest.raises(MissingFeatureError):
        forecast_update(series([DA_CUT + dt.timedelta(hours=1)], [5]), DA_CUT, SIM_CUT)


def test_update_volatility_examples():
    times = [DA_CUT + dt.timedelta(hours=i) for i in range(3)]
    assert update_volatility(series(times, [100, 100, 100]), DA_CUT, SIM_CUT) == 0
    assert update_volatility(series(times, [0, 10, 0]), DA_CUT, SIM_CUT) == pytest.approx(10.0, abs=1e-12)
    assert update_volatility(series(times[:1], [5]), DA_CUT, SIM_CUT) == 0


def test_update_volatility_two_pass_oracle():
    rng = np.random.default_rng(2)
    times = [DA_CUT + dt.timedelta(minutes=15 * i) for i in range(50)]
    vals = np.abs(5000 + np.cumsum(rng.normal(0, 200, 50)))
    d = [b - a for a, b in zip(vals[:-1], vals[1:])]
    mean = sum(d) / len(d)
    oracle = (sum((x - mean) ** 2 for x in d) / len(d)) ** 0.5
    assert abs(update_volatility(series(times, vals), DA_CUT, SIM_CUT) - oracle) < 1e-9


def msg(pub, start, end, kind="planned", cap=500.0, eid=None, cancelled=False):
    return OutageMessage(pub, start, end, kind, cap, eid, cancelled)


def test_outage_level_examples():
    early = DA_CUT - dt.timedelta(days=1)
    assert outage_level([msg(early, B, B + dt.timedelta(hours=1))], DA_CUT, KEY) == 500
    assert outage_level([msg(early, B, B + dt.timedelta(minutes=30))], DA_CUT, KEY) == 250
    assert outage_level([msg(DA_CUT + dt.timedelta(seconds=1), B, B + dt.timedelta(hours=2))], DA_CUT, KEY) == 0


def test_outage_deltas_examples():
    intraday = DA_CUT + dt.timedelta(hours=2)
    early = DA_CUT - dt.timedelta(hours=2)
    m = [msg(intraday, B - dt.timedelta(hours=3), B + dt.timedelta(hours=3), cap=300)]
    assert outage_deltas(m, DA_CUT, SIM_CUT, KEY) == (300, 0)
    m = [msg(early, B, B + dt.timedelta(hours=1), "unplanned", 200, "e1"),
         msg(intraday, B, B + dt.timedelta(hours=1), "unplanned", 200, "e1", cancelled=True)]
    assert outage_deltas(m, DA_CUT, SIM_CUT, KEY) == (0, -200)


def brute_level(messages, as_of, kind):
    """Re-aggregate from scratch: latest visible version per event, minute by minute."""
    total = 0.0
    events = {}
    for i, m in enumerate(messages):
        if m.publication_time <= as_of:
            k = m.event_id or f"anon{i}"
            if k not in events or m.publication_time >= events[k].publication_time:
                events[k] = m
    for m in events.values():
        if m.cancelled or m.kind != kind:
            continue
        minutes = sum(1 for s in range(60) if m.start <= B + dt.timedelta(minutes=s) < m.end)
        total += m.capacity * minutes / 60.0
    return total


def test_outage_deltas_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(20):
        msgs = []
        for e in range(8):
            start = B + dt.timedelta(minutes=int(rng.integers(-300, 50)))
            end = start + dt.timedelta(minutes=int(rng.integers(5, 400)))
            kind = "planned" if rng.random() < 0.5 else "unplanned"
            pub = DA_CUT + dt.timedelta(minutes=int(rng.integers(-600, 1200)))
            msgs.append(msg(pub, start, end, kind, float(rng.integers(10, 900)), f"e{e}"))
            if rng.random() < 0.5:
                msgs.append(msg(pub + dt.timedelta(minutes=int(rng.integers(1, 600))), start, end, kind,
                                float(rng.integers(10, 900)), f"e{e}", bool(rng.random() < 0.3)))
        got = outage_deltas(msgs, DA_CUT, SIM_CUT, KEY)
        exp = tuple(brute_level(msgs, SIM_CUT, k) - brute_level(msgs, DA_CUT, k) for k in ("planned", "unplanned"))
        np.testing.assert_allclose(got, exp, atol=1e-9)


def test_outage_book_keeps_event_versions_together():
    first = msg(DA_CUT - dt.timedelta(hours=5), B, B + dt.timedelta(hours=1), eid="x")
    moved = msg(DA_CUT - dt.timedelta(hours=1), B + dt.timedelta(hours=5), B + dt.timedelta(hours=6), eid="x")
    book = OutageBook([first, moved])
    assert set(book.relevant(KEY)) == {first, moved}
    assert outage_level(book.relevant(KEY), DA_CUT, KEY) == 0


def test_ttd_and_sidc():
    assert ttd_encoding(31) == 1.0
    assert ttd_encoding(1) == pytest.approx(0.17961, abs=1e-5)
    d = ttd_encoding(5, mode="dummies")
    assert d[4] == 1 and d.sum() == 1
    assert sidc_dummy(dt.date(2019, 1, 1), 28) == 1
    assert sidc_dummy(dt.date(2017, 1, 1), 28) == 0
    assert sidc_dummy(dt.date(2019, 1, 1), 10) == 0


def make_statics(grid):
    t0 = DA_CUT - dt.timedelta(hours=2)
    times = [t0, DA_CUT, DA_CUT + dt.timedelta(hours=1), DA_CUT + dt.timedelta(hours=2)]
    fc = {tech: series(times, vals, tech)
          for tech, vals in (("wind", [4900, 5000, 5200, 5100]), ("solar", [0, 0, 0, 0]),
                             ("demand", [39000, 40000, 40100, 40200]))}
    sup = MonotoneCurve([0.0, 30000.0, 60000.0], [-500.0, 40.0, 3000.0], "supply")
    dem = MonotoneCurve([35000.0, 35000.0], [3000.0, -500.0], "demand")
    return session_statics(grid, fc, [], (sup, dem))


def grid_with_alpha(alpha_hist, alpha_win):
    T = C.T_STEPS
    return SessionGrid(DAY, HOUR, 40.0, 40.0, np.full(T, 40.0), np.zeros(T), np.asarray(alpha_win, bool),
                       np.full(len(alpha_hist), 40.0), np.zeros(len(alpha_hist)), np.asarray(alpha_hist, bool))


def test_abar_all_traded():
    g = grid_with_alpha([1] * 12, [1] * C.T_STEPS)
    X = assemble_rows(g, make_statics(g), "logistic")
    cols = manifest("logistic")
    abar = X[:, [cols.index(f"abar_{j}") for j in range(1, 13)]]
    assert np.all(abar == 1.0)


def test_abar_alternating():
    alt = [(i + 1) % 2 for i in range(12 + C.T_STEPS)]  # ..., 1, 0 with t=0 untraded
    g = grid_with_alpha(alt[:12], alt[12:])
    X = assemble_rows(g, make_statics(g), "logistic")
    cols = manifest("logistic")
    assert np.all(X[:, cols.index("abar_2")] == 0.5)


def test_rows_shape_and_manifest():
    rng = np.random.default_rng(1)
    ticks = []
    for m in rng.uniform(31, 700, 80):
        ticks.append({"exec_time": B - dt.timedelta(minutes=float(m)), "price": float(rng.uniform(30, 60)),
                      "volume": 1.0})
    g = build_session_grid(pd.DataFrame(ticks), 40.0, KEY)
    st = make_statics(g)
    for model in ("logistic", "gamlss"):
        X = assemble_rows(g, st, model)
        assert X.shape == (C.T_STEPS, len(manifest(model)))
    cols = manifest("gamlss")
    X = assemble_rows(g, st, "gamlss")
    d, a, p = g.lagged(12)
    t = 7
    assert X[t - 1, cols.index("dP_lag1")] == d[12 + t - 2]
    assert X[t - 1, cols.index("alpha_lag2")] == a[12 + t - 3]
    assert X[t - 1, cols.index("spread_DA")] == pytest.approx(abs(40.0 - p[12 + t - 2]))
    assert X[t - 1, cols.index("f_TTD")] == pytest.approx(1 / np.sqrt(C.T_STEPS - t + 1))


def test_statics_values():
    g = grid_with_alpha([1] * 12, [0] * C.T_STEPS)
    st = make_statics(g)
    v = st.values
    assert v["W_DA"] == 5000 and v["D_DA"] == 40000 and v["S_DA"] == 0
    assert v["dW_pos"] == 100 and v["dW_neg"] == 0
    assert v["sd_dW"] == pytest.approx(np.std([200.0, -100.0]))
    assert v["MON"] == 0 and v["SAT"] == 0 and v["SUN"] == 0  # a Wednesday
    # supply segment 0..30000 MWh spans -500..40 EUR; anchor 40 sits on the kink
    left, right = 540.0 / 30000.0, 2960.0 / 30000.0
    assert v["MO_1000"] == pytest.approx((40.0 + 1000 * right - (40.0 - 1000 * left)) / 2000.0)
