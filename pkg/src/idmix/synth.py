"""Synthetic market data drawn from a known trade-occurrence / S_U mixture.

Per delivery period the generator builds auction curves and clears them for the
day-ahead price, lets the intraday price wander before the simulation window,
and then draws the window's trade indicators and price changes from the
mixture.  The price-change scale follows the merit-order slope computed exactly
as the feature pipeline computes it, so the mixture model is well specified.
Bucket prices are realised as pairs of trades symmetric around the target
VWAP; extra trades inside the last 30 minutes must be ignored downstream.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

from . import constants as C
from . import distributions as D
from .curves import MonotoneCurve, clearing_price, curves_to_frame, merit_order_slope, transform_supply
from .features import (ForecastVersionSeries, OutageMessage, da_cutoff, forecasts_to_frame, outages_to_frame,
                       ttd_encoding)
from .marketgrid import TRADE_COLUMNS, delivery_start, session_open, write_trades
from .streams import stream

log = logging.getLogger(__name__)

_US_PER_MIN = 60_000_000


@dataclass
class SynthSpec:
    seed: int = 0
    start: str = "2021-01-04"
    n_days: int = 120
    hours: list[int] = field(default_factory=lambda: [6, 12, 18, 21])
    # trade probability: expit(pi_a + pi_b * (t - 16) / 15)
    pi_a: float = 0.0
    pi_b: float = 1.5
    pre_window_pi: float = 0.3
    pre_window_sd: float = 1.0
    # scale: logident^-1(sigma_b0 + sigma_mo * MO_1000 + sigma_ttd * f_TTD)
    sigma_b0: float = 0.2
    sigma_mo: float = 250.0
    sigma_ttd: float = 1.5
    nu: float = 0.2
    tau: float = 1.5
    steepness: tuple[float, float] = (0.0005, 0.006)
    wind_noise: float = 300.0
    solar_noise: float = 150.0
    demand_noise: float = 200.0
    outages_per_day: float = 3.0
    control_zone_trades: float = 3.0

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "steepness" in d:
            d["steepness"] = tuple(d["steepness"])
        return cls(**d)

    def days(self) -> list[dt.date]:
        first = dt.date.fromisoformat(self.start)
        return [first + dt.timedelta(days=i) for i in range(self.n_days)]


def _curves(rng: np.random.Generator, spec: SynthSpec, hour: int) -> tuple[MonotoneCurve, MonotoneCurve]:
    s = rng.uniform(*spec.steepness)
    seg = 15000.0
    sup_v = np.array([0.0, 10000.0, 25000.0, 40000.0, 55000.0, 70000.0])
    p2 = 25.0 + rng.normal(0, 3)
    sup_p = np.array([-500.0, -20.0, p2, p2 + s * seg, p2 + 4 * s * seg, 3000.0])
    demand = 40000.0 + 6000.0 * np.sin(np.pi * (hour - 6) / 12) + rng.normal(0, 1500)
    demand = float(np.clip(demand, 27000.0, 53000.0))
    dem_v = np.round(np.array([demand - 800.0, demand - 300.0, demand]), 1)
    dem_p = np.array([3000.0, 150.0, -500.0])
    return MonotoneCurve(sup_v, np.round(sup_p, 2), "supply"), MonotoneCurve(dem_v, dem_p, "demand")


def _bucket_times(rng, b: dt.datetime, k: np.ndarray) -> list[dt.datetime]:
    """Random execution times inside buckets ``k`` (minutes before delivery in
    ``(30 + 5(k-1), 30 + 5k]``)."""
    lo = (C.WINDOW_END_MINUTES + C.BUCKET_MINUTES * (k - 1)) * _US_PER_MIN
    width = C.BUCKET_MINUTES * _US_PER_MIN
    before = lo + 1 + rng.integers(0, width, size=len(k))
    return [b - dt.timedelta(microseconds=int(m)) for m in before]


def _pair_trades(rng, day, hour, b, k_list, vwaps) -> list[tuple]:
    rows = []
    for k, v in zip(k_list, vwaps):
        n_pairs = 1 + rng.poisson(1.0)
        ks = np.full(2 * n_pairs, k)
        times = _bucket_times(rng, b, ks)
        for i in range(n_pairs):
            q = round(0.1 * (1 + rng.integers(0, 100)), 1)
            h = 0.01 * (1 + rng.integers(0, 20))
            rows.append((day, hour, times[2 * i], round(v + h, 2), q))
            rows.append((day, hour, times[2 * i + 1], round(v - h, 2), q))
    return rows


def _forecast_series(rng, spec: SynthSpec, day: dt.date, hour: int, d_inel: float) -> dict:
    b = delivery_start(day, hour)
    first = dt.datetime.combine(day - dt.timedelta(days=2), dt.time(9))
    issues = []
    ts = first
    while ts <= b - dt.timedelta(hours=1):
        issues.append(ts)
        ts += dt.timedelta(hours=1)
    solar_shape = max(0.0, np.sin(np.pi * (hour - 6) / 12)) if 6 <= hour <= 18 else 0.0
    levels = {"wind": rng.uniform(3000, 30000), "solar": 25000.0 * solar_shape * rng.uniform(0.3, 1.0),
              "demand": d_inel + rng.normal(0, 500)}
    noise = {"wind": spec.wind_noise, "solar": spec.solar_noise * (solar_shape > 0), "demand": spec.demand_noise}
    out = {}
    for tech in ("wind", "solar", "demand"):
        steps = rng.normal(0, noise[tech], size=len(issues))
        vals = np.maximum(levels[tech] + np.cumsum(steps), 0.0)
        out[tech] = ForecastVersionSeries((day, hour), tech, tuple(issues), tuple(np.round(vals, 1)))
    return out


def _outages(rng, spec: SynthSpec, day: dt.date) -> list[OutageMessage]:
    msgs = []
    for i in range(rng.poisson(spec.outages_per_day)):
        start = dt.datetime.combine(day, dt.time(0)) + dt.timedelta(minutes=int(rng.integers(0, 24 * 60)))
        end = start + dt.timedelta(minutes=int(rng.integers(30, 12 * 60)))
        kind = "planned" if rng.random() < 0.5 else "unplanned"
        lead = rng.uniform(-6, 72) if kind == "planned" else rng.uniform(-6, 6)
        pub = start - dt.timedelta(minutes=int(lead * 60))
        cap = float(np.round(rng.uniform(100, 1500), 0))
        eid = f"{day.isoformat()}-{i}"
        msgs.append(OutageMessage(pub, start, end, kind, cap, eid))
        if rng.random() < 0.3:
            later = pub + dt.timedelta(minutes=int(rng.integers(10, 24 * 60)))
            cancel = rng.random() < 0.3
            msgs.append(OutageMessage(later, start, end, kind, float(np.round(cap * rng.uniform(0.5, 1.5), 0)),
                                      eid, cancel))
    return msgs


def sigma_eta(spec: SynthSpec, mo_1000: float, t: np.ndarray) -> np.ndarray:
    f = np.array([ttd_encoding(int(s)) for s in np.atleast_1d(t)])
    return spec.sigma_b0 + spec.sigma_mo * mo_1000 + spec.sigma_ttd * f


def generate(spec: SynthSpec) -> dict:
    """Return data frames ``trades, forecasts, outages, curves, da_prices`` and
    the per-session truth (MO slope and window scale)."""
    T = C.T_STEPS
    trades, truth = [], []
    forecasts, curves, da = {}, {}, []
    outages: list[OutageMessage] = []
    for day in spec.days():
        outages.extend(_outages(stream(spec.seed, "synth:outages", (day, 0)), spec, day))
        for hour in spec.hours:
            rng = stream(spec.seed, "synth", (day, hour))
            key = (day, hour)
            sup, dem = _curves(rng, spec, hour)
            ts = transform_supply(sup, dem)
            da_price = round(clearing_price(ts), 2)
            curves[key] = (sup, dem)
            da.append((day.isoformat(), hour, da_price))
            forecasts[key] = _forecast_series(rng, spec, day, hour, ts.dem_inelastic)
            b = delivery_start(day, hour)

            # pre-window random walk from the day-ahead price
            open_minutes = (b - session_open(day)).total_seconds() / 60.0
            k_open = int(np.ceil((open_minutes - C.WINDOW_END_MINUTES) / C.BUCKET_MINUTES))
            ks = np.arange(k_open, T, -1)  # k_open .. T+1, the last one is the anchor bucket
            traded = rng.random(len(ks)) < spec.pre_window_pi
            steps = np.where(traded, rng.normal(0, spec.pre_window_sd, len(ks)), 0.0)
            pre = np.round(da_price + np.cumsum(steps), 2)
            anchor = float(pre[traded][-1]) if traded.any() else da_price
            trades += _pair_trades(rng, day, hour, b, ks[traded], pre[traded])

            # simulation window from the mixture
            mo = merit_order_slope(ts, anchor, 1000.0).value
            t = np.arange(1, T + 1)
            pi = expit(spec.pi_a + spec.pi_b * (t - 16) / 15.0)
            sig = D.link_inverse("logident", sigma_eta(spec, mo, t))
            alpha = rng.random(T) < pi
            theta = D.Theta(0.0, sig, spec.nu, spec.tau)
            dp = D.transform_draws("jsu", theta, D.base_draws("jsu", rng, T))
            path = np.round(anchor + np.cumsum(np.where(alpha, dp, 0.0)), 2)
            trades += _pair_trades(rng, day, hour, b, (T + 1 - t)[alpha], path[alpha])

            # control-zone trades that aggregation must drop
            n_cz = rng.poisson(spec.control_zone_trades)
            cz_times = [b - dt.timedelta(microseconds=int(m))
                        for m in 1 + rng.integers(0, C.WINDOW_END_MINUTES * _US_PER_MIN, n_cz)]
            for tm in cz_times:
                trades.append((day, hour, tm, round(float(path[-1] + rng.normal(0, 20)), 2),
                               round(0.1 * (1 + rng.integers(0, 100)), 1)))
            truth.append({"delivery_day": day.isoformat(), "delivery_hour": hour, "MO_1000": mo,
                          "anchor": anchor, "da_price": da_price, "n_window_trades": int(alpha.sum())})

    tr = pd.DataFrame(trades, columns=TRADE_COLUMNS)
    tr = tr.sort_values(["delivery_day", "delivery_hour", "exec_time"], kind="stable").reset_index(drop=True)
    return {
        "trades": tr,
        "forecasts": forecasts_to_frame(forecasts),
        "outages": outages_to_frame(outages),
        "curves": curves_to_frame(curves),
        "da_prices": pd.DataFrame(da, columns=["delivery_day", "delivery_hour", "price"]),
        "truth": pd.DataFrame(truth),
    }


DATA_FILES = ("trades.csv", "forecasts.csv", "outages.csv", "curves.csv", "da_prices.csv")


def write_dataset(data: dict, out_dir, spec: SynthSpec | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    write_trades(data["trades"], out / "trades.csv")
    paths.append(out / "trades.csv")
    for name in ("forecasts", "outages", "curves", "da_prices", "truth"):
        p = out / f"{name}.csv"
        data[name].to_csv(p, index=False, float_format="%.17g")
        paths.append(p)
    if spec is not None:
        p = out / "synth_spec.json"
        p.write_text(json.dumps(asdict(spec), indent=1, sort_keys=True))
        paths.append(p)
    return paths


def synth_generate(spec: SynthSpec, out_dir) -> list[Path]:
    return write_dataset(generate(spec), out_dir, spec)
