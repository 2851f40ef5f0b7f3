"""Exogenous regressors and design rows for the trade-occurrence and GAMLSS models.

The same :func:`design_block` builds rows for observed sessions (training) and
for simulated paths, so fitted models see identical column definitions in both
settings.
"""
from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from . import constants as C
from .curves import MonotoneCurve, merit_order_slope, transform_supply
from .marketgrid import SessionGrid, delivery_start, simulation_start

log = logging.getLogger(__name__)

TECHNOLOGIES = ("wind", "solar", "demand")
OUTAGE_KINDS = ("planned", "unplanned")
FORECAST_COLUMNS = ["delivery_day", "delivery_hour", "technology", "issue_time", "value_mw"]
OUTAGE_COLUMNS = ["publication_time", "start", "end", "kind", "capacity_mw"]


class MissingFeatureError(ValueError):
    """A required input is not available before its information cutoff."""


class AssemblyError(ValueError):
    """A design row contains a non-finite value."""


def da_cutoff(day: dt.date) -> dt.datetime:
    return dt.datetime.combine(day - dt.timedelta(days=1), dt.time(C.DA_GATE_HOUR))


# ---------------------------------------------------------------------------
# Forecast versions


@dataclass(frozen=True)
class ForecastVersionSeries:
    delivery_key: tuple[dt.date, int]
    technology: str
    issue_times: tuple[dt.datetime, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if self.technology not in TECHNOLOGIES:
            raise ValueError(f"unknown technology {self.technology!r}")
        if len(self.issue_times) != len(self.values):
            raise ValueError("issue_times and values differ in length")
        if any(b <= a for a, b in zip(self.issue_times, self.issue_times[1:])):
            raise ValueError("issue times must be strictly increasing")
        if any(v < 0 for v in self.values):
            raise ValueError("forecast values must be nonnegative")

    def latest(self, cutoff: dt.datetime) -> float | None:
        """Most recent value issued at or before ``cutoff``."""
        val = None
        for ts, v in zip(self.issue_times, self.values):
            if ts > cutoff:
                break
            val = v
        return val

    def between(self, start: dt.datetime, end: dt.datetime) -> list[float]:
        return [v for ts, v in zip(self.issue_times, self.values) if start <= ts <= end]


def forecast_update(series: ForecastVersionSeries, da_cut: dt.datetime,
                    sim_cut: dt.datetime) -> tuple[float, float, float]:
    """Day-ahead to intraday forecast change and its sign split ``(d, d+, d-)``."""
    da = series.latest(da_cut)
    if da is None:
        raise MissingFeatureError(f"no {series.technology} forecast before day-ahead cutoff")
    idv = series.latest(sim_cut)
    delta = idv - da
    return delta, max(delta, 0.0), abs(min(delta, 0.0))


def update_volatility(series: ForecastVersionSeries, da_cut: dt.datetime, sim_cut: dt.datetime) -> float:
    """Population standard deviation of consecutive version changes issued
    between the two cutoffs; 0 when fewer than two versions exist."""
    vals = np.asarray(series.between(da_cut, sim_cut), dtype=float)
    if len(vals) < 2:
        log.warning("fewer than two %s versions in update window for %s; volatility set to 0",
                    series.technology, series.delivery_key)
        return 0.0
    return float(np.std(np.diff(vals)))


# ---------------------------------------------------------------------------
# Outages


@dataclass(frozen=True)
class OutageMessage:
    """Unavailability notice.  Messages sharing an ``event_id`` are versions of
    one event; the latest published version supersedes earlier ones and a
    ``cancelled`` version withdraws the event."""

    publication_time: dt.datetime
    start: dt.datetime
    end: dt.datetime
    kind: str
    capacity: float
    event_id: str | None = None
    cancelled: bool = False

    def __post_init__(self):
        if self.kind not in OUTAGE_KINDS:
            raise ValueError(f"unknown outage kind {self.kind!r}")
        if not self.capacity > 0:
            raise ValueError("outage capacity must be positive")
        if not self.start < self.end:
            raise ValueError("outage start must precede its end")


def _overlap_fraction(start: dt.datetime, end: dt.datetime, b: dt.datetime) -> float:
    lo = max(start, b)
    hi = min(end, b + dt.timedelta(hours=1))
    return max((hi - lo).total_seconds(), 0.0) / 3600.0


def _effective(messages: Iterable[OutageMessage], as_of: dt.datetime) -> list[OutageMessage]:
    latest: dict[object, OutageMessage] = {}
    for i, m in enumerate(messages):
        if m.publication_time > as_of:
            continue
        key = m.event_id if m.event_id is not None else ("__anon__", i)
        prev = latest.get(key)
        if prev is None or m.publication_time >= prev.publication_time:
            latest[key] = m
    return [m for m in latest.values() if not m.cancelled]


def outage_level(messages: Iterable[OutageMessage], as_of: dt.datetime,
                 delivery_key: tuple[dt.date, int], kind: str | None = None) -> float:
    """Unavailable capacity (MW) for the delivery hour known at ``as_of``;
    partial-hour outages count with their share of the hour."""
    b = delivery_start(*delivery_key)
    total = 0.0
    for m in _effective(messages, as_of):
        if kind is None or m.kind == kind:
            total += m.capacity * _overlap_fraction(m.start, m.end, b)
    return total


def outage_deltas(messages: Sequence[OutageMessage], da_cut: dt.datetime, sim_cut: dt.datetime,
                  delivery_key: tuple[dt.date, int]) -> tuple[float, float]:
    """Intraday change of planned and unplanned unavailable capacity."""
    return tuple(outage_level(messages, sim_cut, delivery_key, k) - outage_level(messages, da_cut, delivery_key, k)
                 for k in OUTAGE_KINDS)


class OutageBook:
    """Outage messages indexed by the delivery hours they touch."""

    def __init__(self, messages: Sequence[OutageMessage]):
        self.messages = list(messages)
        self._by_hour: dict[dt.datetime, list[OutageMessage]] = {}
        for m in self.messages:
            h = m.start.replace(minute=0, second=0, microsecond=0)
            while h < m.end:
                self._by_hour.setdefault(h, []).append(m)
                h += dt.timedelta(hours=1)
        # Versions of an event may move its interval; keep all versions together.
        by_event: dict[str, list[OutageMessage]] = {}
        for m in self.messages:
            if m.event_id is not None:
                by_event.setdefault(m.event_id, []).append(m)
        for hour, ms in self._by_hour.items():
            ids = {m.event_id for m in ms if m.event_id is not None}
            extra = [v for eid in sorted(ids) for v in by_event[eid] if v not in ms]
            ms.extend(extra)

    def relevant(self, delivery_key: tuple[dt.date, int]) -> list[OutageMessage]:
        return self._by_hour.get(delivery_start(*delivery_key), [])


# ---------------------------------------------------------------------------
# Time encodings


def ttd_encoding(t: int, T: int = C.T_STEPS, mode: str = "inverse_sqrt"):
    if not 1 <= t <= T:
        raise ValueError(f"step {t} outside 1..{T}")
    if mode == "inverse_sqrt":
        return 1.0 / np.sqrt(T - t + 1)
    if mode == "dummies":
        out = np.zeros(T)
        out[t - 1] = 1.0
        return out
    raise ValueError(f"unknown mode {mode!r}")


def sidc_dummy(day: dt.date, t: int) -> int:
    return int(day >= C.SIDC_GO_LIVE and C.SIDC_FIRST_STEP <= t <= C.T_STEPS)


def weekday_dummies(day: dt.date) -> tuple[int, int, int]:
    wd = day.weekday()
    return int(wd == 0), int(wd == 5), int(wd == 6)


# ---------------------------------------------------------------------------
# Per-session statics and design rows

STATIC_NAMES = ("MON", "SAT", "SUN", "D_DA", "W_DA", "S_DA", "O_DA", "dW_pos", "dW_neg",
                "dS_pos", "dS_neg", "sd_dW", "sd_dS", "dO_planned", "dO_unplanned")


def mo_names(q_grid: Sequence[float]) -> list[str]:
    return [f"MO_{q:g}" for q in q_grid]


def manifest(model: str, q_grid: Sequence[float] = C.DEFAULT_Q_GRID, T: int = C.T_STEPS) -> list[str]:
    """Ordered column names of the design for ``model`` ("logistic" or "gamlss")."""
    cols = [f"dP_lag{j}" for j in (1, 2, 3)]
    cols += [f"absdP_lag{j}" for j in range(1, 7)] + ["absdP_sum7_12"]
    cols += list(STATIC_NAMES) + ["spread_DA"] + mo_names(q_grid)
    if model == "logistic":
        cols += [f"TTD_{t}" for t in range(1, T + 1)] + [f"abar_{j}" for j in range(1, C.LAG_DEPTH + 1)]
    elif model == "gamlss":
        cols += ["alpha_lag1", "alpha_lag2", "f_TTD", "SIDC"]
    else:
        raise ValueError(f"unknown model {model!r}")
    return cols


@dataclass(frozen=True)
class SessionStatics:
    """Features of one delivery period fixed at simulation start."""

    delivery_key: tuple[dt.date, int]
    da_price: float
    anchor_price: float
    values: dict[str, float]
    q_grid: tuple[float, ...] = C.DEFAULT_Q_GRID
    flags: dict[str, bool] = field(default_factory=dict)

    def vector(self) -> np.ndarray:
        return np.array([self.values[n] for n in list(STATIC_NAMES) + mo_names(self.q_grid)])


def session_statics(grid: SessionGrid, forecasts: dict[str, ForecastVersionSeries],
                    outages: Sequence[OutageMessage],
                    curves: tuple[MonotoneCurve, MonotoneCurve],
                    q_grid: Sequence[float] = C.DEFAULT_Q_GRID) -> SessionStatics:
    """Collect every per-session regressor using only information available at
    simulation start."""
    day, hour = grid.key
    da_cut, sim_cut = da_cutoff(day), simulation_start(day, hour)
    vals: dict[str, float] = {}
    vals["MON"], vals["SAT"], vals["SUN"] = weekday_dummies(day)
    for tech, name in (("demand", "D_DA"), ("wind", "W_DA"), ("solar", "S_DA")):
        series = forecasts.get(tech)
        v = None if series is None else series.latest(da_cut)
        if v is None:
            raise MissingFeatureError(f"no {tech} forecast before day-ahead cutoff for {grid.key}")
        vals[name] = v
    for tech, tag in (("wind", "W"), ("solar", "S")):
        _, pos, neg = forecast_update(forecasts[tech], da_cut, sim_cut)
        vals[f"d{tag}_pos"], vals[f"d{tag}_neg"] = pos, neg
        vals[f"sd_d{tag}"] = update_volatility(forecasts[tech], da_cut, sim_cut)
    vals["O_DA"] = outage_level(outages, da_cut, grid.key)
    vals["dO_planned"], vals["dO_unplanned"] = outage_deltas(outages, da_cut, sim_cut, grid.key)

    ts = transform_supply(*curves)
    flags = {"anchor_clamped": False, "volume_clamped": False}
    for q, name in zip(q_grid, mo_names(q_grid)):
        mo = merit_order_slope(ts, grid.anchor_price, q)
        vals[name] = mo.value
        flags["anchor_clamped"] |= mo.anchor_clamped
        flags["volume_clamped"] |= mo.volume_clamped
    return SessionStatics(grid.key, grid.da_price, grid.anchor_price, vals, tuple(q_grid), flags)


def design_block(model: str, statics: SessionStatics, t: int, dp_lags: np.ndarray,
                 alpha_lags: np.ndarray, p_prev: np.ndarray, T: int = C.T_STEPS) -> np.ndarray:
    """Design rows at step ``t`` for ``n`` histories.

    ``dp_lags[:, j-1]`` is the price change at ``t-j`` and ``alpha_lags[:, j-1]``
    the trade indicator at ``t-j`` (``j = 1..12``); ``p_prev`` is the price at
    ``t-1``.  Column order follows :func:`manifest`.
    """
    dp_lags = np.atleast_2d(np.asarray(dp_lags, dtype=float))
    alpha_lags = np.atleast_2d(np.asarray(alpha_lags, dtype=float))
    n = dp_lags.shape[0]
    absd = np.abs(dp_lags)
    parts = [dp_lags[:, :3], absd[:, :6], absd[:, 6:12].sum(axis=1, keepdims=True),
             np.broadcast_to(statics.vector()[: len(STATIC_NAMES)], (n, len(STATIC_NAMES))),
             np.abs(statics.da_price - np.asarray(p_prev, dtype=float)).reshape(n, 1),
             np.broadcast_to(statics.vector()[len(STATIC_NAMES):], (n, len(statics.q_grid)))]
    if model == "logistic":
        parts.append(np.broadcast_to(ttd_encoding(t, T, "dummies"), (n, T)))
        parts.append(np.cumsum(alpha_lags, axis=1) / np.arange(1, C.LAG_DEPTH + 1))
    elif model == "gamlss":
        parts.append(alpha_lags[:, :2])
        extra = np.array([ttd_encoding(t, T), sidc_dummy(statics.delivery_key[0], t)], dtype=float)
        parts.append(np.broadcast_to(extra, (n, 2)))
    else:
        raise ValueError(f"unknown model {model!r}")
    return np.hstack(parts)


def assemble_rows(grid: SessionGrid, statics: SessionStatics, model: str) -> np.ndarray:
    """One design row per window step ``t = 1..T`` of an observed session.

    Lags reaching before ``t = 1`` use the pre-window grid when it exists and
    neutral values (0 for price changes, 1 for trade indicators) otherwise.
    """
    depth = C.LAG_DEPTH
    diffs, alpha, prices = grid.lagged(depth)
    rows = []
    for t in range(1, grid.T + 1):
        cur = depth - 1 + t  # index of step t in the lagged arrays
        lag_idx = cur - np.arange(1, depth + 1)
        rows.append(design_block(model, statics, t, diffs[lag_idx][None, :],
                                 alpha[lag_idx][None, :].astype(float), prices[cur - 1:cur], grid.T))
    X = np.vstack(rows)
    bad = ~np.isfinite(X)
    if bad.any():
        col = manifest(model, statics.q_grid, grid.T)[int(np.argwhere(bad)[0, 1])]
        raise AssemblyError(f"non-finite regressor {col!r} in session {grid.key}")
    return X


# ---------------------------------------------------------------------------
# CSV surface


def read_forecasts(path) -> dict[tuple[dt.date, int], dict[str, ForecastVersionSeries]]:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = set(FORECAST_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"forecast CSV lacks columns {sorted(missing)}")
    df["delivery_day"] = pd.to_datetime(df["delivery_day"]).dt.date
    df["issue_time"] = pd.to_datetime(df["issue_time"], utc=True).dt.tz_localize(None)
    df = df.sort_values(["delivery_day", "delivery_hour", "technology", "issue_time"], kind="stable")
    out: dict = {}
    for (day, hour, tech), g in df.groupby(["delivery_day", "delivery_hour", "technology"], sort=True):
        times = tuple(t.to_pydatetime() for t in g["issue_time"])
        out.setdefault((day, int(hour)), {})[tech] = ForecastVersionSeries(
            (day, int(hour)), tech, times, tuple(g["value_mw"].astype(float)))
    return out


def read_outages(path) -> list[OutageMessage]:
    df = pd.read_csv(path, keep_default_na=False, float_precision="round_trip")
    missing = set(OUTAGE_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"outage CSV lacks columns {sorted(missing)}")
    for col in ("publication_time", "start", "end"):
        df[col] = pd.to_datetime(df[col], utc=True).dt.tz_localize(None)
    out = []
    for row in df.itertuples(index=False):
        eid = getattr(row, "event_id", "") or None
        out.append(OutageMessage(row.publication_time.to_pydatetime(), row.start.to_pydatetime(),
                                 row.end.to_pydatetime(), row.kind, float(row.capacity_mw),
                                 None if eid is None else str(eid),
                                 bool(int(getattr(row, "cancelled", 0) or 0))))
    return out


def _iso(ts: pd.Series) -> pd.Series:
    return pd.to_datetime(ts).dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def forecasts_to_frame(forecasts: dict[tuple[dt.date, int], dict[str, ForecastVersionSeries]]) -> pd.DataFrame:
    rows = []
    for (day, hour), techs in sorted(forecasts.items()):
        for tech in sorted(techs):
            s = techs[tech]
            rows.extend((day.isoformat(), hour, tech, ts, v) for ts, v in zip(s.issue_times, s.values))
    df = pd.DataFrame(rows, columns=FORECAST_COLUMNS)
    df["issue_time"] = _iso(df["issue_time"])
    return df


def outages_to_frame(messages: Sequence[OutageMessage]) -> pd.DataFrame:
    df = pd.DataFrame([(m.publication_time, m.start, m.end, m.kind, m.capacity, m.event_id or "", int(m.cancelled))
                       for m in messages], columns=OUTAGE_COLUMNS + ["event_id", "cancelled"])
    for col in ("publication_time", "start", "end"):
        df[col] = _iso(df[col])
    return df
