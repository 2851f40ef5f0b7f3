"""Aggregation of intraday trades onto the delivery-relative 5-minute grid."""
from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from . import constants as C

log = logging.getLogger(__name__)

TRADE_COLUMNS = ["delivery_day", "delivery_hour", "exec_time", "price", "volume"]
GRID_COLUMNS = ["d", "s", "t", "P", "dP", "alpha"]

_US_PER_MIN = 60_000_000


class MalformedInputError(ValueError):
    """Raised for trade data that cannot be aggregated."""


def delivery_start(day: dt.date, hour: int) -> dt.datetime:
    return dt.datetime.combine(day, dt.time(hour))


def session_open(day: dt.date) -> dt.datetime:
    return dt.datetime.combine(day - dt.timedelta(days=1), dt.time(C.SESSION_OPEN_HOUR))


def simulation_start(day: dt.date, hour: int) -> dt.datetime:
    return delivery_start(day, hour) - dt.timedelta(minutes=C.WINDOW_START_MINUTES)


@dataclass(frozen=True)
class TradeTick:
    delivery_day: dt.date
    delivery_hour: int
    exec_time: dt.datetime
    price: float
    volume: float

    def __post_init__(self):
        if not 0 <= self.delivery_hour <= 23:
            raise MalformedInputError(f"delivery hour {self.delivery_hour} out of range")
        if not self.volume > 0:
            raise MalformedInputError(f"trade volume must be positive, got {self.volume}")
        if not C.ID_PRICE_MIN <= self.price <= C.ID_PRICE_MAX:
            raise MalformedInputError(f"trade price {self.price} outside intraday limits")
        if self.exec_time >= delivery_start(self.delivery_day, self.delivery_hour):
            raise MalformedInputError("trade executed at or after delivery start")
        if abs(round(self.volume / C.VOLUME_TICK) * C.VOLUME_TICK - self.volume) > 1e-9:
            log.warning("volume %s is not a multiple of the %s MW tick", self.volume, C.VOLUME_TICK)

    @property
    def key(self) -> tuple[dt.date, int]:
        return self.delivery_day, self.delivery_hour

    def minutes_before_delivery(self) -> float:
        delta = delivery_start(self.delivery_day, self.delivery_hour) - self.exec_time
        return delta.total_seconds() / 60.0


@dataclass(frozen=True)
class Bucket:
    """Half-open interval ``[start, end)`` in wall-clock time."""

    start: dt.datetime
    end: dt.datetime

    def contains(self, ts: dt.datetime) -> bool:
        return self.start <= ts < self.end


def window_bucket(day: dt.date, hour: int, t: int) -> Bucket:
    """Bucket of simulation step ``t`` (1-based) for delivery period ``(day, hour)``."""
    if not 1 <= t <= C.T_STEPS:
        raise ValueError(f"step {t} outside 1..{C.T_STEPS}")
    end_offset = (C.T_STEPS - t) * C.BUCKET_MINUTES + C.WINDOW_END_MINUTES
    b = delivery_start(day, hour)
    return Bucket(b - dt.timedelta(minutes=end_offset + C.BUCKET_MINUTES),
                  b - dt.timedelta(minutes=end_offset))


def bucket_vwap(trades: Iterable[TradeTick], bucket: Bucket) -> float | None:
    """Volume-weighted average price of the trades inside ``bucket``.

    Returns ``None`` for an empty bucket.
    """
    inside = [tr for tr in trades if bucket.contains(tr.exec_time)]
    if not inside:
        return None
    vol = sum(tr.volume for tr in inside)
    if vol == 0:
        raise MalformedInputError("non-empty bucket with zero total volume")
    return sum(tr.volume * tr.price for tr in inside) / vol


@dataclass(frozen=True)
class SessionGrid:
    """Filled 5-minute price grid of one delivery period.

    ``prices``, ``diffs`` and ``alpha`` cover the simulation window
    ``t = 1..T``.  The ``history_*`` arrays hold the same quantities for the
    pre-window buckets from session open up to ``t = 0`` (time ordered, the last
    entry is ``t = 0``); ``anchor_price`` equals ``history_prices[-1]``.
    """

    delivery_day: dt.date
    delivery_hour: int
    da_price: float
    anchor_price: float
    prices: np.ndarray
    diffs: np.ndarray
    alpha: np.ndarray
    history_prices: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history_diffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history_alpha: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    n_trades: int = 0

    @property
    def key(self) -> tuple[dt.date, int]:
        return self.delivery_day, self.delivery_hour

    @property
    def T(self) -> int:
        return len(self.prices)

    def lagged(self, depth: int = C.LAG_DEPTH) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(diffs, alpha, prices)`` over history + window, i.e. indices
        ``-depth+1 .. T`` relative to ``t = 0``.  Missing history is padded with
        neutral values (0 for price changes, 1 for trade indicators)."""
        hd = self.history_diffs[-depth:]
        ha = self.history_alpha[-depth:]
        hp = self.history_prices[-depth:]
        pad = depth - len(hd)
        hd = np.concatenate([np.zeros(pad), hd])
        ha = np.concatenate([np.ones(pad, dtype=bool), ha])
        hp = np.concatenate([np.full(pad, self.anchor_price), hp])
        return (np.concatenate([hd, self.diffs]),
                np.concatenate([ha, self.alpha]),
                np.concatenate([hp, self.prices]))


def _bucket_index(minutes_us: np.ndarray) -> np.ndarray:
    """Bucket counter ``k`` (1 = last window bucket) from microseconds before delivery.

    A trade ``m`` minutes before delivery falls in bucket ``k`` iff
    ``30 + 5(k-1) < m <= 30 + 5k``.
    """
    width = C.BUCKET_MINUTES * _US_PER_MIN
    shifted = minutes_us - C.WINDOW_END_MINUTES * _US_PER_MIN
    return -((-shifted) // width)


def _as_arrays(trades: Sequence[TradeTick] | pd.DataFrame, day: dt.date, hour: int):
    b = pd.Timestamp(delivery_start(day, hour))
    if isinstance(trades, pd.DataFrame):
        times = pd.to_datetime(trades["exec_time"])
        price = trades["price"].to_numpy(dtype=float)
        vol = trades["volume"].to_numpy(dtype=float)
    else:
        times = pd.to_datetime(pd.Series([tr.exec_time for tr in trades], dtype="datetime64[ns]"))
        price = np.array([tr.price for tr in trades], dtype=float)
        vol = np.array([tr.volume for tr in trades], dtype=float)
    before_us = ((b - times).to_numpy().astype("timedelta64[us]").astype(np.int64))
    return before_us, price, vol


def build_session_grid(trades: Sequence[TradeTick] | pd.DataFrame, da_price: float,
                       delivery_key: tuple[dt.date, int]) -> SessionGrid:
    """Aggregate all trades of one delivery period onto the 5-minute grid.

    Empty buckets carry the previous value forward; before the first trade of
    the session the day-ahead price is used.  Trades in the last 30 minutes
    (control-zone trading) are ignored.
    """
    day, hour = delivery_key
    before_us, price, vol = _as_arrays(trades, day, hour)
    if np.any(vol <= 0):
        raise MalformedInputError("trade volumes must be positive")

    open_minutes = (delivery_start(day, hour) - session_open(day)).total_seconds() / 60.0
    k_open = math.ceil((open_minutes - C.WINDOW_END_MINUTES) / C.BUCKET_MINUTES)
    k = _bucket_index(before_us)
    keep = (k >= 1) & (k <= k_open)
    if np.any(k > k_open):
        log.warning("%d trades before session open ignored for %s", int(np.sum(k > k_open)), delivery_key)
    k, price, vol = k[keep], price[keep], vol[keep]

    # Position 0 is the first bucket after session open; the last is k = 1.
    n_buckets = k_open
    pos = n_buckets - k
    vol_sum = np.bincount(pos, weights=vol, minlength=n_buckets)
    pv_sum = np.bincount(pos, weights=vol * price, minlength=n_buckets)
    traded = np.bincount(pos, minlength=n_buckets) > 0
    if np.any(traded & (vol_sum == 0)):
        raise MalformedInputError("non-empty bucket with zero total volume")

    filled = np.empty(n_buckets)
    last = float(da_price)
    for i in range(n_buckets):
        if traded[i]:
            last = pv_sum[i] / vol_sum[i]
        filled[i] = last
    diffs = np.diff(filled, prepend=float(da_price))
    diffs[~traded] = 0.0

    T = C.T_STEPS
    return SessionGrid(
        delivery_day=day,
        delivery_hour=hour,
        da_price=float(da_price),
        anchor_price=float(filled[-T - 1]) if n_buckets > T else float(da_price),
        prices=filled[-T:].copy(),
        diffs=diffs[-T:].copy(),
        alpha=traded[-T:].copy(),
        history_prices=filled[:-T].copy(),
        history_diffs=diffs[:-T].copy(),
        history_alpha=traded[:-T].copy(),
        n_trades=int(np.sum((k >= 1) & (k <= T))),
    )


# ---------------------------------------------------------------------------
# CSV surface


def read_trades(path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = set(TRADE_COLUMNS) - set(df.columns)
    if missing:
        raise MalformedInputError(f"trade CSV lacks columns {sorted(missing)}")
    df["delivery_day"] = pd.to_datetime(df["delivery_day"]).dt.date
    df["exec_time"] = pd.to_datetime(df["exec_time"], utc=True).dt.tz_localize(None)
    if (df["volume"] <= 0).any():
        raise MalformedInputError("trade volumes must be positive")
    if ((df["price"] < C.ID_PRICE_MIN) | (df["price"] > C.ID_PRICE_MAX)).any():
        raise MalformedInputError("trade price outside intraday limits")
    return df


def write_trades(df: pd.DataFrame, path) -> None:
    out = df[TRADE_COLUMNS].copy()
    out["exec_time"] = pd.to_datetime(out["exec_time"]).dt.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    out.to_csv(path, index=False, float_format="%.17g")


def grids_from_trades(trades: pd.DataFrame, da_prices: dict[tuple[dt.date, int], float],
                      keys: Iterable[tuple[dt.date, int]] | None = None) -> dict[tuple[dt.date, int], SessionGrid]:
    """Build one grid per delivery period present in ``da_prices``."""
    groups = {key: g for key, g in trades.groupby(["delivery_day", "delivery_hour"])}
    keys = sorted(da_prices) if keys is None else keys
    empty = trades.iloc[0:0]
    return {key: build_session_grid(groups.get(key, empty), da_prices[key], key) for key in keys}


def grids_to_frame(grids: Iterable[SessionGrid], include_history: bool = False) -> pd.DataFrame:
    """Long-format grid export.  With ``include_history`` the pre-window buckets
    are written with steps ``t <= 0`` (``t = 0`` is the anchor)."""
    rows = []
    for g in grids:
        d = g.delivery_day.isoformat()
        if include_history:
            h = len(g.history_prices)
            for i in range(h):
                rows.append((d, g.delivery_hour, i - h + 1, g.history_prices[i],
                             g.history_diffs[i], int(g.history_alpha[i])))
        for t in range(g.T):
            rows.append((d, g.delivery_hour, t + 1, g.prices[t], g.diffs[t], int(g.alpha[t])))
    return pd.DataFrame(rows, columns=GRID_COLUMNS)


def grids_from_frame(df: pd.DataFrame, da_prices: dict[tuple[dt.date, int], float],
                     n_trades: dict[tuple[dt.date, int], int] | None = None) -> dict[tuple[dt.date, int], SessionGrid]:
    """Inverse of :func:`grids_to_frame` (with history)."""
    out = {}
    days = pd.to_datetime(df["d"]).dt.date
    for (day, hour), g in df.groupby([days, df["s"]]):
        g = g.sort_values("t")
        key = (day, int(hour))
        hist = g[g["t"] <= 0]
        win = g[g["t"] >= 1]
        hp = hist["P"].to_numpy(float)
        out[key] = SessionGrid(
            delivery_day=day, delivery_hour=int(hour), da_price=float(da_prices[key]),
            anchor_price=float(hp[-1]) if len(hp) else float(da_prices[key]),
            prices=win["P"].to_numpy(float), diffs=win["dP"].to_numpy(float),
            alpha=win["alpha"].to_numpy(int).astype(bool),
            history_prices=hp, history_diffs=hist["dP"].to_numpy(float),
            history_alpha=hist["alpha"].to_numpy(int).astype(bool),
            n_trades=(n_trades or {}).get(key, int(win["alpha"].sum())),
        )
    return out
