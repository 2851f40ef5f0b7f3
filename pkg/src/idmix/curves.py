"""Day-ahead auction curves: elasticity transfer and merit-order slope.

Curves are monotone polylines in the (volume, price) plane.  Equal consecutive
volumes are allowed and represent vertical steps; equal consecutive prices are
flat segments.  Inversion (price -> volume) returns the largest volume at which
the curve attains the price; evaluation (volume -> price) returns the first
price reached along the curve.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import pandas as pd

from . import constants as C

CURVE_COLUMNS = ["delivery_day", "delivery_hour", "side", "volume_mwh", "price"]


class DomainError(ValueError):
    """Price or volume outside the curve's support."""


class CurveConsistencyError(ValueError):
    """Transformed curve is not monotone; the inputs are corrupt."""


@dataclass(frozen=True)
class MonotoneCurve:
    volumes: np.ndarray
    prices: np.ndarray
    orientation: str  # "supply" (nondecreasing) or "demand" (nonincreasing)

    def __post_init__(self):
        q = np.asarray(self.volumes, dtype=float)
        p = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "volumes", q)
        object.__setattr__(self, "prices", p)
        if self.orientation not in ("supply", "demand"):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        if q.ndim != 1 or q.shape != p.shape or len(q) < 2:
            raise ValueError("a curve needs at least two (volume, price) breakpoints")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("breakpoints must be finite")
        if np.any(np.diff(q) < 0):
            raise ValueError("volumes must be nondecreasing")
        dp = np.diff(p)
        if self.orientation == "supply" and np.any(dp < 0):
            raise ValueError("supply prices must be nondecreasing")
        if self.orientation == "demand" and np.any(dp > 0):
            raise ValueError("demand prices must be nonincreasing")
        if np.any((np.diff(q) == 0) & (dp == 0)):
            raise ValueError("duplicate breakpoints")

    @property
    def price_range(self) -> tuple[float, float]:
        return float(self.prices.min()), float(self.prices.max())

    @property
    def volume_range(self) -> tuple[float, float]:
        return float(self.volumes[0]), float(self.volumes[-1])

    def _ascending_prices(self) -> np.ndarray:
        return self.prices if self.orientation == "supply" else -self.prices


def _invert(curve: MonotoneCurve, price, largest: bool) -> np.ndarray:
    z = np.asarray(price, dtype=float)
    lo, hi = curve.price_range
    if np.any((z < lo) | (z > hi)) or np.any(np.isnan(z)):
        raise DomainError(f"price outside curve range [{lo}, {hi}]")
    ap = curve._ascending_prices()
    az = z if curve.orientation == "supply" else -z
    q = curve.volumes
    n = len(q)
    if largest:
        i = np.searchsorted(ap, az, side="right") - 1
        i = np.clip(i, 0, n - 1)
        at_end = i == n - 1
        j = np.minimum(i + 1, n - 1)
        base = i
    else:
        j = np.searchsorted(ap, az, side="left")
        j = np.clip(j, 0, n - 1)
        at_end = j == 0
        i = np.maximum(j - 1, 0)
        base = j
    dp = ap[j] - ap[i]
    frac = np.divide(az - ap[i], dp, out=np.zeros_like(az, dtype=float), where=dp > 0)
    out = np.where(at_end | (dp <= 0), q[base], q[i] + frac * (q[j] - q[i]))
    return out


def invert(curve: MonotoneCurve, price) -> np.ndarray | float:
    """Volume at which ``curve`` attains ``price`` (largest such volume)."""
    out = _invert(curve, price, largest=True)
    return float(out) if np.ndim(out) == 0 else out


def invert_min(curve: MonotoneCurve, price) -> np.ndarray | float:
    """Smallest volume at which ``curve`` attains ``price``."""
    out = _invert(curve, price, largest=False)
    return float(out) if np.ndim(out) == 0 else out


def evaluate(curve: MonotoneCurve, volume) -> np.ndarray | float:
    """Price of ``curve`` at ``volume``; on a vertical step the first price reached."""
    v = np.asarray(volume, dtype=float)
    lo, hi = curve.volume_range
    if np.any((v < lo) | (v > hi)) or np.any(np.isnan(v)):
        raise DomainError(f"volume outside curve support [{lo}, {hi}]")
    q, p = curve.volumes, curve.prices
    j = np.clip(np.searchsorted(q, v, side="left"), 0, len(q) - 1)
    i = np.maximum(j - 1, 0)
    dq = q[j] - q[i]
    frac = np.divide(v - q[i], dq, out=np.zeros_like(v, dtype=float), where=dq > 0)
    out = np.where((q[j] == v) | (dq <= 0), p[j], p[i] + frac * (p[j] - p[i]))
    return float(out) if np.ndim(out) == 0 else out


def inelastic_demand(dem: MonotoneCurve, p_min: float = C.DA_PRICE_MIN) -> float:
    """Wholesale demand volume at the minimum auction price."""
    if dem.orientation != "demand":
        raise ValueError("expected a demand curve")
    return float(invert(dem, p_min))


@dataclass(frozen=True)
class TransformedSupply:
    curve: MonotoneCurve
    dem_inelastic: float

    def inverse(self, price):
        """Volume on the transformed supply curve at ``price``."""
        return invert(self.curve, price)

    def __call__(self, volume):
        return evaluate(self.curve, volume)


def transform_supply(sup: MonotoneCurve, dem: MonotoneCurve) -> TransformedSupply:
    """Move all demand elasticity to the supply side.

    The transformed inverse supply is ``SUP_WS^-1(z) + DEM_inel - DEM_WS^-1(z)``,
    evaluated on the merged set of price breakpoints (both one-sided limits are
    kept at every breakpoint so flat segments survive the transform).
    """
    if sup.orientation != "supply" or dem.orientation != "demand":
        raise ValueError("expected a supply and a demand curve")
    d_inel = inelastic_demand(dem)
    lo = max(sup.price_range[0], dem.price_range[0])
    hi = min(sup.price_range[1], dem.price_range[1])
    if lo > hi:
        raise DomainError("supply and demand price ranges do not overlap")
    z = np.unique(np.concatenate([sup.prices, dem.prices, [lo, hi]]))
    z = z[(z >= lo) & (z <= hi)]

    sup_max, sup_min = _invert(sup, z, True), _invert(sup, z, False)
    dem_max, dem_min = _invert(dem, z, True), _invert(dem, z, False)
    v_left = sup_min + d_inel - dem_max
    v_mid = sup_max + d_inel - dem_max
    v_right = sup_max + d_inel - dem_min

    vols = np.column_stack([v_left, v_mid, v_right]).ravel()
    prices = np.repeat(z, 3)
    if np.any(np.diff(vols) < -1e-9 * max(1.0, float(np.max(np.abs(vols))))):
        raise CurveConsistencyError("transformed supply curve is not monotone")
    vols = np.maximum.accumulate(vols)
    keep = np.ones(len(vols), dtype=bool)
    keep[1:] = (np.diff(vols) != 0) | (np.diff(prices) != 0)
    return TransformedSupply(MonotoneCurve(vols[keep], prices[keep], "supply"), d_inel)


def clearing_price(ts: TransformedSupply) -> float:
    """Price of the transformed supply at the inelastic demand."""
    return float(ts(ts.dem_inelastic))


class MOSlope(NamedTuple):
    value: float
    anchor_clamped: bool
    volume_clamped: bool


def merit_order_slope(ts: TransformedSupply, anchor_price: float, q: float) -> MOSlope:
    """Central difference quotient of the transformed supply around the demand
    implied by ``anchor_price``.

    Out-of-range anchors and offsets are clamped to the curve support and
    flagged rather than rejected.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    lo, hi = ts.curve.price_range
    p0 = min(max(float(anchor_price), lo), hi)
    implied = float(ts.inverse(p0))
    vlo, vhi = ts.curve.volume_range
    up, down = implied + q, implied - q
    clamped = up > vhi or down < vlo
    up, down = min(up, vhi), max(down, vlo)
    value = (float(ts(up)) - float(ts(down))) / (2.0 * q)
    return MOSlope(value, p0 != float(anchor_price), clamped)


# ---------------------------------------------------------------------------
# CSV surface


def read_curves(path) -> dict[tuple[dt.date, int], tuple[MonotoneCurve, MonotoneCurve]]:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = set(CURVE_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"curve CSV lacks columns {sorted(missing)}")
    df["delivery_day"] = pd.to_datetime(df["delivery_day"]).dt.date
    out = {}
    for (day, hour), g in df.groupby(["delivery_day", "delivery_hour"], sort=True):
        sides = {}
        for side in ("supply", "demand"):
            part = g[g["side"] == side]
            sides[side] = MonotoneCurve(part["volume_mwh"].to_numpy(float), part["price"].to_numpy(float), side)
        out[(day, int(hour))] = (sides["supply"], sides["demand"])
    return out


def curves_to_frame(curves: dict[tuple[dt.date, int], tuple[MonotoneCurve, MonotoneCurve]]) -> pd.DataFrame:
    rows = []
    for (day, hour), pair in sorted(curves.items()):
        for c in pair:
            for q, p in zip(c.volumes, c.prices):
                rows.append((day.isoformat(), hour, c.orientation, q, p))
    return pd.DataFrame(rows, columns=CURVE_COLUMNS)
