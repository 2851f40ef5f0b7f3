"""Point and probabilistic scores for path ensembles and forecast comparison tests.

Ensembles are arrays of shape ``(M, T)`` (paths by steps); a collection of
sessions is a sequence of such arrays with matching realized paths ``(T,)``.
Realized paths containing NaN are excluded from averages and counted.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.spatial.distance import pdist

from .distributions import ContractViolation
from .simulation import order_index

TAU_GRID = np.round(np.arange(1, 100) / 100.0, 2)
# significance levels of the central 50%, 90% and 99% intervals
INTERVAL_LEVELS = (0.5, 0.1, 0.01)


class DegenerateTestError(ValueError):
    """A test statistic is undefined for the given data."""


def _stack(ensembles, realized) -> tuple[np.ndarray, np.ndarray, int]:
    ens = [np.asarray(e, float) for e in ensembles]
    real = [np.asarray(r, float) for r in realized]
    if len(ens) != len(real):
        raise ValueError("one realized path per ensemble is required")
    keep = [i for i, r in enumerate(real) if np.all(np.isfinite(r))]
    if not keep:
        raise ValueError("no session with a realized path")
    E = np.stack([ens[i] for i in keep])
    R = np.stack([real[i] for i in keep])
    if E.shape[2] != R.shape[1]:
        raise ValueError("ensemble and realized path lengths differ")
    return E, R, len(ens) - len(keep)


def rmse(ensembles, realized) -> float:
    """Root mean squared error of the ensemble mean path."""
    E, R, _ = _stack(ensembles, realized)
    return float(np.sqrt(np.mean((R - E.mean(axis=1)) ** 2)))


def mae(ensembles, realized) -> float:
    """Mean absolute error of the ensemble median path."""
    E, R, _ = _stack(ensembles, realized)
    return float(np.mean(np.abs(R - np.median(E, axis=1))))


def interval_bounds(E: np.ndarray, level: float) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper ensemble quantiles at ``level/2`` and ``1 - level/2``
    along the path axis (axis -2)."""
    S = np.sort(E, axis=-2)
    M = E.shape[-2]
    lo, hi = order_index([level / 2, 1 - level / 2], M)
    return S[..., lo, :], S[..., hi, :]


def winkler(lower, upper, obs, level: float) -> np.ndarray:
    width = upper - lower
    below = np.maximum(lower - obs, 0.0)
    above = np.maximum(obs - upper, 0.0)
    return width + (2.0 / level) * (below + above)


def coverage_and_winkler(ensembles, realized, level: float) -> tuple[float, float]:
    """Empirical coverage and mean Winkler score of the central interval
    ``[Q^(level/2), Q^(1-level/2)]``; e.g. ``level=0.1`` for 90% intervals."""
    if not 0 < level < 1:
        raise ContractViolation("interval level must lie in (0, 1)")
    E, R, _ = _stack(ensembles, realized)
    lo, hi = interval_bounds(E, level)
    inside = (R >= lo) & (R <= hi)
    return float(inside.mean()), float(winkler(lo, hi, R, level).mean())


def pinball(q, obs, tau) -> np.ndarray:
    return np.where(obs < q, (1 - tau) * (q - obs), tau * (obs - q))


def pinball_grid(E: np.ndarray, R: np.ndarray, taus=TAU_GRID) -> np.ndarray:
    """Pinball losses ``(len(taus),) + R.shape`` for ensembles ``E`` of shape
    ``R.shape[:-1] + (M, T)``."""
    S = np.sort(E, axis=-2)
    idx = order_index(taus, E.shape[-2])
    Q = np.moveaxis(S[..., idx, :], -2, 0)
    tau = np.asarray(taus, float).reshape((-1,) + (1,) * R.ndim)
    return pinball(Q, R[None], tau)


def pinball_crps(ensembles, realized) -> tuple[np.ndarray, float]:
    """Mean pinball loss per grid level and its grid mean (the CRPS proxy)."""
    E, R, _ = _stack(ensembles, realized)
    pb = pinball_grid(E, R)
    grid = pb.reshape(len(TAU_GRID), -1).mean(axis=1)
    return grid, float(pb.mean(axis=0).mean())


def energy_score(ensemble, realized_path) -> float:
    """``(1/M) sum_j ||y - X_j|| - 1/(M(M-1)) sum_{i>j} ||X_j - X_i||``."""
    X = np.atleast_2d(np.asarray(ensemble, float))
    y = np.asarray(realized_path, float)
    M = X.shape[0]
    if M < 2:
        raise ContractViolation("energy score needs at least two paths")
    first = np.sqrt(((X - y) ** 2).sum(axis=1)).mean()
    second = pdist(X).sum() / (M * (M - 1))
    return float(first - second)


# ---------------------------------------------------------------------------
# Tests


@dataclass(frozen=True)
class DMResult:
    statistic: float
    pvalue: float
    n: int


def loss_differential(loss_a, loss_b) -> np.ndarray:
    """Daily differences of 1-norm losses across delivery hours."""
    A = np.atleast_2d(np.asarray(loss_a, float))
    B = np.atleast_2d(np.asarray(loss_b, float))
    if A.shape != B.shape:
        raise ValueError("loss matrices must have equal shapes")
    return np.abs(A).sum(axis=1) - np.abs(B).sum(axis=1)


def dm_test(loss_a, loss_b) -> DMResult:
    """Diebold-Mariano test with small-sample correction ``sqrt((N+3)/N)``.

    Rows are days, columns delivery hours.  The p-value is for the one-sided
    alternative that ``B`` is more accurate than ``A`` (positive differential),
    from a t distribution with ``N - 1`` degrees of freedom.
    """
    d = loss_differential(loss_a, loss_b)
    N = len(d)
    if N < 10:
        raise ValueError("the test needs at least 10 days")
    mean = d.mean()
    var = np.mean((d - mean) ** 2)
    if var == 0.0:
        if np.all(d == 0.0):
            return DMResult(0.0, 0.5, N)
        raise DegenerateTestError("loss differential has zero variance")
    t_dm = mean / np.sqrt(var / N)
    stat = float(np.sqrt((N + 3) / N) * t_dm)
    return DMResult(stat, float(stats.t.sf(stat, N - 1)), N)


def acf_lag_test(x, lag: int) -> tuple[float, float]:
    """Lag-``lag`` Pearson autocorrelation and its two-sided t-test p-value."""
    x = np.asarray(x, float)
    if lag < 1 or len(x) - lag < 3:
        raise ValueError("series too short for the requested lag")
    a, b = x[:-lag], x[lag:]
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateTestError("autocorrelation undefined for a constant series")
    r = float(np.corrcoef(a, b)[0, 1])
    n = len(a)
    if abs(r) >= 1.0:
        return r, 0.0
    t = r * np.sqrt(n - 2) / np.sqrt(1 - r * r)
    return r, float(2 * stats.t.sf(abs(t), n - 2))


# ---------------------------------------------------------------------------
# Report


def session_losses(ensemble, realized_path) -> dict[str, float]:
    """Per-session CRPS and ES used as DM losses."""
    E = np.asarray(ensemble, float)
    R = np.asarray(realized_path, float)
    return {"CRPS": float(pinball_grid(E, R).mean()), "ES": energy_score(E, R)}


def aggregate_scores(ensembles, realized) -> dict:
    E, R, excluded = _stack(ensembles, realized)
    pb = pinball_grid(E, R)
    out = {"RMSE": float(np.sqrt(np.mean((R - E.mean(axis=1)) ** 2))),
           "MAE": float(np.mean(np.abs(R - np.median(E, axis=1)))),
           "CRPS": float(pb.mean(axis=0).mean()),
           "ES": float(np.mean([energy_score(e, r) for e, r in zip(E, R)])),
           "excluded": excluded}
    for level in INTERVAL_LEVELS:
        lo, hi = interval_bounds(E, level)
        name = f"{round(100 * (1 - level))}"
        out[f"CR_{name}"] = float(((R >= lo) & (R <= hi)).mean())
        out[f"WS_{name}"] = float(winkler(lo, hi, R, level).mean())
    out["pinball"] = pb.reshape(len(TAU_GRID), -1).mean(axis=1).tolist()
    out["crps_by_t"] = pb.mean(axis=0).mean(axis=0).tolist()
    return out


SCORE_REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["models", "aggregates", "sessions", "dm", "tau_grid"],
    "properties": {
        "models": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "tau_grid": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "aggregates": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["RMSE", "MAE", "CRPS", "ES", "CR_50", "CR_90", "CR_99", "WS_50", "WS_90", "WS_99",
                             "pinball", "crps_by_t", "excluded"],
                "properties": {
                    **{k: {"type": "number", "minimum": 0} for k in ("RMSE", "MAE", "CRPS", "ES", "WS_50",
                                                                      "WS_90", "WS_99")},
                    **{k: {"type": "number", "minimum": 0, "maximum": 1} for k in ("CR_50", "CR_90", "CR_99")},
                    "pinball": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "crps_by_t": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "excluded": {"type": "integer", "minimum": 0},
                },
            },
        },
        "sessions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["model", "day", "hour", "CRPS", "ES"],
                "properties": {"model": {"type": "string"}, "day": {"type": "string"},
                               "hour": {"type": "integer", "minimum": 0, "maximum": 23},
                               "CRPS": {"type": "number", "minimum": 0}, "ES": {"type": "number"}},
            },
        },
        "dm": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": {"type": "object",
                                         "additionalProperties": {"type": ["number", "null"]}},
            },
        },
        "meta": {"type": "object"},
    },
}


@dataclass
class ScoreReport:
    models: list[str]
    aggregates: dict[str, dict]
    sessions: list[dict]
    dm: dict[str, dict[str, dict[str, float | None]]]
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"models": self.models, "aggregates": self.aggregates, "sessions": self.sessions, "dm": self.dm,
                "tau_grid": TAU_GRID.tolist(), "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def validate(self) -> None:
        import jsonschema

        jsonschema.validate(json.loads(self.to_json()), SCORE_REPORT_SCHEMA)

    def aggregates_csv(self) -> str:
        cols = ["RMSE", "MAE", "CRPS", "ES", "CR_50", "CR_90", "CR_99", "WS_50", "WS_90", "WS_99", "excluded"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model"] + cols)
        for m in self.models:
            w.writerow([m] + [repr(self.aggregates[m][c]) for c in cols])
        return buf.getvalue()

    def dm_csv(self, loss: str) -> str:
        """Matrix of p-values: row model ``A``, column model ``B``; small values
        mean ``B`` is significantly more accurate than ``A``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + self.models)
        for a in self.models:
            row = [self.dm[loss][a].get(b) for b in self.models]
            w.writerow([a] + ["" if v is None else repr(v) for v in row])
        return buf.getvalue()


def build_report(results: dict[str, dict[tuple, tuple[np.ndarray, np.ndarray]]], meta: dict | None = None,
                 losses: Sequence[str] = ("CRPS", "ES")) -> ScoreReport:
    """``results[model][(day, hour)] = (ensemble P (M, T), realized (T,))``.

    DM tests use the days and hours common to all models.
    """
    models = list(results)
    aggregates, sessions = {}, []
    per: dict[str, dict[tuple, dict]] = {}
    for m in models:
        keys = sorted(results[m])
        aggregates[m] = aggregate_scores([results[m][k][0] for k in keys], [results[m][k][1] for k in keys])
        per[m] = {}
        for k in keys:
            ens, real = results[m][k]
            if np.all(np.isfinite(real)):
                per[m][k] = session_losses(ens, real)
                sessions.append({"model": m, "day": str(k[0]), "hour": int(k[1]), **per[m][k]})
    common = sorted(set.intersection(*(set(per[m]) for m in models)))
    days = sorted({k[0] for k in common})
    hours = sorted({k[1] for k in common})
    full = [d for d in days if all((d, h) in common for h in hours)]
    dm: dict = {}
    for loss in losses:
        dm[loss] = {}
        mats = {m: np.array([[per[m][(d, h)][loss] for h in hours] for d in full]) for m in models}
        for a in models:
            dm[loss][a] = {}
            for b in models:
                if a == b or len(full) < 10:
                    dm[loss][a][b] = None
                    continue
                try:
                    dm[loss][a][b] = dm_test(mats[a], mats[b]).pvalue
                except DegenerateTestError:
                    dm[loss][a][b] = None
    meta = dict(meta or {})
    meta["dm_days"] = len(full)
    return ScoreReport(models, aggregates, sessions, dm, meta)
