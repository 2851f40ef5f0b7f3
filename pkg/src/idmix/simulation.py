"""Recursive Monte Carlo simulation of intraday price paths.

Every path carries its own lag history.  At each step the trade probability and
the price-change distribution are predicted from that history, a trade
indicator and a price change are drawn, and the price is carried forward when
no trade occurs.  Each path draws from its own counter-based stream, so the
ensemble does not depend on how paths are scheduled across threads.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

from . import constants as C
from . import distributions as D
from .estimation.gamlss import theta_from_eta
from .estimation.model import FittedMixtureModel
from .features import SessionStatics, design_block
from .marketgrid import SessionGrid
from .streams import path_streams

log = logging.getLogger(__name__)

CHUNK = 64  # fixed path blocks; scheduling never changes arithmetic


@dataclass
class PathEnsemble:
    delivery_key: tuple
    P: np.ndarray  # (M, T)
    alpha: np.ndarray  # (M, T) bool
    P0: float
    seed: int
    stream: str
    model_id: str
    stream_ids: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.P.shape[0]

    @property
    def T(self) -> int:
        return self.P.shape[1]

    @property
    def dP(self) -> np.ndarray:
        return np.diff(np.column_stack([np.full(self.M, self.P0), self.P]), axis=1)

    def telescopes(self, atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.P0 + np.cumsum(self.dP, axis=1), self.P, atol=atol, rtol=0))

    def sidecar(self) -> dict:
        day, hour = self.delivery_key
        return {"delivery_day": str(day), "delivery_hour": int(hour), "P0": self.P0, "seed": int(self.seed),
                "stream": self.stream, "model_id": self.model_id, "M": self.M, "T": self.T,
                "diagnostics": self.diagnostics}

    def save(self, path) -> None:
        """Write ``path`` as CSV ``j,t,P,alpha`` and ``path.json`` as sidecar."""
        path = Path(path)
        j, t = np.meshgrid(np.arange(self.M), np.arange(1, self.T + 1), indexing="ij")
        df = pd.DataFrame({"j": j.ravel(), "t": t.ravel(), "P": self.P.ravel(),
                           "alpha": self.alpha.ravel().astype(int)})
        tmp = path.with_suffix(path.suffix + ".tmp")
        df.to_csv(tmp, index=False, float_format="%.17g")
        tmp.replace(path)
        side = Path(str(path) + ".json")
        tmp = side.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.sidecar(), indent=1, sort_keys=True))
        tmp.replace(side)

    @classmethod
    def load(cls, path) -> "PathEnsemble":
        import datetime as dt

        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        df = pd.read_csv(path, float_precision="round_trip").sort_values(["j", "t"])
        M, T = meta["M"], meta["T"]
        return cls((dt.date.fromisoformat(meta["delivery_day"]), meta["delivery_hour"]),
                   df["P"].to_numpy(float).reshape(M, T), df["alpha"].to_numpy(bool).reshape(M, T),
                   meta["P0"], meta["seed"], meta["stream"], meta["model_id"], None, meta["diagnostics"])


@dataclass(frozen=True)
class PathHistory:
    """Observed lags at simulation start: ``dp[j-1]`` and ``alpha[j-1]`` hold
    the values ``j`` steps before step 1."""

    dp: np.ndarray
    alpha: np.ndarray
    P0: float

    @classmethod
    def from_grid(cls, grid: SessionGrid, depth: int = C.LAG_DEPTH) -> "PathHistory":
        diffs, alpha, prices = grid.lagged(depth)
        return cls(diffs[:depth][::-1].copy(), alpha[:depth][::-1].astype(float), float(grid.anchor_price))


def _rowdot(Z: np.ndarray, coef: np.ndarray) -> np.ndarray:
    # Row-wise reduction so identical rows give identical results in any block.
    return (Z * coef).sum(axis=1)


def _chunk(model: FittedMixtureModel, statics: SessionStatics, hist: PathHistory, u_alpha: np.ndarray,
           base: np.ndarray, T: int) -> tuple[np.ndarray, np.ndarray, int, np.ndarray, np.ndarray]:
    n = u_alpha.shape[0]
    dp_lags = np.tile(hist.dp, (n, 1))
    a_lags = np.tile(hist.alpha, (n, 1))
    price = np.full(n, hist.P0)
    P = np.empty((n, T))
    A = np.zeros((n, T), dtype=bool)
    clamped = 0
    pis = np.empty((n, T))
    thetas = np.empty((4, n, T))
    lstd, gstd = model.logistic_std, model.gamlss_std
    for t in range(1, T + 1):
        if model.constant_pi is not None:
            pi = np.full(n, model.constant_pi)
        else:
            X = design_block("logistic", statics, t, dp_lags, a_lags, price, T)
            pi = expit(model.logistic_intercept + _rowdot(lstd.apply(X), model.logistic_coef))
        Xg = gstd.apply(design_block("gamlss", statics, t, dp_lags, a_lags, price, T))
        eta = np.stack([model.gamlss_intercepts[k] + _rowdot(Xg, model.gamlss_coefs[k]) for k in range(4)])
        theta, moved = D.clamp(model.family, theta_from_eta(model.links, eta))
        clamped += moved
        a = u_alpha[:, t - 1] < pi
        step = D.transform_draws(model.family, theta, base[:, t - 1])
        dp = np.where(a, step, 0.0)
        price = price + dp
        P[:, t - 1], A[:, t - 1] = price, a
        pis[:, t - 1] = pi
        thetas[:, :, t - 1] = np.stack(theta.arrays())
        dp_lags = np.column_stack([dp, dp_lags[:, :-1]])
        a_lags = np.column_stack([a.astype(float), a_lags[:, :-1]])
    return P, A, clamped, pis, thetas


def simulate_session(model: FittedMixtureModel, statics: SessionStatics, history: PathHistory,
                     M: int = C.DEFAULT_PATHS, T: int = C.T_STEPS, seed: int = 0, threads: int = 1,
                     stream_ids=None, stream_name: str = "simulation", keep_parameters: bool = False) -> PathEnsemble:
    """Simulate ``M`` price paths of ``T`` steps for one delivery period."""
    ids = np.arange(M) if stream_ids is None else np.asarray(stream_ids, dtype=int)
    if len(ids) != M:
        raise ValueError("stream_ids must have one entry per path")
    gens = path_streams(seed, stream_name, statics.delivery_key, ids)
    u_alpha = np.empty((M, T))
    base = np.empty((M, T))
    for j, g in enumerate(gens):
        u_alpha[j] = g.random(T)
        base[j] = D.base_draws(model.family, g, T)

    blocks = [slice(s, min(s + CHUNK, M)) for s in range(0, M, CHUNK)]

    def run(sl):
        return _chunk(model, statics, history, u_alpha[sl], base[sl], T)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, blocks))
    else:
        results = [run(sl) for sl in blocks]
    P = np.vstack([r[0] for r in results])
    A = np.vstack([r[1] for r in results])
    clamped = int(sum(r[2] for r in results))
    diag = {"clamped_parameters": clamped}
    if clamped:
        log.warning("%d predicted parameters clamped to the %s domain in %s", clamped, model.family,
                    statics.delivery_key)
    ens = PathEnsemble(statics.delivery_key, P, A, float(history.P0), int(seed), stream_name,
                       model.model_id, ids, diag)
    if keep_parameters:
        ens.diagnostics["pi"] = np.vstack([r[3] for r in results])
        ens.diagnostics["theta"] = np.concatenate([r[4] for r in results], axis=1)
    return ens


def order_index(tau, M: int) -> np.ndarray:
    """Zero-based index of the lower order statistic ``ceil(tau * M)``."""
    tau = np.asarray(tau, dtype=float)
    if np.any((tau <= 0) | (tau >= 1)):
        raise D.ContractViolation("quantile level must lie in (0, 1)")
    # round away representation noise such as 0.07 * 100 = 7.000000000000001
    return np.ceil(np.round(tau * M, 9)).astype(int) - 1


def ensemble_quantiles(values: np.ndarray, tau) -> np.ndarray:
    """Lower-order-statistic quantiles along axis 0 of ``values``."""
    values = np.sort(np.asarray(values, dtype=float), axis=0)
    return values[order_index(tau, values.shape[0])]


def ensemble_quantile(ens: PathEnsemble | np.ndarray, t: int, tau: float) -> float:
    P = ens.P if isinstance(ens, PathEnsemble) else np.asarray(ens)
    if not 1 <= t <= P.shape[1]:
        raise ValueError(f"step {t} outside 1..{P.shape[1]}")
    return float(ensemble_quantiles(P[:, t - 1], tau))
