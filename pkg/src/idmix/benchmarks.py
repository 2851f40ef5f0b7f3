"""Reference models that emit path ensembles through the simulator's interface."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, signal, stats

from . import constants as C
from .marketgrid import SessionGrid
from .simulation import PathEnsemble
from .streams import path_streams

log = logging.getLogger(__name__)

KINDS = ("naive", "mv_normal", "mv_t", "rw_normal", "rw_t", "rw_t_mix", "auto_arima")
MIN_SESSIONS = 30
MV_RIDGE = 1e-8
MV_T_DF_GRID = tuple(range(3, 31))
ARIMA_MAX_ORDER = 5


class BenchmarkFitError(ValueError):
    """Not enough training data for the requested benchmark."""


@dataclass
class BenchmarkSpec:
    kind: str
    params: dict = field(default_factory=dict)
    window: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown benchmark {self.kind!r}")

    @property
    def model_id(self) -> str:
        return self.kind

    def to_dict(self) -> dict:
        def conv(v):
            return v.tolist() if isinstance(v, np.ndarray) else v
        return {"kind": self.kind, "params": {k: conv(v) for k, v in self.params.items()}, "window": self.window}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkSpec":
        return cls(d["kind"], dict(d["params"]), dict(d.get("window", {})))


def _training_arrays(grids: Sequence[SessionGrid]) -> tuple[np.ndarray, np.ndarray]:
    if len(grids) < MIN_SESSIONS:
        raise BenchmarkFitError(f"{len(grids)} training sessions, need at least {MIN_SESSIONS}")
    dP = np.vstack([g.diffs for g in grids])
    alpha = np.vstack([g.alpha for g in grids]).astype(bool)
    return dP, alpha


def _mv_t_loglik(x: np.ndarray, mean: np.ndarray, cov: np.ndarray, df: float) -> float:
    scale = cov * (df - 2.0) / df
    return float(np.sum(stats.multivariate_t.logpdf(x, loc=mean, shape=scale, df=df)))


def t_fit_profile(x: np.ndarray, grid=MV_T_DF_GRID) -> tuple[float, float, float]:
    """Student-t fit with the degrees of freedom restricted to ``grid``.

    A free fit on zero-inflated changes can drive ``df`` below 1 and the
    simulated paths to infinity; the grid keeps the variance finite.
    """
    best = None
    for df in grid:
        _, loc, scale = stats.t.fit(x, fdf=df)
        ll = float(np.sum(stats.t.logpdf(x, df, loc, scale)))
        if best is None or ll > best[0]:
            best = (ll, float(df), float(loc), float(scale))
    return best[1:]


def fit_benchmark(kind: str, grids: Sequence[SessionGrid] = (), target: SessionGrid | None = None,
                  window: dict | None = None) -> BenchmarkSpec:
    """Estimate a benchmark from the training sessions of one delivery hour.

    ``auto_arima`` instead uses the pre-window price series of ``target``.
    """
    window = dict(window or {})
    if kind == "auto_arima":
        if target is None:
            raise BenchmarkFitError("auto_arima needs the target session's pre-window series")
        series = np.asarray(target.history_prices, float)
        if len(series) < 20:
            raise BenchmarkFitError(f"pre-window series has only {len(series)} points")
        return BenchmarkSpec(kind, auto_arima(series).to_params(), window)

    dP, alpha = _training_arrays(grids)
    if kind == "naive":
        return BenchmarkSpec(kind, {"pool": dP}, window)
    if kind in ("mv_normal", "mv_t"):
        mean = dP.mean(axis=0)
        cov = np.cov(dP, rowvar=False, bias=True)
        cov = cov + MV_RIDGE * max(np.trace(cov) / len(cov), 1.0) * np.eye(len(cov))
        params = {"mean": mean, "cov": cov}
        if kind == "mv_t":
            ll = [_mv_t_loglik(dP, mean, cov, df) for df in MV_T_DF_GRID]
            params["df"] = float(MV_T_DF_GRID[int(np.argmax(ll))])
        return BenchmarkSpec(kind, params, window)
    if kind == "rw_normal":
        x = dP.ravel()
        return BenchmarkSpec(kind, {"mu": float(x.mean()), "sigma": float(x.std())}, window)
    if kind == "rw_t":
        df, loc, scale = t_fit_profile(dP.ravel())
        return BenchmarkSpec(kind, {"df": df, "loc": loc, "scale": scale}, window)
    if kind == "rw_t_mix":
        traded = dP[alpha]
        if len(traded) < 10:
            raise BenchmarkFitError("too few traded steps for rw_t_mix")
        df, loc, scale = t_fit_profile(traded)
        return BenchmarkSpec(kind, {"df": df, "loc": loc, "scale": scale, "pi": alpha.mean(axis=0)}, window)
    raise ValueError(f"unknown benchmark {kind!r}")


def simulate_benchmark(spec: BenchmarkSpec, P0: float, M: int = C.DEFAULT_PATHS, T: int = C.T_STEPS,
                       seed: int = 0, key=None) -> PathEnsemble:
    """Draw ``M`` paths; path ``j`` uses its own stream so results do not depend
    on evaluation order."""
    name = f"benchmark:{spec.kind}"
    gens = path_streams(seed, name, key, range(M))
    p = spec.params
    alpha = np.ones((M, T), dtype=bool)
    if spec.kind == "naive":
        pool = np.asarray(p["pool"], float)
        dP = pool[[int(g.integers(len(pool))) for g in gens], :T]
        alpha = dP != 0
    elif spec.kind in ("mv_normal", "mv_t"):
        L = np.linalg.cholesky(np.asarray(p["cov"], float))
        z = np.vstack([g.standard_normal(T) for g in gens])
        dP = np.asarray(p["mean"], float) + z @ L.T
        if spec.kind == "mv_t":
            df = p["df"]
            w = np.array([g.chisquare(df) for g in gens]) / df
            dP = np.asarray(p["mean"], float) + (z @ L.T) * np.sqrt((df - 2.0) / df) / np.sqrt(w)[:, None]
    elif spec.kind == "rw_normal":
        dP = p["mu"] + p["sigma"] * np.vstack([g.standard_normal(T) for g in gens])
    elif spec.kind in ("rw_t", "rw_t_mix"):
        u = np.vstack([g.random((2, T)) for g in gens]).reshape(M, 2, T)
        dP = p["loc"] + p["scale"] * stats.t.ppf(np.clip(u[:, 0], 1e-300, 1 - 1e-16), p["df"])
        if spec.kind == "rw_t_mix":
            alpha = u[:, 1] < np.asarray(p["pi"], float)[:T]
            dP = np.where(alpha, dP, 0.0)
    elif spec.kind == "auto_arima":
        model = ArimaFit.from_params(p)
        dP = np.diff(np.column_stack([np.full(M, P0), model.simulate(gens, T)]), axis=1)
    else:
        raise ValueError(spec.kind)
    P = P0 + np.cumsum(dP, axis=1)
    return PathEnsemble(key, P, alpha, float(P0), int(seed), name, spec.model_id)


# ---------------------------------------------------------------------------
# Stepwise ARIMA by conditional sum of squares


@dataclass
class ArimaFit:
    p: int
    d: int
    q: int
    const: float
    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    bic: float
    tail: np.ndarray  # last values of the (differenced) series
    resid_tail: np.ndarray
    last_level: float

    def to_params(self) -> dict:
        return {"order": [self.p, self.d, self.q], "const": self.const, "ar": self.ar, "ma": self.ma,
                "sigma2": self.sigma2, "bic": self.bic, "tail": self.tail, "resid_tail": self.resid_tail,
                "last_level": self.last_level}

    @classmethod
    def from_params(cls, d: dict) -> "ArimaFit":
        p, dd, q = d["order"]
        return cls(p, dd, q, d["const"], np.asarray(d["ar"], float), np.asarray(d["ma"], float), d["sigma2"],
                   d["bic"], np.asarray(d["tail"], float), np.asarray(d["resid_tail"], float), d["last_level"])

    def simulate(self, gens, T: int) -> np.ndarray:
        """Future levels ``(M, T)`` continuing the fitted series."""
        M = len(gens)
        eps = np.sqrt(self.sigma2) * np.vstack([g.standard_normal(T) for g in gens])
        x = np.tile(self.tail, (M, 1))
        e = np.tile(self.resid_tail, (M, 1))
        out = np.empty((M, T))
        for t in range(T):
            val = self.const + eps[:, t]
            for i in range(self.p):
                val = val + self.ar[i] * x[:, -1 - i]
            for j in range(self.q):
                val = val + self.ma[j] * e[:, -1 - j]
            out[:, t] = val
            x = np.column_stack([x, val])
            e = np.column_stack([e, eps[:, t]])
        if self.d == 1:
            out = self.last_level + np.cumsum(out, axis=1)
        return out


def _css_residuals(x: np.ndarray, const: float, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    p = len(ar)
    w = x[p:] - const
    for i in range(p):
        w = w - ar[i] * x[p - 1 - i: len(x) - 1 - i]
    return signal.lfilter([1.0], np.concatenate([[1.0], ma]), w)


def _roots_ok(coef: np.ndarray, sign: float) -> bool:
    """Roots of ``1 + sign*c_1 z + ... + sign*c_k z^k`` lie outside the unit circle."""
    if len(coef) == 0 or not np.any(coef):
        return True
    poly = np.concatenate([[1.0], sign * np.asarray(coef)])
    return bool(np.all(np.abs(np.roots(poly[::-1])) > 1.0 + 1e-6))


def css_fit(x: np.ndarray, p: int, q: int, constant: bool) -> tuple[np.ndarray, float, float]:
    """Conditional-sum-of-squares estimates ``(params, sigma2, bic)`` with
    ``params = (const, ar_1..p, ma_1..q)``."""
    n_eff = len(x) - p

    def unpack(theta):
        const = theta[0] if constant else 0.0
        k = 1 if constant else 0
        return const, theta[k:k + p], theta[k + p:k + p + q]

    def sse(theta):
        const, ar, ma = unpack(theta)
        if not (_roots_ok(ar, -1.0) and _roots_ok(ma, 1.0)):
            return 1e300
        e = _css_residuals(x, const, ar, ma)
        return float(e @ e)

    k = p + q + int(constant)
    start = np.zeros(k)
    if constant:
        start[0] = float(np.mean(x))
    if k:
        res = optimize.minimize(sse, start, method="Nelder-Mead" if k == 1 else "BFGS",
                                options={"maxiter": 2000})
        theta = res.x if sse(res.x) <= sse(start) else start
    else:
        theta = start
    s = sse(theta)
    sigma2 = max(s / n_eff, 1e-12)
    ll = -0.5 * n_eff * (np.log(2 * np.pi * sigma2) + 1.0)
    bic = -2.0 * ll + (k + 1) * np.log(n_eff)
    const, ar, ma = unpack(theta)
    full = np.concatenate([[const], ar, ma])
    return full, sigma2, bic


def kpss_differences(y: np.ndarray, level: float = 0.05) -> int:
    """0 if level stationarity is not rejected by KPSS at ``level``, else 1."""
    from statsmodels.tsa.stattools import kpss

    if np.ptp(y) == 0:
        return 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, pval, _, _ = kpss(y, regression="c", nlags="auto")
    return int(pval < level)


def auto_arima(y: np.ndarray, max_order: int = ARIMA_MAX_ORDER) -> ArimaFit:
    """Stepwise search over ``p, q <= max_order`` minimizing BIC; ``d`` by KPSS;
    a constant is included when ``d = 0``."""
    y = np.asarray(y, float)
    d = kpss_differences(y)
    x = np.diff(y) if d else y
    constant = d == 0
    cache: dict[tuple[int, int], tuple] = {}

    def score(p, q):
        if (p, q) not in cache:
            if len(x) - p <= p + q + 2:
                cache[(p, q)] = (None, None, np.inf)
            else:
                cache[(p, q)] = css_fit(x, p, q, constant)
        return cache[(p, q)][2]

    starts = [(2, 2), (0, 0), (1, 0), (0, 1)]
    best = min(starts, key=lambda pq: (score(*pq), pq))
    improved = True
    while improved:
        improved = False
        p0, q0 = best
        for dp, dq in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)):
            p, q = p0 + dp, q0 + dq
            if 0 <= p <= max_order and 0 <= q <= max_order and score(p, q) < score(*best):
                best, improved = (p, q), True
    p, q = best
    params, sigma2, bic = cache[best]
    const, ar, ma = params[0], params[1:1 + p], params[1 + p:1 + p + q]
    e = _css_residuals(x, const, ar, ma)
    depth = max(p, q, 1)
    tail = x[-depth:] if len(x) >= depth else np.concatenate([np.zeros(depth - len(x)), x])
    rt = e[-depth:] if len(e) >= depth else np.concatenate([np.zeros(depth - len(e)), e])
    return ArimaFit(p, d, q, float(const), ar, ma, float(sigma2), float(bic), tail, rt, float(y[-1]))
