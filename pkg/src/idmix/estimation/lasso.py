"""Weighted L1-penalized quadratic solver, standardization and BIC helpers."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy import linalg

log = logging.getLogger(__name__)

N_LAMBDA = 100
LAMBDA_RATIO = 1e-4
WEIGHT_FLOOR = 1e-8
RIDGE = 1e-6
POLISH_EVERY = 200


@dataclass(frozen=True)
class Standardization:
    """Per-column centring and scaling.  Columns with zero spread keep
    ``std = 1`` and are flagged constant; their coefficients are held at 0."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardization":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        constant = ~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
        return cls(mean, np.where(constant, 1.0, std), constant)

    def apply(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.std
        Z[:, self.constant] = 0.0
        return Z

    def to_raw(self, intercept: float, beta: np.ndarray) -> tuple[float, np.ndarray]:
        b = np.where(self.constant, 0.0, beta / self.std)
        return intercept - float(b @ self.mean), b

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float), np.asarray(d["constant"], bool))


class DesignMatrix(NamedTuple):
    X: np.ndarray
    manifest: tuple[str, ...]
    standardization: Standardization

    @classmethod
    def build(cls, X, manifest) -> "DesignMatrix":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(manifest):
            raise ValueError("design width does not match its manifest")
        if not np.all(np.isfinite(X)):
            raise ValueError("design contains non-finite values")
        return cls(X, tuple(manifest), Standardization.fit(X))

    @property
    def standardized(self) -> np.ndarray:
        return self.standardization.apply(self.X)


def bic(loglik: float, df: int, n: int) -> float:
    """Bayesian information criterion ``-2 loglik + df log n``."""
    return -2.0 * float(loglik) + df * float(np.log(n))


def lambda_grid(lam_max: float, n: int = N_LAMBDA, ratio: float = LAMBDA_RATIO) -> np.ndarray:
    """Log-spaced decreasing grid from ``lam_max`` to ``ratio * lam_max``."""
    if not lam_max > 0:
        return np.zeros(1)
    return np.geomspace(lam_max, ratio * lam_max, n)


@njit(cache=True)
def _violation(grad, beta, thresh, idx, n_idx):
    worst = 0.0
    for m in range(n_idx):
        j = idx[m]
        g = grad[j]
        if beta[j] > 0.0:
            v = abs(g - thresh[j])
        elif beta[j] < 0.0:
            v = abs(g + thresh[j])
        else:
            v = abs(g) - thresh[j]
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _sweep(G, grad, beta, diag, thresh, idx, n_idx):
    worst = 0.0
    p = grad.shape[0]
    for m in range(n_idx):
        j = idx[m]
        dj = diag[j]
        z = grad[j] + dj * beta[j]
        t = thresh[j]
        if z > t:
            new = (z - t) / dj
        elif z < -t:
            new = (z + t) / dj
        else:
            new = 0.0
        delta = new - beta[j]
        if delta != 0.0:
            for i in range(p):
                grad[i] -= G[j, i] * delta
            beta[j] = new
            if abs(delta) * dj > worst:
                worst = abs(delta) * dj
    return worst


@njit(cache=True)
def _cd_kernel(G, c, thresh, free_idx, beta, tol, max_sweeps):
    p = c.shape[0]
    diag = np.empty(p)
    for j in range(p):
        diag[j] = G[j, j]
    grad = c - G @ beta
    n_free = free_idx.shape[0]
    active = np.empty(n_free, dtype=np.int64)
    sweeps = 0
    while sweeps < max_sweeps:
        _sweep(G, grad, beta, diag, thresh, free_idx, n_free)
        sweeps += 1
        grad = c - G @ beta  # refresh to shed accumulated rounding
        if _violation(grad, beta, thresh, free_idx, n_free) < tol:
            return beta, sweeps
        n_act = 0
        for m in range(n_free):
            if beta[free_idx[m]] != 0.0:
                active[n_act] = free_idx[m]
                n_act += 1
        while sweeps < max_sweeps:
            worst = _sweep(G, grad, beta, diag, thresh, active, n_act)
            sweeps += 1
            if worst < tol or _violation(grad, beta, thresh, active, n_act) < tol:
                break
    return beta, -sweeps


def cd_quadratic(G: np.ndarray, c: np.ndarray, lam: float, penalty: np.ndarray,
                 beta: np.ndarray | None = None, tol: float = 1e-10, max_sweeps: int = 100_000) -> np.ndarray:
    """Minimise ``0.5 b'Gb - c'b + lam * sum(penalty_j |b_j|)`` by cyclic
    coordinate descent with covariance updates.

    ``penalty_j = 0`` leaves a coordinate unpenalized; ``inf`` (or a zero
    diagonal) pins it at 0.  Full sweeps alternate with sweeps over the active
    set; iteration stops once the optimality conditions hold to ``tol``.  Every
    ``POLISH_EVERY`` sweeps an active-set search is tried from the current
    iterate, which finishes problems whose design is nearly collinear.
    """
    G = np.ascontiguousarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    penalty = np.asarray(penalty, dtype=float)
    p = len(c)
    beta = np.zeros(p) if beta is None else np.array(beta, dtype=float)
    free = (np.diag(G) > 0) & np.isfinite(penalty)
    beta[~free] = 0.0
    pos = free & (penalty > 0)
    thresh = np.zeros(p)
    thresh[pos] = lam * penalty[pos]
    idx = np.flatnonzero(free).astype(np.int64)
    done = 0
    while done < max_sweeps:
        burst = min(POLISH_EVERY, max_sweeps - done)
        beta, sweeps = _cd_kernel(G, c, thresh, idx, beta, tol, burst)
        if sweeps > 0:
            return beta
        done += burst
        polished = _feature_sign(G, c, thresh, free, beta, tol)
        if polished is not None and _violation(c - G @ polished, polished, thresh, idx, len(idx)) < tol:
            return polished
    log.warning("coordinate descent stopped at the sweep limit")
    return beta


def _objective(G, c, thresh, b) -> float:
    return float(0.5 * b @ G @ b - c @ b + thresh @ np.abs(b))


def _feature_sign(G, c, thresh, free, beta, tol, max_iter: int = 200) -> np.ndarray | None:
    """Active-set search with explicit signs: solve the smooth problem on the
    active set, line-search over zero crossings when a sign flips, and admit
    the worst violator from the inactive set.  Finishes nearly collinear
    problems on which cyclic updates crawl.  ``None`` if not converged."""
    b = beta.copy()
    act = free & (b != 0)
    sgn = np.sign(b)
    for _ in range(max_iter):
        if act.any():
            idx = np.flatnonzero(act)
            Gaa = G[np.ix_(idx, idx)]
            rhs = c[idx] - thresh[idx] * sgn[idx]
            try:
                x = np.linalg.solve(Gaa, rhs)
            except np.linalg.LinAlgError:
                x = np.linalg.lstsq(Gaa, rhs, rcond=None)[0]
            cur = b[idx]
            if np.all(np.sign(x) == sgn[idx]):
                b[idx] = x
            else:
                d = x - cur
                with np.errstate(divide="ignore", invalid="ignore"):
                    cross = -cur / d
                ts = np.unique(np.append(cross[(cross > 0) & (cross < 1)], 1.0))
                vals = []
                for t in ts:
                    trial = b.copy()
                    trial[idx] = cur + t * d
                    vals.append(_objective(G, c, thresh, trial))
                t = ts[int(np.argmin(vals))]
                new = cur + t * d
                new[np.isclose(cross, t, rtol=0.0, atol=1e-15) | (np.abs(new) < 1e-300)] = 0.0
                b[idx] = new
                act = free & (b != 0)
                sgn = np.sign(b)
                continue
        g = G @ b - c
        viol = np.where(free & ~act, np.abs(g) - thresh, -np.inf)
        j = int(np.argmax(viol))
        if viol[j] <= tol:
            return b
        act[j] = True
        sgn[j] = -np.sign(g[j])
    return None


def adaptive_weights(X: np.ndarray, y_working: np.ndarray, sample_weight: np.ndarray | None = None,
                     gamma: float = 1.0, intercept: bool = True) -> tuple[np.ndarray, np.ndarray, bool]:
    """Adaptive-LASSO weights ``1 / max(|b_j|, 1e-8)**gamma`` from a (weighted)
    least-squares pilot on the standardized design.

    Returns ``(weights, pilot_coefficients, ridge_used)``; the intercept (when
    present) is excluded from both returned vectors.  A rank-deficient design
    falls back to a ridge solve with penalty ``1e-6``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y_working, dtype=float)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if X.shape[1] == 0:
        return np.zeros(0), np.zeros(0), False
    A =np.column_stack([np.ones(len(y)), X]) if intercept else X
    sw = np.sqrt(w)
    Aw, yw = A * sw[:, None], y * sw
    rank = np.linalg.matrix_rank(Aw)
    ridge_used = rank < A.shape[1]
    if ridge_used:
        log.warning("pilot design is rank deficient (%d < %d); using ridge fallback", rank, A.shape[1])
        pen = np.full(A.shape[1], RIDGE)
        if intercept:
            pen[0] = 0.0
        b = linalg.solve(Aw.T @ Aw + np.diag(pen), Aw.T @ yw, assume_a="sym")
    else:
        b = linalg.lstsq(Aw, yw)[0]
    b = b[1:] if intercept else b
    return 1.0 / np.maximum(np.abs(b), WEIGHT_FLOOR) ** gamma, b, bool(ridge_used)


def quadratic_kkt(G: np.ndarray, c: np.ndarray, lam: float, penalty: np.ndarray, beta: np.ndarray) -> float:
    """Largest violation of the optimality conditions of the problem solved by
    :func:`cd_quadratic` (0 at an exact solution)."""
    g = G @ beta - c
    worst = 0.0
    for j in range(len(beta)):
        if not np.isfinite(penalty[j]) or G[j, j] <= 0:
            continue
        t = lam * penalty[j] if penalty[j] > 0 else 0.0
        if beta[j] != 0:
            worst = max(worst, abs(g[j] + t * np.sign(beta[j])))
        else:
            worst = max(worst, abs(g[j]) - t)
    return max(worst, 0.0)
