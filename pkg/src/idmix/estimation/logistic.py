"""L1-penalized logistic regression for the trade indicator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .lasso import bic, cd_quadratic, lambda_grid

W_FLOOR = 1e-5


class DegenerateResponseError(ValueError):
    """The response has a single class; no slope can be estimated."""


@dataclass
class LogisticPath:
    lambdas: np.ndarray
    intercepts: np.ndarray  # (L,)
    coefs: np.ndarray  # (L, p), standardized scale
    loglik: np.ndarray
    df: np.ndarray
    bic: np.ndarray
    selected: int

    @property
    def intercept(self) -> float:
        return float(self.intercepts[self.selected])

    @property
    def coef(self) -> np.ndarray:
        return self.coefs[self.selected]

    @property
    def lam(self) -> float:
        return float(self.lambdas[self.selected])


def logistic_loglik(Z: np.ndarray, y: np.ndarray, intercept: float, beta: np.ndarray) -> float:
    eta = intercept + Z @ beta
    return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))


def penalized_gradient(Z, y, intercept, beta):
    """Gradient of ``-loglik / n`` with respect to ``(intercept, beta)``."""
    r = (np.asarray(y, float) - expit(intercept + Z @ beta)) / len(y)
    return -np.concatenate([[r.sum()], Z.T @ r])


def _irls_lasso(A: np.ndarray, y: np.ndarray, lam: float, penalty: np.ndarray, b: np.ndarray,
                tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    n = len(y)
    eta = A @ b
    for _ in range(max_iter):
        p = expit(eta)
        w = np.maximum(p * (1 - p), W_FLOOR)
        G = (A * w[:, None]).T @ A / n
        c = A.T @ (w * eta + (y - p)) / n
        new = cd_quadratic(G, c, lam, penalty, b, tol=0.1 * tol)
        step = np.max(np.abs(new - b))
        b = new
        eta = A @ b
        if step < tol or _kkt(A, y, eta, b, lam, penalty) < tol:
            break
    return b


def _kkt(A, y, eta, b, lam, penalty) -> float:
    g = -(A.T @ (y - expit(eta))) / len(y)
    free = np.isfinite(penalty)
    t = np.where(free, lam * np.where(free, penalty, 0.0), 0.0)
    v = np.where(b != 0, np.abs(g + t * np.sign(b)), np.maximum(np.abs(g) - t, 0.0))
    return float(v[free].max())


def lasso_logistic_fit(Z: np.ndarray, y, lambdas=None, constant: np.ndarray | None = None) -> LogisticPath:
    """Fit ``-loglik/n + lam * ||beta||_1`` along a lambda path on the
    standardized design ``Z`` (intercept unpenalized) and select by BIC.

    ``lambdas=None`` uses 100 log-spaced values from the smallest lambda that
    zeroes every slope down to ``1e-4`` of it.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = Z.shape
    ybar = y.mean()
    if ybar in (0.0, 1.0):
        raise DegenerateResponseError("trade indicator is constant in the training window")
    A = np.column_stack([np.ones(n), Z])
    penalty = np.ones(p + 1)
    penalty[0] = 0.0
    if constant is not None:
        penalty[1:][np.asarray(constant, bool)] = np.inf
    b0 = np.log(ybar / (1 - ybar))
    if lambdas is None:
        score = np.abs(Z.T @ (y - ybar)) / n
        lam_max = float(np.max(np.where(np.isfinite(penalty[1:]), score, 0.0)))
        lambdas = lambda_grid(lam_max)
    lambdas = np.asarray(lambdas, dtype=float)

    b = np.zeros(p + 1)
    b[0] = b0
    coefs, ll = [], []
    for lam in lambdas:
        b = _irls_lasso(A, y, lam, penalty, b)
        coefs.append(b.copy())
        ll.append(logistic_loglik(Z, y, b[0], b[1:]))
    coefs = np.asarray(coefs)
    ll = np.asarray(ll)
    df = 1 + np.count_nonzero(coefs[:, 1:], axis=1)
    crit = np.array([bic(l, d, n) for l, d in zip(ll, df)])
    return LogisticPath(lambdas, coefs[:, 0], coefs[:, 1:], ll, df, crit, int(np.argmin(crit)))


def kkt_violation(Z, y, intercept, beta, lam, constant=None) -> float:
    """Largest violation of the LASSO optimality conditions (0 when optimal)."""
    g = penalized_gradient(np.asarray(Z, float), y, intercept, beta)
    worst = abs(g[0])
    free = np.ones(len(beta), bool) if constant is None else ~np.asarray(constant, bool)
    gb = g[1:][free]
    bb = np.asarray(beta)[free]
    nz = bb != 0
    if nz.any():
        worst = max(worst, float(np.max(np.abs(gb[nz] + lam * np.sign(bb[nz])))))
    if (~nz).any():
        worst = max(worst, float(np.max(np.abs(gb[~nz]) - lam)))
    return max(worst, 0.0)
