"""The fitted trade-occurrence / price-change mixture and its persistence."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .. import distributions as D
from .gamlss import GamlssFit, gamlss_fit, theta_from_eta
from .lasso import DesignMatrix, Standardization
from .logistic import DegenerateResponseError, lasso_logistic_fit

log = logging.getLogger(__name__)

MODEL_VERSION = 1


@dataclass
class FittedMixtureModel:
    """Logistic LASSO for ``P(alpha_t = 1)`` and a GAMLSS for the price change
    given a trade; all coefficients live on the standardized scale."""

    family: str
    links: tuple[str, str, str, str]
    logistic_manifest: tuple[str, ...]
    logistic_std: Standardization
    logistic_intercept: float
    logistic_coef: np.ndarray
    logistic_lambda: float
    constant_pi: float | None
    gamlss_manifest: tuple[str, ...]
    gamlss_std: Standardization
    gamlss_intercepts: np.ndarray
    gamlss_coefs: np.ndarray
    gamlss_lambdas: np.ndarray
    window: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    # -- prediction ---------------------------------------------------------

    def _check(self, X, manifest, expected) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if manifest is not None and tuple(manifest) != expected:
            raise D.ContractViolation("design manifest differs from the fitted model")
        if X.shape[1] != len(expected):
            raise D.ContractViolation(f"design has {X.shape[1]} columns, model expects {len(expected)}")
        return X

    def predict_pi(self, X, manifest=None) -> np.ndarray:
        X = self._check(X, manifest, self.logistic_manifest)
        if self.constant_pi is not None:
            return np.full(len(X), self.constant_pi)
        Z = self.logistic_std.apply(X)
        return expit(self.logistic_intercept + Z @ self.logistic_coef)

    def predict_eta(self, X, manifest=None) -> np.ndarray:
        X = self._check(X, manifest, self.gamlss_manifest)
        Z = self.gamlss_std.apply(X)
        return self.gamlss_intercepts[:, None] + self.gamlss_coefs @ Z.T

    def predict_theta(self, X, manifest=None) -> D.Theta:
        return theta_from_eta(self.links, self.predict_eta(X, manifest))

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "family": self.family,
            "links": list(self.links),
            "logistic": {
                "manifest": list(self.logistic_manifest),
                "standardization": self.logistic_std.to_dict(),
                "intercept": self.logistic_intercept,
                "coef": self.logistic_coef.tolist(),
                "lambda": self.logistic_lambda,
                "constant_pi": self.constant_pi,
            },
            "gamlss": {
                "manifest": list(self.gamlss_manifest),
                "standardization": self.gamlss_std.to_dict(),
                "intercepts": self.gamlss_intercepts.tolist(),
                "coefs": self.gamlss_coefs.tolist(),
                "lambdas": self.gamlss_lambdas.tolist(),
            },
            "window": self.window,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedMixtureModel":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        lg, gm = d["logistic"], d["gamlss"]
        return cls(d["family"], tuple(d["links"]), tuple(lg["manifest"]),
                   Standardization.from_dict(lg["standardization"]), float(lg["intercept"]),
                   np.asarray(lg["coef"], float), float(lg["lambda"]), lg["constant_pi"],
                   tuple(gm["manifest"]), Standardization.from_dict(gm["standardization"]),
                   np.asarray(gm["intercepts"], float), np.asarray(gm["coefs"], float),
                   np.asarray(gm["lambdas"], float), d.get("window", {}), d.get("diagnostics", {}))

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "FittedMixtureModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def model_id(self) -> str:
        return self.window.get("id", f"mix_{self.family}")


def fit_mixture(logit_design: DesignMatrix, alpha, gamlss_design: DesignMatrix, dp,
                family: str = "jsu", links=None, window: dict | None = None) -> FittedMixtureModel:
    """Fit both stages.  ``gamlss_design`` and ``dp`` hold only the traded steps."""
    alpha = np.asarray(alpha, dtype=float)
    constant_pi = None
    diag: dict = {}
    p = logit_design.X.shape[1]
    try:
        path = lasso_logistic_fit(logit_design.standardized, alpha,
                                  constant=logit_design.standardization.constant)
        b0, coef, lam = path.intercept, path.coef, path.lam
        diag["logistic_df"] = int(path.df[path.selected])
    except DegenerateResponseError:
        constant_pi = float(alpha.mean())
        log.warning("constant trade indicator; using pi = %g", constant_pi)
        b0, coef, lam = 0.0, np.zeros(p), 0.0
    g: GamlssFit = gamlss_fit(gamlss_design.standardized, dp, family, links,
                              constant=gamlss_design.standardization.constant)
    diag.update({"gamlss_cycles": g.cycles, "gamlss_converged": bool(g.converged), "gamlss_bic": g.bic,
                 "gamlss_loglik": g.loglik, "gamlss_df": g.df, "adaptive_ridge_fallback": bool(g.ridge_fallback),
                 "rejected_updates": g.rejected_updates, "n_logistic": int(len(alpha)), "n_gamlss": int(len(dp))})
    return FittedMixtureModel(family, tuple(g.links), logit_design.manifest, logit_design.standardization,
                              float(b0), np.asarray(coef, float), float(lam), constant_pi,
                              gamlss_design.manifest, gamlss_design.standardization,
                              g.intercepts, g.coefs, g.lambdas, dict(window or {}), diag)
