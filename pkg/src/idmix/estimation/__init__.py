"""Penalized estimation of the trade-occurrence and price-change models."""
from .gamlss import GamlssFit, gamlss_fit
from .lasso import DesignMatrix, Standardization, adaptive_weights, bic, cd_quadratic, lambda_grid
from .logistic import DegenerateResponseError, LogisticPath, kkt_violation, lasso_logistic_fit
from .model import FittedMixtureModel, fit_mixture

__all__ = [
    "DegenerateResponseError", "DesignMatrix", "FittedMixtureModel", "GamlssFit", "LogisticPath",
    "Standardization", "adaptive_weights", "bic", "cd_quadratic", "fit_mixture", "gamlss_fit",
    "kkt_violation", "lambda_grid", "lasso_logistic_fit",
]
