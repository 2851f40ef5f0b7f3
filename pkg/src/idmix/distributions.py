"""Four-parameter return distributions and link functions.

Two families are supported, both parameterized so that ``mu`` is the mean and
``sigma`` the standard deviation:

``jsu``
    Johnson's S_U.  ``nu`` controls skewness (``nu > 0`` is right skew),
    ``tau > 0`` the tails (large ``tau`` approaches the normal).
``sst``
    Two-piece (Fernandez-Steel) skew-t, standardized to mean/sd.  ``nu > 0``
    is the skewness ratio (``nu = 1`` symmetric), ``tau > 2`` the degrees of
    freedom.

All functions broadcast over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

FAMILIES = ("jsu", "sst")

# Lower bound on the skew-t tail parameter; keeps the standardizing constant finite.
SST_TAU_MIN = 2.0 + 1e-6
SIGMA_MIN = 1e-6

_LOG_2PI = np.log(2.0 * np.pi)


class ParameterError(ValueError):
    """Raised when a parameter vector lies outside the family's domain."""


class ContractViolation(ValueError):
    """Raised when an argument violates a documented precondition."""


@dataclass(frozen=True)
class Theta:
    """Distribution parameters ``(mu, sigma, nu, tau)``; fields may be arrays."""

    mu: np.ndarray | float
    sigma: np.ndarray | float
    nu: np.ndarray | float
    tau: np.ndarray | float

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.asarray(v, dtype=float) for v in (self.mu, self.sigma, self.nu, self.tau))

    def stack(self) -> np.ndarray:
        """Return a ``(4, n)`` array of broadcast parameters."""
        return np.stack(np.broadcast_arrays(*self.arrays())).reshape(4, -1)

    @classmethod
    def from_stack(cls, arr: np.ndarray) -> "Theta":
        return cls(arr[0], arr[1], arr[2], arr[3])


def _check_family(family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def validate(family: str, theta: Theta) -> None:
    """Raise :class:`ParameterError` unless ``theta`` is valid for ``family``."""
    _check_family(family)
    mu, sigma, nu, tau = theta.arrays()
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(nu))):
        raise ParameterError("mu and nu must be finite")
    if not np.all(sigma > 0):
        raise ParameterError("sigma must be positive")
    if family == "jsu":
        if not np.all(tau > 0):
            raise ParameterError("tau must be positive for jsu")
    else:
        if not np.all(nu > 0):
            raise ParameterError("nu must be positive for sst")
        if not np.all(tau >= SST_TAU_MIN):
            raise ParameterError(f"tau must exceed {SST_TAU_MIN} for sst")


def clamp(family: str, theta: Theta) -> tuple[Theta, int]:
    """Project parameters onto the family domain; return the projected vector and
    the number of entries that were moved."""
    _check_family(family)
    mu, sigma, nu, tau = (np.array(a, dtype=float) for a in theta.arrays())
    moved = np.zeros(np.broadcast(mu, sigma, nu, tau).shape, dtype=bool)
    bad = ~(sigma >= SIGMA_MIN)
    moved |= bad
    sigma = np.where(bad, SIGMA_MIN, sigma)
    if family == "jsu":
        bad = ~(tau >= 1e-6)
        moved |= bad
        tau = np.where(bad, 1e-6, tau)
    else:
        bad = ~(nu >= 1e-6)
        moved |= bad
        nu = np.where(bad, 1e-6, nu)
        bad = ~(tau >= SST_TAU_MIN)
        moved |= bad
        tau = np.where(bad, SST_TAU_MIN, tau)
    return Theta(mu, sigma, nu, tau), int(moved.sum())


# ---------------------------------------------------------------------------
# Johnson's S_U


class _JSUTerms(NamedTuple):
    loc: np.ndarray     # location of the un-reparameterized variable
    scale: np.ndarray   # sigma * c
    c: np.ndarray
    sqrt_w: np.ndarray
    a: np.ndarray       # nu / tau
    v: np.ndarray       # variance of sinh((N + nu) / tau)
    wm1: np.ndarray


def _jsu_terms(mu, sigma, nu, tau) -> _JSUTerms:
    a = nu / tau
    wm1 = np.expm1(1.0 / tau**2)
    w = 1.0 + wm1
    v = 0.5 * wm1 * (w * np.cosh(2.0 * a) + 1.0)
    c = 1.0 / np.sqrt(v)
    scale = sigma * c
    sqrt_w = np.sqrt(w)
    loc = mu - scale * sqrt_w * np.sinh(a)
    return _JSUTerms(loc, scale, c, sqrt_w, a, v, wm1)


def _jsu_logpdf(y, mu, sigma, nu, tau):
    tm = _jsu_terms(mu, sigma, nu, tau)
    z = (y - tm.loc) / tm.scale
    r = -nu + tau * np.arcsinh(z)
    return -np.log(tm.scale) + np.log(tau) - 0.5 * np.log1p(z * z) - 0.5 * _LOG_2PI - 0.5 * r * r


def _jsu_cdf(y, mu, sigma, nu, tau):
    tm = _jsu_terms(mu, sigma, nu, tau)
    z = (y - tm.loc) / tm.scale
    return special.ndtr(-nu + tau * np.arcsinh(z))


def _jsu_from_normal(e, mu, sigma, nu, tau):
    tm = _jsu_terms(mu, sigma, nu, tau)
    return tm.loc + tm.scale * np.sinh((e + nu) / tau)


def _jsu_score(y, mu, sigma, nu, tau):
    tm = _jsu_terms(mu, sigma, nu, tau)
    s, c, a = tm.scale, tm.c, tm.a
    w = 1.0 + tm.wm1
    z = (y - tm.loc) / s
    asz = np.arcsinh(z)
    r = -nu + tau * asz
    one_z2 = 1.0 + z * z
    dl_dz = -z / one_z2 - r * tau / np.sqrt(one_z2)
    dl_dloc = -dl_dz / s
    dl_dscale = -1.0 / s - dl_dz * z / s

    cosh2a = np.cosh(2.0 * a)
    dv_da = tm.wm1 * w * np.sinh(2.0 * a)
    dv_dw = w * cosh2a + 0.5 * (1.0 - cosh2a)
    dc_dv = -c / (2.0 * tm.v)
    dc_dnu = dc_dv * dv_da / tau
    dc_dtau = dc_dv * (dv_da * (-nu / tau**2) + dv_dw * (-2.0 * w / tau**3))

    e_shift = tm.sqrt_w * np.sinh(a)
    de_dnu = tm.sqrt_w * np.cosh(a) / tau
    de_dtau = -tm.sqrt_w * np.sinh(a) / tau**3 - tm.sqrt_w * np.cosh(a) * nu / tau**2

    ds_dnu = sigma * dc_dnu
    ds_dtau = sigma * dc_dtau
    dloc_dsigma = -c * e_shift
    dloc_dnu = -(ds_dnu * e_shift + s * de_dnu)
    dloc_dtau = -(ds_dtau * e_shift + s * de_dtau)

    d_mu = dl_dloc
    d_sigma = dl_dloc * dloc_dsigma + dl_dscale * c
    d_nu = r + dl_dloc * dloc_dnu + dl_dscale * ds_dnu
    d_tau = 1.0 / tau - r * asz + dl_dloc * dloc_dtau + dl_dscale * ds_dtau
    return d_mu, d_sigma, d_nu, d_tau


# ---------------------------------------------------------------------------
# Two-piece skew-t


class _SSTTerms(NamedTuple):
    loc: np.ndarray     # mode of the two-piece t
    scale: np.ndarray   # sigma / s1
    m1: np.ndarray
    s1: np.ndarray
    g: np.ndarray
    log_beta: np.ndarray


def _sst_moments(nu, tau):
    """First moment and standard deviation of the unit-scale two-piece t."""
    log_beta = special.betaln(0.5, tau / 2.0)
    g = np.exp(0.5 * np.log(tau) - np.log(tau - 1.0) - log_beta)
    m1 = 2.0 * (nu - 1.0 / nu) * g
    m2 = tau / (tau - 2.0) * (nu**2 + nu**-2 - 1.0)
    s1 = np.sqrt(m2 - m1**2)
    return m1, s1, g, log_beta


def _sst_terms(mu, sigma, nu, tau) -> _SSTTerms:
    m1, s1, g, log_beta = _sst_moments(nu, tau)
    scale = sigma / s1
    loc = mu - scale * m1
    return _SSTTerms(loc, scale, m1, s1, g, log_beta)


def _sst_logpdf(y, mu, sigma, nu, tau):
    tm = _sst_terms(mu, sigma, nu, tau)
    z = (y - tm.loc) / tm.scale
    k = np.where(z < 0, nu**2, nu**-2)
    log_c = np.log(2.0) + np.log(nu) - np.log1p(nu**2) - tm.log_beta - 0.5 * np.log(tau)
    return log_c - np.log(tm.scale) - 0.5 * (tau + 1.0) * np.log1p(k * z * z / tau)


def _sst_cdf(y, mu, sigma, nu, tau):
    tm = _sst_terms(mu, sigma, nu, tau)
    z = (y - tm.loc) / tm.scale
    nu2 = nu**2
    lower = 2.0 / (1.0 + nu2) * special.stdtr(tau, nu * z)
    upper = 1.0 / (1.0 + nu2) + 2.0 * nu2 / (1.0 + nu2) * (special.stdtr(tau, z / nu) - 0.5)
    return np.where(z < 0, lower, upper)


def _sst_quantile(p, mu, sigma, nu, tau):
    tm = _sst_terms(mu, sigma, nu, tau)
    nu2 = nu**2
    p0 = 1.0 / (1.0 + nu2)
    # Evaluate both branches on admissible arguments only.
    p_low = np.minimum(p, p0)
    p_high = np.maximum(p, p0)
    z_low = special.stdtrit(tau, np.clip(p_low * (1.0 + nu2) / 2.0, 1e-300, 0.5)) / nu
    z_high = nu * special.stdtrit(tau, np.clip(0.5 + (p_high - p0) * (1.0 + nu2) / (2.0 * nu2), 0.5, 1.0))
    z = np.where(p < p0, z_low, z_high)
    return tm.loc + tm.scale * z


def _sst_score(y, mu, sigma, nu, tau):
    tm = _sst_terms(mu, sigma, nu, tau)
    s0, m1, s1, g = tm.scale, tm.m1, tm.s1, tm.g
    z = (y - tm.loc) / s0
    below = z < 0
    k = np.where(below, nu**2, nu**-2)
    kz2 = k * z * z
    dl_dz = -(tau + 1.0) * k * z / (tau + kz2)
    dl_dloc = -dl_dz / s0
    dl_dscale = -1.0 / s0 - dl_dz * z / s0

    dk_dnu = np.where(below, 2.0 * nu, -2.0 * nu**-3)
    dl_dk = -0.5 * (tau + 1.0) * z * z / (tau + kz2)
    explicit_nu = 1.0 / nu - 2.0 * nu / (1.0 + nu**2) + dl_dk * dk_dnu
    psi_diff = special.digamma(tau / 2.0) - special.digamma((tau + 1.0) / 2.0)
    explicit_tau = (-0.5 * psi_diff - 0.5 / tau
                    - 0.5 * np.log1p(kz2 / tau) + 0.5 * (tau + 1.0) * kz2 / (tau * (tau + kz2)))

    h = nu**2 + nu**-2 - 1.0
    dm1_dnu = 2.0 * (1.0 + nu**-2) * g
    dm1_dtau = m1 * (0.5 / tau - 1.0 / (tau - 1.0) - 0.5 * psi_diff)
    dm2_dnu = tau / (tau - 2.0) * (2.0 * nu - 2.0 * nu**-3)
    dm2_dtau = -2.0 * h / (tau - 2.0) ** 2
    ds1_dnu = (dm2_dnu - 2.0 * m1 * dm1_dnu) / (2.0 * s1)
    ds1_dtau = (dm2_dtau - 2.0 * m1 * dm1_dtau) / (2.0 * s1)

    dscale_dnu = -sigma * ds1_dnu / s1**2
    dscale_dtau = -sigma * ds1_dtau / s1**2
    dloc_dsigma = -m1 / s1
    dloc_dnu = -(dscale_dnu * m1 + s0 * dm1_dnu)
    dloc_dtau = -(dscale_dtau * m1 + s0 * dm1_dtau)

    d_mu = dl_dloc
    d_sigma = dl_dloc * dloc_dsigma + dl_dscale / s1
    d_nu = explicit_nu + dl_dloc * dloc_dnu + dl_dscale * dscale_dnu
    d_tau = explicit_tau + dl_dloc * dloc_dtau + dl_dscale * dscale_dtau
    return d_mu, d_sigma, d_nu, d_tau


# ---------------------------------------------------------------------------
# Public evaluation surface


def logpdf(family: str, theta: Theta, y) -> np.ndarray:
    validate(family, theta)
    y = np.asarray(y, dtype=float)
    fn = _jsu_logpdf if family == "jsu" else _sst_logpdf
    return fn(y, *theta.arrays())


def density(family: str, theta: Theta, y) -> np.ndarray:
    """Probability density of ``y``."""
    return np.exp(logpdf(family, theta, y))


def cdf(family: str, theta: Theta, y) -> np.ndarray:
    validate(family, theta)
    y = np.asarray(y, dtype=float)
    fn = _jsu_cdf if family == "jsu" else _sst_cdf
    return fn(y, *theta.arrays())


def quantile(family: str, theta: Theta, p) -> np.ndarray:
    """Inverse CDF, in closed form for both families."""
    validate(family, theta)
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0) & (p < 1)):
        raise ContractViolation("probabilities must lie in the open interval (0, 1)")
    mu, sigma, nu, tau = theta.arrays()
    if family == "jsu":
        return _jsu_from_normal(special.ndtri(p), mu, sigma, nu, tau)
    return _sst_quantile(p, mu, sigma, nu, tau)


def base_draws(family: str, rng: np.random.Generator, size) -> np.ndarray:
    """Draw the family's base variates: standard normals for S_U, uniforms for skew-t."""
    _check_family(family)
    if family == "jsu":
        return rng.standard_normal(size)
    # Generator.random is on [0, 1); nudge off zero so the inverse CDF stays finite.
    return np.maximum(rng.random(size), np.finfo(float).tiny)


def transform_draws(family: str, theta: Theta, draws) -> np.ndarray:
    """Map base variates from :func:`base_draws` to the distribution."""
    mu, sigma, nu, tau = theta.arrays()
    if family == "jsu":
        return _jsu_from_normal(np.asarray(draws, dtype=float), mu, sigma, nu, tau)
    return _sst_quantile(np.asarray(draws, dtype=float), mu, sigma, nu, tau)


def sample(family: str, theta: Theta, rng: np.random.Generator, size=None) -> np.ndarray:
    validate(family, theta)
    if size is None:
        size = np.broadcast(*theta.arrays()).shape
    return transform_draws(family, theta, base_draws(family, rng, size))


def score(family: str, theta: Theta, y) -> np.ndarray:
    """Derivatives of the log-density with respect to ``(mu, sigma, nu, tau)``.

    Returns an array of shape ``(4,) + broadcast shape``.
    """
    validate(family, theta)
    y = np.asarray(y, dtype=float)
    fn = _jsu_score if family == "jsu" else _sst_score
    return np.stack(np.broadcast_arrays(*fn(y, *theta.arrays())))


def loglik(family: str, theta: Theta, y) -> float:
    return float(np.sum(logpdf(family, theta, y)))


# ---------------------------------------------------------------------------
# Link functions


class Link(NamedTuple):
    name: str
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    inverse_derivative: Callable[[np.ndarray], np.ndarray]  # d theta / d eta
    lower: float  # open lower bound of the parameter domain


def _logident_forward(z):
    z = np.asarray(z, dtype=float)
    return np.where(z <= 1.0, np.log(np.minimum(z, 1.0)), z - 1.0)


def _logident_inverse(eta):
    eta = np.asarray(eta, dtype=float)
    return np.where(eta <= 0.0, np.exp(np.minimum(eta, 0.0)), eta + 1.0)


def _logident_deriv(eta):
    eta = np.asarray(eta, dtype=float)
    return np.where(eta <= 0.0, np.exp(np.minimum(eta, 0.0)), 1.0)


LINKS: dict[str, Link] = {
    "identity": Link("identity", lambda z: np.asarray(z, dtype=float),
                     lambda e: np.asarray(e, dtype=float),
                     lambda e: np.ones_like(np.asarray(e, dtype=float)), -np.inf),
    "log": Link("log", lambda z: np.log(np.asarray(z, dtype=float)),
                lambda e: np.exp(np.asarray(e, dtype=float)),
                lambda e: np.exp(np.asarray(e, dtype=float)), 0.0),
    "logident": Link("logident", _logident_forward, _logident_inverse, _logident_deriv, 0.0),
    "logshift2": Link("logshift2", lambda z: np.log(np.asarray(z, dtype=float) - 2.0),
                      lambda e: 2.0 + np.exp(np.asarray(e, dtype=float)),
                      lambda e: np.exp(np.asarray(e, dtype=float)), 2.0),
}

DEFAULT_LINKS: dict[str, tuple[str, str, str, str]] = {
    "jsu": ("identity", "logident", "identity", "log"),
    "sst": ("identity", "logident", "log", "logshift2"),
}


def validate_links(family: str, links) -> tuple[str, ...]:
    links = tuple(links)
    if len(links) != 4 or any(name not in LINKS for name in links):
        raise ValueError(f"links must name four of {sorted(LINKS)}")
    if "logshift2" in links[:3] or (links[3] == "logshift2" and family != "sst"):
        raise ValueError("logshift2 is reserved for the skew-t tail parameter")
    return links


def link_forward(link: str, z) -> np.ndarray:
    spec = LINKS[link]
    z = np.asarray(z, dtype=float)
    if not np.all(z > spec.lower):
        raise ContractViolation(f"{link} link requires z > {spec.lower}")
    return spec.forward(z)


def link_inverse(link: str, eta) -> np.ndarray:
    return LINKS[link].inverse(eta)
