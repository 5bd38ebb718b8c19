"""Ali-Mikhail-Haq bivariate logistic distribution.

The joint cdf with standard logistic marginals is

    H(u, v) = 1 / (1 + exp(-u) + exp(-v) + (1 - omega) exp(-u - v)),

with ``omega`` in [-1, 1].  ``omega = 0`` gives independence and
``omega = 1`` the Gumbel type 1 distribution.  Locations ``mu`` and ``nu``
shift the two coordinates, so the located cdf is ``H(u - mu, v - nu)``.

All evaluations go through log-sum-exp so that arguments of order +-40
(common during likelihood maximisation) neither overflow nor lose the
tails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "AmhParams",
    "logistic_cdf",
    "logistic_pdf",
    "amh_cdf",
    "amh_density",
    "amh_cdf_series",
    "series_terms",
    "sample",
    "conditional_mgf",
    "conditional_mean",
    "latent_covariance",
    "latent_correlation",
    "LATENT_VARIANCE",
]

LATENT_VARIANCE = math.pi**2 / 3.0
MAX_SERIES_TERMS = 1_000_000


@dataclass(frozen=True)
class AmhParams:
    """Association and locations of an AMH bivariate logistic law."""

    omega: float
    mu: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must lie in [-1, 1], got {self.omega}")
        if not (math.isfinite(self.mu) and math.isfinite(self.nu)):
            raise ValueError("locations must be finite")


def logistic_cdf(u):
    """Standard logistic cdf, exact at +-inf."""
    return special.expit(u)


def logistic_pdf(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-np.logaddexp(0.0, -u) - np.logaddexp(0.0, u))


def _log1m(omega):
    # log(1 - omega), -inf at omega = 1
    with np.errstate(divide="ignore"):
        return np.log1p(-np.asarray(omega, dtype=float))


def log_amh_cdf(a, b, omega):
    """log H(a, b; omega) for standardised arguments, broadcasting.

    ``a`` and ``b`` may be infinite.  H is zero whenever either argument is
    ``-inf``, which also covers the indeterminate ``-a - b`` when the other
    argument is ``+inf``.
    """
    a, b, omega = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(omega, dtype=float)
    )
    with np.errstate(invalid="ignore", over="ignore"):
        cross = _log1m(omega) - a - b
        cross = np.where(np.isnan(cross), np.inf, cross)
        lse = np.logaddexp(np.logaddexp(0.0, -a), np.logaddexp(-b, cross))
    return -lse


def amh_cdf(p: AmhParams, u, v):
    """Joint cdf ``P(X* <= u, Y* <= v)``."""
    u = np.asarray(u, dtype=float) - p.mu
    v = np.asarray(v, dtype=float) - p.nu
    out = np.exp(log_amh_cdf(u, v, p.omega))
    return out[()] if out.ndim == 0 else out


def amh_density(p: AmhParams, u, v):
    """Mixed partial derivative of :func:`amh_cdf`.

    With ``D = 1 + A + B + (1 - w) A B`` and ``A = exp(-u)``, ``B = exp(-v)``
    the density is ``A B [2 (1 + (1-w) A)(1 + (1-w) B) - (1-w) D] / D**3``,
    evaluated as ``(A B / D**2) [2 (1 + cA)(1 + cB) / D - c]`` with ``c = 1 - w``.
    Computed in log space on the factors that can overflow.
    """
    a = np.asarray(u, dtype=float) - p.mu
    b = np.asarray(v, dtype=float) - p.nu
    c = 1.0 - p.omega
    log_h = log_amh_cdf(a, b, p.omega)
    lc = _log1m(p.omega)
    with np.errstate(over="ignore", invalid="ignore"):
        # (1 + c A)(1 + c B) / D lies in [0, 1] up to rounding
        ga = np.logaddexp(0.0, lc - a)
        gb = np.logaddexp(0.0, lc - b)
        ratio = np.exp(ga + gb + log_h)
        out = np.exp(-a - b + 2.0 * log_h) * (2.0 * ratio - c)
    out = np.where(np.isfinite(out), out, 0.0)
    return out[()] if out.ndim == 0 else out


def series_terms(omega: float, tol: float = 1e-12) -> int:
    """Number of terms so that the geometric tail of the series is below ``tol``."""
    w = abs(omega)
    if w == 0.0:
        return 1
    if w >= 1.0:
        raise ValueError("geometric series does not converge for |omega| = 1")
    n = math.ceil(math.log(tol * (1.0 - w)) / math.log(w))
    return int(min(max(n, 1), MAX_SERIES_TERMS))


def amh_cdf_series(p: AmhParams, u, v, n_terms: int | None = None):
    """Truncated expansion ``F G sum_{n < n_terms} (w (1-F)(1-G))**n``.

    With one term this is the product of marginals; with two it is the
    Gumbel type 2 (FGM-type) cdf with the same ``omega``.
    """
    if abs(p.omega) >= 1.0:
        raise ValueError("series expansion requires |omega| < 1")
    if n_terms is None:
        n_terms = series_terms(p.omega)
    if n_terms < 1:
        raise ValueError("n_terms must be positive")
    fu = logistic_cdf(np.asarray(u, dtype=float) - p.mu)
    gv = logistic_cdf(np.asarray(v, dtype=float) - p.nu)
    ratio = p.omega * (1.0 - fu) * (1.0 - gv)
    total = np.zeros(np.broadcast(fu, gv).shape)
    term = np.ones_like(total)
    for _ in range(n_terms):
        total = total + term
        term = term * ratio
    out = fu * gv * total
    return out[()] if np.ndim(out) == 0 else out


def _geometric(rng: np.random.Generator, success: float, size):
    # support {1, 2, ...}, mean 1 / success
    return rng.geometric(success, size=size)


def sample(p: AmhParams, rng_seed, n: int, method: str = "inverse") -> np.ndarray:
    """Draw ``n`` pairs from the AMH law via its geometric mixture form.

    For ``omega`` in (0, 1) the cdf is ``E[F(z1)**M F(z2)**M]`` with
    ``M ~ geom(1 - omega)`` on {1, 2, ...} and ``z = u - log(1 - omega)``.

    method="inverse" draws M and then each coordinate as the maximum of M
    logistic variables located at ``log(1 - omega)`` via the inverse cdf of
    the maximum.  method="maxmin" performs the literal max-of-min
    construction: M rows, each the minimum of its own geom(1 - omega)
    number of standard logistic draws.  Both have the same law; the second
    costs O(n / (1 - omega)**2) draws.

    ``omega = 0`` falls back to independent logistic draws.  Negative
    ``omega`` has no mixture representation and is rejected, as is
    ``omega = 1``.

    Returns an ``(n, 2)`` array.
    """
    rng = np.random.default_rng(rng_seed)
    w = p.omega
    if w == 0.0:
        draws = rng.logistic(size=(n, 2))
    elif 0.0 < w < 1.0:
        if method == "inverse":
            draws = _sample_inverse(rng, w, n)
        elif method == "maxmin":
            draws = _sample_maxmin(rng, w, n)
        else:
            raise ValueError(f"unknown sampling method {method!r}")
    else:
        raise ValueError(f"sampler requires omega in [0, 1), got {w}")
    draws[:, 0] += p.mu
    draws[:, 1] += p.nu
    return draws


def _sample_inverse(rng, w, n):
    m = _geometric(rng, 1.0 - w, n).astype(float)
    unif = rng.random((n, 2))
    # max of m iid variables with cdf G has cdf G**m: invert G(z) = U**(1/m)
    logu = np.log(unif) / m[:, None]
    z = logu - np.log(-np.expm1(logu))  # logit(exp(logu))
    return z + math.log1p(-w)


def _sample_maxmin(rng, w, n):
    out = np.empty((n, 2))
    m = _geometric(rng, 1.0 - w, n)
    for col in range(2):
        rows = int(m.sum())
        sizes = _geometric(rng, 1.0 - w, rows)
        flat = rng.logistic(size=int(sizes.sum()))
        row_start = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        row_min = np.minimum.reduceat(flat, row_start)
        draw_start = np.concatenate(([0], np.cumsum(m)[:-1]))
        out[:, col] = np.maximum.reduceat(row_min, draw_start)
    return out


def conditional_mgf(p: AmhParams, t: float, theta: float) -> float:
    """``E[exp(t Y*) | X* = theta]`` for the standardised law (|t| < 1).

    Locations are expected to be folded into ``theta`` by the caller.
    """
    if not -1.0 < t < 1.0:
        raise ValueError("the conditional MGF exists only for t in (-1, 1)")
    w = p.omega
    e = math.exp(-theta)
    log_front = (
        special.gammaln(t + 2.0)
        + special.gammaln(1.0 - t)
        - math.log(2.0)
        - t * math.log1p(e)
        - (1.0 - t) * math.log1p((1.0 - w) * e)
    )
    bracket = 1.0 + w + (1.0 - w) * (e + (1.0 + e) * (1.0 - t) / (1.0 + t))
    return math.exp(log_front) * bracket


def conditional_mean(p: AmhParams, theta):
    """Regression of Y* on X*: ``E[Y* | X* = theta]`` (standardised law)."""
    w = p.omega
    theta = np.asarray(theta, dtype=float)
    e = np.exp(-theta)
    out = (
        1.0
        + np.log1p((1.0 - w) * e)
        - np.log1p(e)
        - 2.0 * (1.0 - w) * (1.0 + e) / (1.0 + w + (1.0 - w) * (1.0 + 2.0 * e))
    )
    return out[()] if out.ndim == 0 else out


def latent_covariance(omega: float, n_terms: int | None = None, tol: float = 1e-12) -> float:
    """``Cov(X*, Y*) = sum_{n>=1} omega**n / n**2``.

    With ``n_terms`` given the plain partial sum is returned.  Otherwise the
    number of terms follows the tail bound ``|w|**(n+1) / ((n+1)**2 (1-|w|))``
    and the endpoints use their closed forms (pi**2/6 at 1, -pi**2/12 at -1).
    """
    if not -1.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [-1, 1]")
    if n_terms is not None:
        n = np.arange(1, n_terms + 1, dtype=float)
        return float(np.sum(omega**n / n**2))
    if omega == 1.0:
        return math.pi**2 / 6.0
    if omega == -1.0:
        return -(math.pi**2) / 12.0
    if omega == 0.0:
        return 0.0
    return latent_covariance(omega, n_terms=series_terms(omega, tol))


def latent_correlation(omega: float, n_terms: int | None = None) -> float:
    return latent_covariance(omega, n_terms) / LATENT_VARIANCE
