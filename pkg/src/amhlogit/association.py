"""Association measures between the observed X and Y.

The global odds ratio at level k compares the odds of ``Y > k`` given
``X = 1`` with the same odds given ``X = 0``.  Under the AMH model it has
the closed form

    psi_k = (1 + w + A + B + (1 - w) A B) / ((1 + (1 - w) A)(1 + (1 - w) B))

with ``A = exp(-(theta - Z1 beta_x))`` and ``B = exp(-(tau_k - Z2 beta_y))``.
This is the usual logistic form divided through by ``1 - w``, so it stays
accurate as ``w -> 1`` where it tends to ``2 + A + B``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .core import AmhParams, latent_covariance
from .data import Dataset
from .estimation import DeltaResult, FitResult, ParamVector, delta_method
from .observed import Thresholds

__all__ = [
    "AssocSummary",
    "odds_ratio",
    "odds_ratio_range",
    "log_or_approx",
    "max_effect_modification",
    "table_odds_ratio",
    "observed_odds_ratios",
    "odds_ratio_table",
    "binary_correlation_amh",
    "binary_correlation_type2",
    "amh_correlation_extremum",
    "frechet_correlation_bounds",
    "latent_cross_moment",
]


@dataclass(frozen=True)
class AssocSummary:
    level: int
    psi: float
    log_psi_se: float
    ci: tuple

    def __post_init__(self):
        if not self.psi > 0:
            raise ValueError("odds ratio must be positive")
        lo, hi = self.ci
        if not 0 < lo <= hi:
            raise ValueError(f"invalid interval {self.ci}")


def _standardised(th: Thresholds, p: AmhParams, k: int, z1_effect: float, z2_effect: float):
    if not 1 <= k <= th.k_levels - 1:
        raise ValueError(f"level k must lie in 1..{th.k_levels - 1}")
    a = th.theta - p.mu - z1_effect
    b = th.tau[k - 1] - p.nu - z2_effect
    return a, b


def _psi(a, b, w):
    c = 1.0 - w
    A, B = math.exp(-a), math.exp(-b)
    if c == 0.0:
        return 2.0 + A + B
    return (1.0 + w + A + B + c * A * B) / ((1.0 + c * A) * (1.0 + c * B))


def odds_ratio(th: Thresholds, p: AmhParams, k: int, z1_effect: float = 0.0, z2_effect: float = 0.0) -> float:
    """Model-implied global odds ratio ``psi_k``."""
    a, b = _standardised(th, p, k, z1_effect, z2_effect)
    return _psi(a, b, p.omega)


def odds_ratio_range(th: Thresholds, k: int, z1_effect: float = 0.0, z2_effect: float = 0.0,
                     mu: float = 0.0, nu: float = 0.0) -> tuple[float, float]:
    """Range of ``psi_k`` over ``omega`` in [-1, 1] at fixed thresholds.

    ``psi_k`` increases in ``omega``, so the ends are its values at -1 and 1.
    """
    p = AmhParams(0.0, mu, nu)
    a, b = _standardised(th, p, k, z1_effect, z2_effect)
    lower = (1.0 - special.expit(a - math.log(2.0)) * special.expit(b - math.log(2.0))) / 2.0
    upper = 2.0 + math.exp(-a) + math.exp(-b)
    return lower, upper


class LogOrApprox(NamedTuple):
    approx: float
    exact: float


def log_or_approx(th: Thresholds, p: AmhParams, k: int, z1_effect: float = 0.0,
                  z2_effect: float = 0.0) -> LogOrApprox:
    """Four-parameter-logistic approximation of ``log psi_k`` and the exact value.

    ``log psi ~ [log(1+w) + log(1-w)] F(a') F(b') - log(1-w)`` with
    ``a' = a - log(1-w)``; it lies between ``log(1+w)`` and ``-log(1-w)``.
    The error is only asymptotically small in ``w**2 F F``, so both numbers
    are returned for the caller to judge.
    """
    w = p.omega
    if abs(w) >= 1.0:
        raise ValueError("approximation requires |omega| < 1")
    a, b = _standardised(th, p, k, z1_effect, z2_effect)
    lc = math.log1p(-w)
    ff = special.expit(a - lc) * special.expit(b - lc)
    approx = (math.log1p(w) + lc) * ff - lc
    return LogOrApprox(approx, math.log(_psi(a, b, w)))


def max_effect_modification(omega: float) -> float:
    """Largest ratio of odds ratios across covariate values: ``1 / (1 - w**2)``."""
    return 1.0 / (1.0 - omega**2)


def table_odds_ratio(table, k: int) -> float:
    """Global odds ratio of a 2 x K table collapsed at ``Y <= k`` vs ``Y > k``.

    Rows are x = 0, 1.  No continuity correction.
    """
    t = np.asarray(table, dtype=float)
    low = t[:, :k].sum(axis=1)
    high = t[:, k:].sum(axis=1)
    return float((high[1] / low[1]) / (high[0] / low[0]))


def observed_odds_ratios(data: Dataset) -> np.ndarray:
    counts = data.counts()
    return np.array([table_odds_ratio(counts, k) for k in range(1, data.k_levels)])


def _row(values, width):
    if values is None:
        return np.zeros(width)
    return np.atleast_1d(np.asarray(values, dtype=float))


def _log_psi(params: ParamVector, k: int, z1, z2, zw) -> float:
    a = params.theta - z1 @ params.beta_x
    b = params.tau[k - 1] - z2 @ params.beta_y
    w = float(np.tanh(zw @ params.zeta))
    return math.log(_psi(a, b, w))


def odds_ratio_table(fit: FitResult, z1=None, z2=None, z_omega=None, level: float = 0.95) -> list[AssocSummary]:
    """Predicted ``psi_k``, k = 1..K-1, with delta-method intervals on the log scale."""
    est = fit.estimates
    z1 = _row(z1, est.beta_x.size)
    z2 = _row(z2, est.beta_y.size)
    zw = np.ones(1) if z_omega is None and est.zeta.size == 1 else _row(z_omega, est.zeta.size)
    out = []
    for k in range(1, est.k_levels):
        d = delta_method(fit, lambda p, k=k: _log_psi(p, k, z1, z2, zw), back=math.exp, level=level)
        out.append(AssocSummary(k, d.estimate, d.se, (d.lower, d.upper)))
    return out


def binary_correlation_amh(theta, tau, omega):
    """Pearson correlation of (X, Y) for binary Y under the AMH model.

    ``omega / (4 cosh(theta/2) cosh(tau/2) - omega exp(-(theta+tau)/2))``;
    the denominator is expanded into its four positive exponential terms
    and summed in log space, which avoids cancellation for large negative
    thresholds.
    """
    theta = np.asarray(theta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    s, d = 0.5 * (theta + tau), 0.5 * (theta - tau)
    with np.errstate(divide="ignore"):
        terms = np.stack(np.broadcast_arrays(s, d, -d, np.log1p(-omega) - s))
    out = omega * np.exp(-special.logsumexp(terms, axis=0))
    return out[()] if out.ndim == 0 else out


def binary_correlation_type2(theta, tau, omega):
    """Same correlation when the latent law is the Gumbel type 2 (FGM) distribution."""
    theta = np.asarray(theta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return omega / (4.0 * np.cosh(theta / 2.0) * np.cosh(tau / 2.0))


def amh_correlation_extremum(omega: float) -> tuple[float, float]:
    """Location ``theta = tau`` and value of the extreme binary correlation."""
    if omega >= 1.0:
        return -math.inf, 0.5
    loc = 0.5 * math.log1p(-omega)
    return loc, omega / (2.0 * (1.0 + math.sqrt(1.0 - omega)))


def frechet_correlation_bounds(pi1: float, pi2: float) -> tuple[float, float]:
    """Attainable correlation range of two Bernoulli variables with given means."""
    if not (0.0 < pi1 < 1.0 and 0.0 < pi2 < 1.0):
        raise ValueError("marginal probabilities must lie strictly inside (0, 1)")
    q1, q2 = 1.0 - pi1, 1.0 - pi2
    lower = max(-math.sqrt(pi1 * pi2 / (q1 * q2)), -math.sqrt(q1 * q2 / (pi1 * pi2)))
    upper = min(math.sqrt(pi1 * q2 / (q1 * pi2)), math.sqrt(q1 * pi2 / (pi1 * q2)))
    return lower, upper


def latent_cross_moment(fit: FitResult, n_terms: int = 10, sigma_x: float = 1.0,
                        sigma_y: float = 1.0, level: float = 0.95) -> DeltaResult:
    """``E[X* Y*]`` from the first ``n_terms`` of its power series in omega.

    Reported in units of ``sigma_x * sigma_y``; the interval is a Wald
    interval on that scale with the gradient taken through zeta.
    """
    est = fit.estimates
    if est.zeta.size != 1:
        raise ValueError("cross moment needs a single (intercept-only) association parameter")
    scale = sigma_x * sigma_y
    return delta_method(
        fit, lambda p: scale * latent_covariance(float(np.tanh(p.zeta[0])), n_terms=n_terms), level=level
    )
