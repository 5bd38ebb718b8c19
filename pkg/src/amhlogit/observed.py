"""Discretised AMH model for a binary X and an ordinal Y on {1..K}.

Threshold rule: ``X = 1`` iff ``X* > theta`` and ``Y <= k`` iff
``Y* <= tau_k`` with ``tau_0 = -inf`` and ``tau_K = +inf``.  A cell
probability is a difference of two rectangle probabilities

    P(X = 0, Y = k) = H(theta, tau_k) - H(theta, tau_{k-1})
    P(X = 1, Y = k) = S(theta, tau_k) - S(theta, tau_{k-1})

where ``S(a, b) = F(b) - H(a, b) = P(X* > a, Y* <= b)``.  ``S`` is evaluated
from its own closed form ``A (1 + c B) / ((1 + B) D)`` instead of the
difference, which would cancel for large negative ``a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AmhParams, _log1m, log_amh_cdf, logistic_cdf

__all__ = [
    "Thresholds",
    "CellTable",
    "pmf",
    "cell_probabilities",
    "observed_moments",
    "goodness_of_fit",
    "cell_terms",
    "PROB_FLOOR",
]

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class Thresholds:
    theta: float
    tau: tuple

    def __post_init__(self):
        tau = tuple(float(t) for t in np.atleast_1d(self.tau))
        object.__setattr__(self, "tau", tau)
        if len(tau) < 1:
            raise ValueError("need at least one y-threshold (K >= 2)")
        if any(b <= a for a, b in zip(tau, tau[1:])):
            raise ValueError(f"thresholds must be strictly increasing: {tau}")

    @property
    def k_levels(self) -> int:
        return len(self.tau) + 1

    @property
    def tau_extended(self) -> np.ndarray:
        """``(tau_0, ..., tau_K)`` with the infinite sentinels."""
        return np.concatenate(([-np.inf], self.tau, [np.inf]))


@dataclass
class CellTable:
    """A 2 x K table of counts or probabilities (rows x = 0, 1)."""

    values: np.ndarray
    kind: str = "probabilities"
    row_labels: tuple = ("x=0", "x=1")
    col_labels: tuple = field(default=())

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != 2:
            raise ValueError("cell table must have shape (2, K)")
        if np.any(self.values < 0):
            raise ValueError("cell entries must be nonnegative")
        if self.kind not in ("counts", "probabilities"):
            raise ValueError("kind must be 'counts' or 'probabilities'")
        if self.kind == "probabilities" and abs(self.values.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to one")
        if not self.col_labels:
            self.col_labels = tuple(f"y={k}" for k in range(1, self.values.shape[1] + 1))

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def scaled(self, n: float) -> "CellTable":
        return CellTable(self.values * n, "counts", self.row_labels, self.col_labels)


def _rect_terms(a, b, omega, grad):
    """H, S and optionally their partials in (a, b, omega) at finite ``a``.

    ``b`` may be +-inf.  Returns dicts keyed by 'H' and 'S' holding
    (value, d/da, d/db, d/domega).
    """
    a, b, omega = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(omega, dtype=float)
    )
    lc = _log1m(omega)
    lo = b == -np.inf
    hi = b == np.inf
    bf = np.where(lo | hi, 0.0, b)

    log_h = log_amh_cdf(a, bf, omega)
    with np.errstate(over="ignore", invalid="ignore"):
        log_s = -a + np.logaddexp(0.0, lc - bf) - np.logaddexp(0.0, -bf) + log_h
    h = np.exp(log_h)
    s = np.exp(log_s)
    fa = logistic_cdf(a)
    h = np.where(lo, 0.0, np.where(hi, fa, h))
    s = np.where(lo, 0.0, np.where(hi, 1.0 - fa, s))
    if not grad:
        return h, s

    with np.errstate(over="ignore", invalid="ignore"):
        h_a = np.exp(2.0 * log_h - a + np.logaddexp(0.0, lc - bf))
        h_b = np.exp(2.0 * log_h - bf + np.logaddexp(0.0, lc - a))
        h_w = np.exp(2.0 * log_h - a - bf)
        f_b = np.exp(-bf - 2.0 * np.logaddexp(0.0, -bf))
    f_a = np.exp(-a - 2.0 * np.logaddexp(0.0, -a))
    h_a = np.where(lo, 0.0, np.where(hi, f_a, h_a))
    h_b = np.where(lo | hi, 0.0, h_b)
    h_w = np.where(lo | hi, 0.0, h_w)
    s_b = np.where(lo | hi, 0.0, f_b - h_b)
    return (h, h_a, h_b, h_w), (s, -h_a, s_b, -h_w)


def cell_terms(x, a, b_hi, b_lo, omega, grad: bool = False):
    """Cell probabilities for rows with standardised thresholds.

    Parameters
    ----------
    x : array of {0, 1}
    a : ``theta`` minus the x-location, finite
    b_hi, b_lo : ``tau_y`` and ``tau_{y-1}`` minus the y-location
    omega : association per row

    Returns
    -------
    prob, or (prob, d/da, d/db_hi, d/db_lo, d/domega) when ``grad``.
    """
    x = np.asarray(x)
    if not grad:
        h_hi, s_hi = _rect_terms(a, b_hi, omega, False)
        h_lo, s_lo = _rect_terms(a, b_lo, omega, False)
        return np.where(x == 1, s_hi - s_lo, h_hi - h_lo)
    H_hi, S_hi = _rect_terms(a, b_hi, omega, True)
    H_lo, S_lo = _rect_terms(a, b_lo, omega, True)
    one = x == 1
    hi = [np.where(one, s, h) for h, s in zip(H_hi, S_hi)]
    lo = [np.where(one, s, h) for h, s in zip(H_lo, S_lo)]
    prob = hi[0] - lo[0]
    return prob, hi[1] - lo[1], hi[2], -lo[2], hi[3] - lo[3]


def _check_y(th: Thresholds, y):
    y = np.asarray(y)
    if np.any((y < 1) | (y > th.k_levels)) or np.any(y != np.round(y)):
        raise ValueError(f"y must lie in 1..{th.k_levels}")
    return y.astype(int)


def pmf(th: Thresholds, p: AmhParams, x, y):
    """``P(X = x, Y = y)``; ``p.mu`` and ``p.nu`` act as the linear predictors."""
    x = np.asarray(x)
    if np.any((x != 0) & (x != 1)):
        raise ValueError("x must be 0 or 1")
    y = _check_y(th, y)
    te = th.tau_extended
    out = cell_terms(x, th.theta - p.mu, te[y] - p.nu, te[y - 1] - p.nu, p.omega)
    out = np.maximum(out, 0.0)
    return out[()] if out.ndim == 0 else out


def cell_probabilities(th: Thresholds, p: AmhParams) -> CellTable:
    k = th.k_levels
    y = np.tile(np.arange(1, k + 1), 2)
    x = np.repeat([0, 1], k)
    probs = pmf(th, p, x, y).reshape(2, k)
    # rounding can leave the total a few ulps from one
    probs = probs / probs.sum()
    return CellTable(probs, "probabilities")


def observed_moments(th: Thresholds, p: AmhParams):
    """Means, variances and covariance of the observed (X, Y).

    ``E[X]`` and ``Var[X]`` use their closed forms; the Y moments and the
    covariance are sums over the 2 x K cells.
    """
    table = cell_probabilities(th, p).values
    a = th.theta - p.mu
    mean_x = float(logistic_cdf(-a))
    var_x = mean_x * (1.0 - mean_x)
    k = np.arange(1, th.k_levels + 1)
    p_y = table.sum(axis=0)
    mean_y = float(k @ p_y)
    var_y = float((k**2) @ p_y - mean_y**2)
    cov = float(k @ table[1] - mean_x * mean_y)
    return mean_x, var_x, mean_y, var_y, cov


def goodness_of_fit(observed: CellTable, expected: CellTable) -> float:
    """Pearson chi-square ``sum (O - E)**2 / E``."""
    o = np.asarray(observed.values, dtype=float)
    e = np.asarray(expected.values, dtype=float)
    if o.shape != e.shape:
        raise ValueError(f"shape mismatch: {o.shape} vs {e.shape}")
    if np.any(e <= 0):
        raise ValueError("expected counts must be positive")
    return float(np.sum((o - e) ** 2 / e))
