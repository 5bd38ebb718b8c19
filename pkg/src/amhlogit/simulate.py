"""Simulation from the fitted-model family: latent AMH draws plus thresholding."""
from __future__ import annotations

import numpy as np

from .data import Dataset
from .estimation import ParamVector

__all__ = ["sample_latent", "simulate_dataset", "threshold"]


def sample_latent(rng: np.random.Generator, omega, size: int) -> np.ndarray:
    """Standardised AMH pairs with a per-row association in [0, 1).

    Uses the geometric-mixture form: M ~ geom(1 - omega) on {1, 2, ...} and
    each coordinate the maximum of M logistic variables located at
    ``log(1 - omega)``.  ``omega = 0`` gives M = 1, i.e. independent
    logistic coordinates.
    """
    omega = np.broadcast_to(np.asarray(omega, dtype=float), (size,))
    if np.any((omega < 0) | (omega >= 1)):
        raise ValueError("simulation requires omega in [0, 1)")
    m = rng.geometric(1.0 - omega).astype(float)
    logu = np.log(rng.random((size, 2))) / m[:, None]
    z = logu - np.log(-np.expm1(logu))
    return z + np.log1p(-omega)[:, None]


def threshold(xstar, ystar, theta, tau):
    """Observed (x, y) from latent values: x = 1{X* > theta}, y = 1 + #{tau_k < Y*}."""
    x = (np.asarray(xstar) > theta).astype(int)
    y = 1 + np.searchsorted(np.asarray(tau), np.asarray(ystar), side="left")
    return x, y


def simulate_dataset(params: ParamVector, n: int | None = None, z1=None, z2=None, z_omega=None,
                     subject=None, seed=0, latent: bool = False):
    """Draw one outcome pair per design row.

    Locations are ``Z1 beta_x`` and ``Z2 beta_y``; with a random-effect block
    each subject's intercepts ``(u, v) = L e`` enter as ``theta + u`` and
    ``tau_k + v``.  Returns a Dataset, or (Dataset, latent array) when
    ``latent`` is set.
    """
    rng = np.random.default_rng(seed)
    if n is None:
        for arr in (z1, z2, z_omega, subject):
            if arr is not None:
                n = len(arr)
                break
        else:
            raise ValueError("give n or a design")
    z1 = np.zeros((n, 0)) if z1 is None else np.asarray(z1, dtype=float).reshape(n, -1)
    z2 = np.zeros((n, 0)) if z2 is None else np.asarray(z2, dtype=float).reshape(n, -1)
    zw = np.ones((n, 1)) if z_omega is None else np.asarray(z_omega, dtype=float).reshape(n, -1)
    omega = np.tanh(zw @ params.zeta)
    mu = z1 @ params.beta_x
    nu = z2 @ params.beta_y
    draws = sample_latent(rng, omega, n)
    if params.has_random_effects:
        if subject is None:
            raise ValueError("random effects need subject labels")
        levels, idx = np.unique(np.asarray(subject), return_inverse=True)
        e = rng.standard_normal((levels.size, 2))
        re = e @ params.cholesky.T
        mu = mu - re[idx, 0]
        nu = nu - re[idx, 1]
    xstar = draws[:, 0] + mu
    ystar = draws[:, 1] + nu
    x, y = threshold(xstar, ystar, params.theta, params.tau)
    data = Dataset(
        x=x, y=y, k_levels=params.k_levels, z1=z1, z2=z2,
        z_omega=None if z_omega is None else zw, subject=subject,
    )
    if latent:
        return data, np.column_stack([xstar, ystar])
    return data
