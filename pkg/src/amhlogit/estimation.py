"""Maximum likelihood for the AMH bivariate logistic regression model.

Row i contributes ``log P(X = x_i, Y = y_i)`` evaluated at

    a_i   = theta - Z1_i beta_x
    b_i,k = tau_k - Z2_i beta_y
    omega_i = tanh(Zw_i zeta)

Thresholds are optimised through ``tau_1 = t_1``,
``tau_k = tau_{k-1} + exp(t_k)``; everything reported to the user (estimates
and covariance) is on the natural scale ``psi = (theta, tau, beta_x,
beta_y, zeta[, l1, l2, l12])``, with the covariance carried over by the
Jacobian of the reparametrisation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize, special, stats

from .data import DataError, Dataset, ModelSpec
from .observed import PROB_FLOOR, cell_terms

__all__ = [
    "ParamVector",
    "FitResult",
    "DeltaResult",
    "loglik",
    "loglik_grad",
    "fit",
    "starting_values",
    "delta_method",
    "numerical_hessian",
    "FitError",
]

EPS_CBRT = np.finfo(float).eps ** (1.0 / 3.0)


class FitError(RuntimeError):
    """The model cannot be fitted to the supplied data."""


@dataclass(frozen=True)
class ParamVector:
    theta: float
    tau: np.ndarray
    beta_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beta_y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    zeta: np.ndarray = field(default_factory=lambda: np.zeros(1))
    l1: float | None = None
    l2: float | None = None
    l12: float | None = None
    shared: bool = False

    def __post_init__(self):
        for name in ("tau", "beta_x", "beta_y", "zeta"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(np.diff(self.tau) <= 0):
            raise ValueError(f"thresholds must be strictly increasing: {self.tau}")
        if self.l1 is not None:
            if self.l1 <= 0:
                raise ValueError("l1 must be positive")
            if self.shared:
                object.__setattr__(self, "l2", None)
                object.__setattr__(self, "l12", None)
            elif self.l2 is None or self.l2 <= 0 or self.l12 is None:
                raise ValueError("bivariate random effects need l2 > 0 and l12")

    @property
    def k_levels(self) -> int:
        return self.tau.size + 1

    @property
    def has_random_effects(self) -> bool:
        return self.l1 is not None

    @property
    def n_fixed(self) -> int:
        return 1 + self.tau.size + self.beta_x.size + self.beta_y.size + self.zeta.size

    @property
    def n_re(self) -> int:
        if not self.has_random_effects:
            return 0
        return 1 if self.shared else 3

    @property
    def omega(self) -> float:
        if self.zeta.size != 1:
            raise ValueError("omega depends on covariates; use omega_at")
        return float(np.tanh(self.zeta[0]))

    def omega_at(self, z_omega) -> np.ndarray:
        return np.tanh(np.asarray(z_omega, dtype=float) @ self.zeta)

    @property
    def cholesky(self) -> np.ndarray:
        if self.shared:
            return np.array([[self.l1, 0.0], [self.l1, 0.0]])
        return np.array([[self.l1, 0.0], [self.l12, self.l2]])

    @property
    def re_covariance(self) -> np.ndarray:
        """``D = L L^T`` of the random intercepts."""
        L = self.cholesky
        return L @ L.T

    def to_array(self) -> np.ndarray:
        parts = [[self.theta], self.tau, self.beta_x, self.beta_y, self.zeta]
        if self.has_random_effects:
            parts.append([self.l1] if self.shared else [self.l1, self.l2, self.l12])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def _split(self, arr):
        arr = np.asarray(arr, dtype=float)
        sizes = [1, self.tau.size, self.beta_x.size, self.beta_y.size, self.zeta.size, self.n_re]
        if arr.size != sum(sizes):
            raise ValueError(f"expected {sum(sizes)} parameters, got {arr.size}")
        return np.split(arr, np.cumsum(sizes)[:-1])

    def from_array(self, arr) -> "ParamVector":
        th, tau, bx, by, zeta, re = self._split(arr)
        kw = {}
        if self.has_random_effects:
            kw = dict(l1=re[0]) if self.shared else dict(l1=re[0], l2=re[1], l12=re[2])
        return replace(self, theta=float(th[0]), tau=tau, beta_x=bx, beta_y=by, zeta=zeta, **kw)

    def to_free(self) -> np.ndarray:
        t = np.concatenate(([self.tau[0]], np.log(np.diff(self.tau))))
        parts = [[self.theta], t, self.beta_x, self.beta_y, self.zeta]
        if self.has_random_effects:
            parts.append([math.log(self.l1)] if self.shared else [math.log(self.l1), math.log(self.l2), self.l12])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def from_free(self, u) -> "ParamVector":
        th, t, bx, by, zeta, re = self._split(u)
        tau = t[0] + np.concatenate(([0.0], np.cumsum(np.exp(t[1:]))))
        kw = {}
        if self.has_random_effects:
            if self.shared:
                kw = dict(l1=math.exp(re[0]))
            else:
                kw = dict(l1=math.exp(re[0]), l2=math.exp(re[1]), l12=float(re[2]))
        return replace(self, theta=float(th[0]), tau=tau, beta_x=bx, beta_y=by, zeta=zeta, **kw)

    def free_jacobian(self) -> np.ndarray:
        """``d psi / d free`` at the current point."""
        n = self.n_fixed + self.n_re
        J = np.eye(n)
        m = self.tau.size
        steps = np.diff(self.tau)
        block = np.zeros((m, m))
        block[:, 0] = 1.0
        for j in range(1, m):
            block[j:, j] = steps[j - 1]
        J[1 : 1 + m, 1 : 1 + m] = block
        if self.has_random_effects:
            r = self.n_fixed
            J[r, r] = self.l1
            if not self.shared:
                J[r + 1, r + 1] = self.l2
        return J

    def names(self, z1_names=(), z2_names=(), z_omega_names=()) -> tuple:
        z1_names = z1_names or tuple(f"z1_{j + 1}" for j in range(self.beta_x.size))
        z2_names = z2_names or tuple(f"z2_{j + 1}" for j in range(self.beta_y.size))
        if not z_omega_names:
            z_omega_names = ("(intercept)",) if self.zeta.size == 1 else tuple(
                f"zw_{j + 1}" for j in range(self.zeta.size)
            )
        out = ["theta"]
        out += [f"tau{k + 1}" for k in range(self.tau.size)]
        out += [f"beta_x[{n}]" for n in z1_names]
        out += [f"beta_y[{n}]" for n in z2_names]
        out += [f"zeta[{n}]" for n in z_omega_names]
        if self.has_random_effects:
            out += ["l1"] if self.shared else ["l1", "l2", "l12"]
        return tuple(out)


def _predictors(params: ParamVector, data: Dataset):
    a = params.theta - data.z1 @ params.beta_x
    loc_y = data.z2 @ params.beta_y
    te = np.concatenate(([-np.inf], params.tau, [np.inf]))
    b_hi = te[data.y] - loc_y
    b_lo = te[data.y - 1] - loc_y
    omega = np.tanh(data.z_omega @ params.zeta)
    return a, b_hi, b_lo, omega


def _chain_rule(params: ParamVector, data: Dataset, ga, ghi, glo, gw, omega):
    """Map row-level derivatives (already weighted) onto the fixed psi block."""
    K = params.k_levels
    g_tau = np.bincount(data.y - 1, weights=ghi, minlength=K)[: K - 1]
    g_tau += np.bincount(data.y - 1, weights=glo, minlength=K)[1:]
    return np.concatenate(
        (
            [ga.sum()],
            g_tau,
            -(data.z1.T @ ga),
            -(data.z2.T @ (ghi + glo)),
            data.z_omega.T @ (gw * (1.0 - omega**2)),
        )
    )


def _check_shapes(params: ParamVector, data: Dataset):
    if params.k_levels != data.k_levels:
        raise ValueError(f"parameters have K={params.k_levels}, data K={data.k_levels}")
    if params.beta_x.size != data.z1.shape[1] or params.beta_y.size != data.z2.shape[1]:
        raise ValueError("coefficient lengths do not match the design widths")
    if params.zeta.size != data.z_omega.shape[1]:
        raise ValueError("zeta length does not match the association design")


def loglik(params: ParamVector, data: Dataset) -> float:
    """Weighted log-likelihood of the fixed-effects model.

    Cells that underflow are floored at 1e-300, so the result is finite
    (very negative) rather than -inf or NaN.
    """
    _check_shapes(params, data)
    a, b_hi, b_lo, omega = _predictors(params, data)
    prob = cell_terms(data.x, a, b_hi, b_lo, omega)
    return float(data.weight @ np.log(np.maximum(prob, PROB_FLOOR)))


def loglik_grad(params: ParamVector, data: Dataset):
    """Log-likelihood and its analytic gradient on the psi scale."""
    _check_shapes(params, data)
    a, b_hi, b_lo, omega = _predictors(params, data)
    prob, d_a, d_hi, d_lo, d_w = cell_terms(data.x, a, b_hi, b_lo, omega, grad=True)
    safe = np.maximum(prob, PROB_FLOOR)
    scale = data.weight / safe
    value = float(data.weight @ np.log(safe))
    grad = _chain_rule(params, data, scale * d_a, scale * d_hi, scale * d_lo, scale * d_w, omega)
    return value, grad


def numerical_hessian(grad_fn: Callable, u: np.ndarray) -> np.ndarray:
    """Central differences of an analytic gradient, symmetrised.

    Step ``h_j = eps**(1/3) * (1 + |u_j|)``.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    H = np.empty((n, n))
    for j in range(n):
        h = EPS_CBRT * (1.0 + abs(u[j]))
        up, dn = u.copy(), u.copy()
        up[j] += h
        dn[j] -= h
        H[:, j] = (grad_fn(up) - grad_fn(dn)) / (2.0 * h)
    return 0.5 * (H + H.T)


class DeltaResult(NamedTuple):
    estimate: float
    se: float
    lower: float
    upper: float


@dataclass(frozen=True)
class FitResult:
    estimates: ParamVector
    vcov: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    gradient_norm: float
    names: tuple
    n_obs: float
    vcov_free: np.ndarray | None = None
    singular: bool = False
    boundary: bool = False
    message: str = ""
    trace: tuple = ()
    z1_names: tuple = ()
    z2_names: tuple = ()
    z_omega_names: tuple = ()
    gh_order: int | None = None

    @property
    def k_levels(self) -> int:
        return self.estimates.k_levels

    @property
    def se(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.diag(self.vcov))

    def param(self, name: str) -> float:
        return float(self.estimates.to_array()[self.names.index(name)])

    def param_se(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    def summary(self, level: float = 0.95) -> list[dict]:
        """Estimate table; zeta rows are backtransformed to omega."""
        z = stats.norm.ppf(0.5 + level / 2.0)
        rows = []
        for name, est, se in zip(self.names, self.estimates.to_array(), self.se):
            lo, hi = est - z * se, est + z * se
            if name.startswith("zeta["):
                name = "omega" + name[len("zeta") :]
                if name == "omega[(intercept)]":
                    name = "omega"
                est, lo, hi = np.tanh(est), np.tanh(lo), np.tanh(hi)
                se = se * (1.0 - est**2)
            rows.append(dict(name=name, estimate=float(est), se=float(se), lower=float(lo), upper=float(hi)))
        return rows

    def to_dict(self) -> dict:
        est = self.estimates
        return {
            "k_levels": est.k_levels,
            "names": list(self.names),
            "psi": est.to_array().tolist(),
            "layout": {
                "n_beta_x": int(est.beta_x.size),
                "n_beta_y": int(est.beta_y.size),
                "n_zeta": int(est.zeta.size),
                "random_effects": est.has_random_effects,
                "shared": est.shared,
            },
            "vcov": np.asarray(self.vcov).tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "gradient_norm": self.gradient_norm,
            "n_obs": self.n_obs,
            "singular": self.singular,
            "boundary": self.boundary,
            "message": self.message,
            "z1_names": list(self.z1_names),
            "z2_names": list(self.z2_names),
            "z_omega_names": list(self.z_omega_names),
            "gh_order": self.gh_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        lay = d["layout"]
        K = d["k_levels"]
        re = lay["random_effects"]
        template = ParamVector(
            theta=0.0,
            tau=np.arange(K - 1, dtype=float),
            beta_x=np.zeros(lay["n_beta_x"]),
            beta_y=np.zeros(lay["n_beta_y"]),
            zeta=np.zeros(lay["n_zeta"]),
            l1=1.0 if re else None,
            l2=None if not re or lay["shared"] else 1.0,
            l12=None if not re or lay["shared"] else 0.0,
            shared=lay["shared"],
        )
        vcov = np.array(d["vcov"], dtype=float)
        return cls(
            estimates=template.from_array(d["psi"]),
            vcov=vcov.reshape(len(d["psi"]), len(d["psi"])),
            loglik=d["loglik"],
            converged=d["converged"],
            n_iter=d["n_iter"],
            gradient_norm=d["gradient_norm"],
            names=tuple(d["names"]),
            n_obs=d["n_obs"],
            singular=d.get("singular", False),
            boundary=d.get("boundary", False),
            message=d.get("message", ""),
            z1_names=tuple(d.get("z1_names", ())),
            z2_names=tuple(d.get("z2_names", ())),
            z_omega_names=tuple(d.get("z_omega_names", ())),
            gh_order=d.get("gh_order"),
        )


def delta_method(
    fit: FitResult,
    g: Callable[[ParamVector], float],
    back: Callable[[float], float] | None = None,
    level: float = 0.95,
) -> DeltaResult:
    """Standard error and Wald interval for a smooth function of psi.

    ``g`` receives a :class:`ParamVector`.  Its gradient is taken by central
    differences.  The interval is formed on the scale of ``g`` and, when
    ``back`` is given, mapped through it (e.g. ``g = log OR``,
    ``back = exp``); the returned se stays on the scale of ``g``.
    """
    psi = fit.estimates.to_array()
    est = float(g(fit.estimates))
    grad = np.empty_like(psi)
    for j in range(psi.size):
        h = EPS_CBRT * (1.0 + abs(psi[j]))
        up, dn = psi.copy(), psi.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (g(fit.estimates.from_array(up)) - g(fit.estimates.from_array(dn))) / (2.0 * h)
    var = float(grad @ fit.vcov @ grad)
    if not np.any(grad != 0.0):
        raise ValueError("delta method failed: gradient of the transform is numerically zero")
    se = math.sqrt(max(var, 0.0))
    z = stats.norm.ppf(0.5 + level / 2.0)
    lo, hi = est - z * se, est + z * se
    if back is not None:
        est, lo, hi = back(est), back(lo), back(hi)
        lo, hi = min(lo, hi), max(lo, hi)
    return DeltaResult(float(est), se, float(lo), float(hi))


# -- starting values ---------------------------------------------------------


def _logistic_fit(X, x, w):
    """Weighted logistic regression by Newton-Raphson; coefficients of X."""
    beta = np.zeros(X.shape[1])
    for _ in range(100):
        eta = X @ beta
        p = special.expit(eta)
        grad = X.T @ (w * (x - p))
        info = (X * (w * p * (1 - p))[:, None]).T @ X
        step = np.linalg.solve(info, grad)
        beta += step
        if np.max(np.abs(step)) < 1e-12:
            break
    if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > 50:
        raise FitError("marginal logistic fit diverged")
    return beta


def _po_fit(Z, y, w, K):
    """Weighted proportional-odds fit ``logit P(Y <= k) = tau_k - Z beta``."""
    counts = np.bincount(y - 1, weights=w, minlength=K)
    cum = np.cumsum(counts)[:-1] / counts.sum()
    tau0 = special.logit(cum)
    u0 = np.concatenate(([tau0[0]], np.log(np.diff(tau0)), np.zeros(Z.shape[1])))

    def unpack(u):
        t = u[: K - 1]
        tau = t[0] + np.concatenate(([0.0], np.cumsum(np.exp(t[1:]))))
        return tau, u[K - 1 :]

    def negll(u):
        tau, beta = unpack(u)
        te = np.concatenate(([-np.inf], tau, [np.inf]))
        eta = Z @ beta
        hi, lo = te[y] - eta, te[y - 1] - eta
        p = special.expit(hi) - special.expit(lo)
        return -float(w @ np.log(np.maximum(p, PROB_FLOOR)))

    res = optimize.minimize(negll, u0, method="BFGS")
    tau, beta = unpack(res.x)
    if not np.all(np.isfinite(res.x)):
        raise FitError("marginal proportional-odds fit diverged")
    return tau, beta


def _moment_start(data: Dataset) -> ParamVector:
    w = data.weight
    px = float(w @ data.x / w.sum())
    counts = np.bincount(data.y - 1, weights=w, minlength=data.k_levels)
    cum = np.cumsum(counts)[:-1] / counts.sum()
    return ParamVector(
        theta=float(-special.logit(px)),
        tau=special.logit(cum),
        beta_x=np.zeros(data.z1.shape[1]),
        beta_y=np.zeros(data.z2.shape[1]),
        zeta=np.zeros(data.z_omega.shape[1]),
    )


def starting_values(data: Dataset, spec: ModelSpec | None = None) -> ParamVector:
    """Marginal logistic and proportional-odds fits, association at zero.

    Falls back to the closed-form intercept-only values (with zero slopes)
    if either marginal fit fails.
    """
    try:
        coef = _logistic_fit(np.column_stack([np.ones(data.n_rows), data.z1]), data.x, data.weight)
        tau, beta_y = _po_fit(data.z2, data.y, data.weight, data.k_levels)
        return ParamVector(
            theta=float(-coef[0]),
            tau=tau,
            beta_x=coef[1:],
            beta_y=beta_y,
            zeta=np.zeros(data.z_omega.shape[1]),
        )
    except (FitError, np.linalg.LinAlgError, ValueError):
        warnings.warn("marginal fits failed; using moment-based starting values", RuntimeWarning)
        return _moment_start(data)


# -- maximisation -------------------------------------------------------------


def check_identifiable(data: Dataset):
    counts = data.counts()
    empty = [k + 1 for k in range(data.k_levels) if counts[:, k].sum() == 0]
    if empty:
        raise DataError(
            f"y-levels {empty} are never observed; merge them with a neighbouring level "
            f"and refit with a smaller K"
        )
    if counts[0].sum() == 0 or counts[1].sum() == 0:
        raise DataError("x takes a single value; the x-threshold is not identified")


@dataclass
class _Maximum:
    u: np.ndarray
    value: float
    grad: np.ndarray
    n_iter: int
    trace: list
    message: str


def maximise(value_grad: Callable, u0: np.ndarray, gtol: float = 1e-6, maxiter: int = 2000,
             newton_steps: int = 50) -> _Maximum:
    """Quasi-Newton ascent followed by a Newton polish on the FD Hessian.

    ``value_grad(u)`` returns (log-likelihood, gradient).  BFGS gets close;
    the Newton stage drives ``max |grad|`` below ``gtol`` where BFGS stalls
    on line-search precision.  Steps that do not increase the objective are
    halved, so the recorded trace is nondecreasing.
    """
    trace = []
    raw = value_grad
    cache: dict = {}

    def value_grad(u):
        key = np.asarray(u, dtype=float).tobytes()
        if key not in cache:
            if len(cache) > 8:
                cache.clear()
            cache[key] = raw(u)
        return cache[key]

    def neg(u):
        v, g = value_grad(u)
        if not np.isfinite(v):
            return np.inf, np.zeros_like(u)
        return -v, -g

    def record(xk):
        trace.append(value_grad(xk)[0])

    trace.append(value_grad(u0)[0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(neg, u0, jac=True, method="BFGS", callback=record,
                                options=dict(gtol=gtol, maxiter=maxiter))
    u = res.x
    value, grad = value_grad(u)
    n_iter = int(res.nit)
    message = str(res.message)
    grad_fn = lambda z: value_grad(z)[1]
    for _ in range(newton_steps):
        if np.max(np.abs(grad)) <= gtol:
            break
        H = numerical_hessian(grad_fn, u)
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-H, grad, rcond=None)[0]
        if grad @ step <= 0:  # not an ascent direction: fall back to gradient
            step = grad / max(1.0, np.max(np.abs(grad)))
        t = 1.0
        for _ in range(40):
            cand = u + t * step
            v_new, g_new = value_grad(cand)
            if np.isfinite(v_new) and v_new >= value - 1e-12 * abs(value):
                break
            t *= 0.5
        else:
            message = "line search failed during Newton polish"
            break
        rel = np.max(np.abs(t * step) / (1.0 + np.abs(u)))
        u, value, grad = cand, v_new, g_new
        n_iter += 1
        trace.append(value)
        if rel <= 1e-14:
            message = "relative step below 1e-14"
            break
    return _Maximum(u, value, grad, n_iter, trace, message)


def information_covariance(grad_fn: Callable, u: np.ndarray):
    """Inverse of the numerical observed information at ``u``.

    Returns (vcov, singular).  A singular or indefinite information matrix
    gives a NaN-filled covariance and ``singular=True``.
    """
    info = -numerical_hessian(grad_fn, u)
    try:
        np.linalg.cholesky(info)
        vcov = np.linalg.inv(info)
        return 0.5 * (vcov + vcov.T), False
    except np.linalg.LinAlgError:
        return np.full_like(info, np.nan), True


def fit(
    data: Dataset,
    spec: ModelSpec | None = None,
    start: ParamVector | None = None,
    threshold_method: str = "log-increment",
    gtol: float = 1e-6,
) -> FitResult:
    """Maximum likelihood fit of the fixed-effects model.

    threshold_method="log-increment" optimises the unconstrained
    reparametrisation of the thresholds; "constrained" works directly on
    tau under linear ordering constraints (SLSQP) and is kept as a
    cross-check.
    """
    check_identifiable(data)
    work = data.collapse()
    start = start if start is not None else starting_values(work, spec)

    if threshold_method == "log-increment":
        def vg(u):
            p = start.from_free(u)
            v, g = loglik_grad(p, work)
            return v, p.free_jacobian().T @ g

        opt = maximise(vg, start.to_free(), gtol=gtol)
        est = start.from_free(opt.u)
    elif threshold_method == "constrained":
        opt = _maximise_constrained(start, work, gtol)
        est = start.from_array(opt.u)
    else:
        raise ValueError(f"unknown threshold_method {threshold_method!r}")

    def free_grad(u):
        p = est.from_free(u)
        return p.free_jacobian().T @ loglik_grad(p, work)[1]

    vcov_free, singular = information_covariance(free_grad, est.to_free())
    J = est.free_jacobian()
    vcov = J @ vcov_free @ J.T
    value, g_psi = loglik_grad(est, work)
    gnorm = float(np.max(np.abs(est.free_jacobian().T @ g_psi)))
    converged = gnorm <= gtol and np.isfinite(value)
    message = opt.message
    if singular:
        message = "observed information is singular or indefinite"
    return FitResult(
        estimates=est,
        vcov=vcov,
        vcov_free=vcov_free,
        loglik=value,
        converged=bool(converged),
        n_iter=opt.n_iter,
        gradient_norm=gnorm,
        names=est.names(data.z1_names, data.z2_names, data.z_omega_names),
        n_obs=data.n_obs,
        singular=singular,
        message=message,
        trace=tuple(opt.trace),
        z1_names=data.z1_names,
        z2_names=data.z2_names,
        z_omega_names=data.z_omega_names,
    )


def _maximise_constrained(start: ParamVector, data: Dataset, gtol: float) -> _Maximum:
    m = start.tau.size
    n = start.n_fixed
    A = np.zeros((max(m - 1, 0), n))
    for k in range(m - 1):
        A[k, 1 + k] = -1.0
        A[k, 2 + k] = 1.0

    def vg(psi):
        try:
            return loglik_grad(start.from_array(psi), data)
        except ValueError:  # thresholds out of order
            return -np.inf, np.zeros_like(psi)

    psi0 = start.to_array()
    cons = [dict(type="ineq", fun=lambda p: A @ p - 1e-8, jac=lambda p: A)] if m > 1 else []
    scale = max(data.n_obs, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(
            lambda p: tuple(-z / scale for z in vg(p)), psi0, jac=True, method="SLSQP",
            constraints=cons, options=dict(maxiter=1000, ftol=1e-15),
        )
    polished = maximise(vg, res.x, gtol=gtol, maxiter=0)
    polished.n_iter += int(res.nit)
    return polished
