"""Random-intercept extension with bivariate Gauss-Hermite quadrature.

Subject i carries intercepts ``(u_i, v_i) ~ N(0, D)`` added to the
standardised thresholds, ``a = theta - Z1 beta_x + u`` and
``b_k = tau_k - Z2 beta_y + v``; given the intercepts the trials are
independent AMH-model observations.  With ``D = L L^T`` and
``L = [[l1, 0], [l12, l2]]`` the subject integral becomes

    I_i ~ (1/pi) sum_r sum_s w_r w_s L_i(sqrt2 l1 z_r, sqrt2 (l12 z_r + l2 z_s)).

The shared-parameter model (``u = v``) uses the one-dimensional rule with
``u = sqrt2 l1 z_r``.  Subject log-likelihoods are accumulated in log space
and the quadrature sum uses a max-shifted exponential, so long trial
sequences do not underflow.

The plain rule needs many nodes once a subject has many trials, because
the posterior of its intercepts becomes much narrower than the node
spacing.  The default therefore recentres and rescales the same product
rule at each subject's posterior mode (adaptive Gauss-Hermite); the plain
rule stays available with ``adaptive=False``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import special

from .association import table_odds_ratio
from .data import DataError, Dataset, ModelSpec
from .estimation import (
    FitResult,
    ParamVector,
    _chain_rule,
    _check_shapes,
    _predictors,
    check_identifiable,
    delta_method,
    fit,
    information_covariance,
    maximise,
)
from .observed import PROB_FLOOR, CellTable, cell_terms

__all__ = [
    "GhRule",
    "QuadratureNodes",
    "adaptive_nodes",
    "plain_nodes",
    "RandomEffectSpec",
    "gh_rule",
    "marginal_loglik",
    "marginal_loglik_grad",
    "fit_mixed",
    "population_cell_probabilities",
    "population_association",
    "random_effect_summary",
]

SQRT2 = math.sqrt(2.0)
DEFAULT_ORDER = 20


@dataclass(frozen=True)
class GhRule:
    """Nodes and weights for the weight function exp(-x**2)."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class RandomEffectSpec:
    order: int = DEFAULT_ORDER
    l1: float = 0.5
    l2: float = 0.5
    l12: float = 0.0
    shared: bool = False

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("quadrature order must be at least 2")
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("Cholesky diagonal must be positive")


def gh_rule(order: int) -> GhRule:
    if order < 1:
        raise ValueError("order must be positive")
    z, w = hermgauss(order)
    return GhRule(z, w)


def _plain_nodes(params: ParamVector, rule: GhRule, n_subjects: int):
    """Standardised random-effect nodes ``e`` and log weights shared by all subjects.

    ``e = sqrt2 z`` so that the plain rule integrates against N(0, I).
    """
    z, w = rule.nodes, rule.weights
    dim = 1 if params.shared else 2
    if dim == 1:
        e = (SQRT2 * z)[:, None]
        log_w = np.log(w) - 0.5 * math.log(math.pi)
    else:
        zi, zj = np.meshgrid(z, z, indexing="ij")
        wi, wj = np.meshgrid(w, w, indexing="ij")
        e = SQRT2 * np.column_stack([zi.ravel(), zj.ravel()])
        log_w = np.log(wi.ravel()) + np.log(wj.ravel()) - math.log(math.pi)
    e = np.broadcast_to(e, (n_subjects,) + e.shape)
    log_w = np.broadcast_to(log_w, (n_subjects, log_w.size))
    return e, log_w


def _product_rule(rule: GhRule, dim: int):
    z, w = rule.nodes, rule.weights
    if dim == 1:
        return z[:, None], np.log(w)
    zi, zj = np.meshgrid(z, z, indexing="ij")
    wi, wj = np.meshgrid(w, w, indexing="ij")
    return np.column_stack([zi.ravel(), zj.ravel()]), np.log(wi.ravel()) + np.log(wj.ravel())


def _intercepts(params: ParamVector, e):
    """Map standardised nodes ``e`` (..., dim) to intercepts (u, v) = L e."""
    if params.shared:
        u = params.l1 * e[..., 0]
        return u, u
    return params.l1 * e[..., 0], params.l12 * e[..., 0] + params.l2 * e[..., 1]


@dataclass(frozen=True)
class _Grouped:
    data: Dataset
    starts: np.ndarray
    sizes: np.ndarray
    rows_subject: np.ndarray

    @property
    def n_subjects(self) -> int:
        return self.starts.size


def _grouped(data: Dataset) -> _Grouped:
    if data.subject is None:
        raise DataError("random-effects likelihood needs subject identifiers")
    order = np.argsort(data.subject, kind="stable")
    d = _take(data, order)
    sub = d.subject
    starts = np.flatnonzero(np.r_[True, sub[1:] != sub[:-1]])
    sizes = np.diff(np.r_[starts, d.n_rows])
    return _Grouped(d, starts, sizes, np.repeat(np.arange(starts.size), sizes))


def _row_derivs(params: ParamVector, g: _Grouped, e):
    """Per-row derivatives of log p in the intercept shifts at one e per subject."""
    d = g.data
    a, b_hi, b_lo, omega = _predictors(params, d)
    u, v = _intercepts(params, e)
    u, v = u[g.rows_subject], v[g.rows_subject]
    prob, p_a, p_hi, p_lo, _ = cell_terms(d.x, a + u, b_hi + v, b_lo + v, omega, grad=True)
    scale = d.weight / np.maximum(prob, PROB_FLOOR)
    return scale * p_a, scale * (p_hi + p_lo)


def _posterior_grad(params: ParamVector, g: _Grouped, e):
    """Gradient in e of log L_i(L e) - |e|**2 / 2, one row per subject."""
    ga, gb = _row_derivs(params, g, e)
    sa = np.add.reduceat(ga, g.starts)
    sb = np.add.reduceat(gb, g.starts)
    if params.shared:
        return (params.l1 * (sa + sb))[:, None] - e
    return np.column_stack([params.l1 * sa + params.l12 * sb, params.l2 * sb]) - e


def _posterior_log(params: ParamVector, g: _Grouped, e):
    d = g.data
    a, b_hi, b_lo, omega = _predictors(params, d)
    u, v = _intercepts(params, e)
    prob = cell_terms(d.x, a + u[g.rows_subject], b_hi + v[g.rows_subject], b_lo + v[g.rows_subject], omega)
    ll = np.add.reduceat(d.weight * np.log(np.maximum(prob, PROB_FLOOR)), g.starts)
    return ll - 0.5 * np.sum(e**2, axis=1)


def _posterior_modes(params: ParamVector, g: _Grouped, max_iter: int = 50):
    """Per-subject mode and curvature of the standardised random-effect posterior."""
    dim = 1 if params.shared else 2
    e = np.zeros((g.n_subjects, dim))
    eye = np.eye(dim)
    h = 1e-5
    for _ in range(max_iter):
        grad = _posterior_grad(params, g, e)
        hess = np.empty((g.n_subjects, dim, dim))
        for j in range(dim):
            hess[:, :, j] = (_posterior_grad(params, g, e + h * eye[j]) - _posterior_grad(params, g, e - h * eye[j])) / (2 * h)
        hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
        neg = -hess
        # keep the Newton system positive definite (the prior alone gives I)
        bad = np.linalg.eigvalsh(neg)[:, 0] <= 1e-8
        neg[bad] = eye
        step = np.linalg.solve(neg, grad[..., None])[..., 0]
        cur = _posterior_log(params, g, e)
        t = np.ones(g.n_subjects)
        for _ in range(30):
            cand = e + t[:, None] * step
            worse = _posterior_log(params, g, cand) < cur - 1e-12
            if not worse.any():
                break
            t[worse] *= 0.5
        e = cand
        if np.max(np.abs(t[:, None] * step)) < 1e-10:
            break
    grad_fn = lambda z: _posterior_grad(params, g, z)
    hess = np.empty((g.n_subjects, dim, dim))
    for j in range(dim):
        hess[:, :, j] = (grad_fn(e + h * eye[j]) - grad_fn(e - h * eye[j])) / (2 * h)
    neg = -0.5 * (hess + np.swapaxes(hess, 1, 2))
    bad = np.linalg.eigvalsh(neg)[:, 0] <= 1e-8
    neg[bad] = eye
    return e, np.linalg.inv(neg)


@dataclass(frozen=True)
class QuadratureNodes:
    """Standardised nodes ``e`` (subjects x nodes x dim) and log weights.

    The integral over N(0, I) is ``sum_n exp(log_weight) L_i(L e_n)``.
    """

    e: np.ndarray
    log_weight: np.ndarray


def plain_nodes(params: ParamVector, order: int = DEFAULT_ORDER, n_subjects: int = 1) -> QuadratureNodes:
    """Plain product rule integrating against N(0, I), shared by all subjects."""
    return QuadratureNodes(*_plain_nodes(params, gh_rule(order), n_subjects))


def adaptive_nodes(params: ParamVector, data: Dataset, order: int = DEFAULT_ORDER) -> QuadratureNodes:
    """Product Gauss-Hermite rule centred and scaled at each subject's posterior.

    With posterior mode m_i and covariance S_i = C_i C_i^T in the
    standardised space, ``e = m_i + sqrt2 C_i z`` and the weight becomes
    ``2**(d/2) |C_i| w exp(|z|**2) phi(e)``.
    """
    g = _grouped(data)
    return _adaptive_nodes(params, g, gh_rule(order))


def _adaptive_nodes(params: ParamVector, g: _Grouped, rule: GhRule) -> QuadratureNodes:
    dim = 1 if params.shared else 2
    z, log_w = _product_rule(rule, dim)
    mode, cov = _posterior_modes(params, g)
    C = np.linalg.cholesky(cov)
    e = mode[:, None, :] + SQRT2 * np.einsum("sij,nj->sni", C, z)
    log_det = np.log(np.abs(np.linalg.det(C)))
    lw = (
        log_w[None, :]
        + np.sum(z**2, axis=1)[None, :]
        + 0.5 * dim * math.log(2.0)
        + log_det[:, None]
        - 0.5 * dim * math.log(2.0 * math.pi)
        - 0.5 * np.sum(e**2, axis=2)
    )
    return QuadratureNodes(e, lw)


def _evaluate(params: ParamVector, g: _Grouped, nodes: QuadratureNodes, grad: bool):
    _check_shapes(params, g.data)
    if not params.has_random_effects:
        raise ValueError("parameters carry no random-effect block")
    d = g.data
    a, b_hi, b_lo, omega = _predictors(params, d)
    u, v = _intercepts(params, nodes.e)
    u, v = u[g.rows_subject], v[g.rows_subject]
    A = a[:, None] + u
    Bh = b_hi[:, None] + v
    Bl = b_lo[:, None] + v
    x = d.x[:, None]
    w_col = omega[:, None]
    if grad:
        prob, p_a, p_hi, p_lo, p_w = cell_terms(x, A, Bh, Bl, w_col, grad=True)
    else:
        prob = cell_terms(x, A, Bh, Bl, w_col)
    safe = np.maximum(prob, PROB_FLOOR)
    row_ll = d.weight[:, None] * np.log(safe)
    joint = np.add.reduceat(row_ll, g.starts, axis=0) + nodes.log_weight
    log_i = special.logsumexp(joint, axis=1)
    value = float(log_i.sum())
    if not grad:
        return value
    post = np.exp(joint - log_i[:, None])
    q = (d.weight[:, None] / safe) * post[g.rows_subject]
    ga = (q * p_a).sum(axis=1)
    ghi = (q * p_hi).sum(axis=1)
    glo = (q * p_lo).sum(axis=1)
    gw = (q * p_w).sum(axis=1)
    g_fixed = _chain_rule(params, d, ga, ghi, glo, gw, omega)
    qa = q * p_a
    qb = q * (p_hi + p_lo)
    e_rows = nodes.e[g.rows_subject]
    e1 = e_rows[..., 0]
    if params.shared:
        g_re = np.array([np.sum((qa + qb) * e1)])
    else:
        e2 = e_rows[..., 1]
        g_re = np.array([np.sum(qa * e1), np.sum(qb * e2), np.sum(qb * e1)])
    return value, np.concatenate((g_fixed, g_re))


def _take(data: Dataset, idx) -> Dataset:
    return replace(
        data,
        x=data.x[idx],
        y=data.y[idx],
        z1=data.z1[idx],
        z2=data.z2[idx],
        z_omega=data.z_omega[idx],
        weight=data.weight[idx],
        subject=data.subject[idx],
    )


def _nodes_for(params, g, order, adaptive, nodes):
    if not params.has_random_effects:
        raise ValueError("parameters carry no random-effect block")
    if nodes is not None:
        return nodes
    if adaptive:
        return _adaptive_nodes(params, g, gh_rule(order))
    return plain_nodes(params, order, g.n_subjects)


def marginal_loglik(params: ParamVector, data: Dataset, order: int = DEFAULT_ORDER,
                    adaptive: bool = True, nodes: QuadratureNodes | None = None) -> float:
    """Quadrature approximation of the random-intercept marginal log-likelihood.

    adaptive=False is the plain product rule in the Cholesky-transformed
    variables; adaptive=True recentres the same rule at each subject's
    posterior mode.  Pass ``nodes`` to evaluate with a fixed placement.
    """
    g = _grouped(data)
    return _evaluate(params, g, _nodes_for(params, g, order, adaptive, nodes), grad=False)


def marginal_loglik_grad(params: ParamVector, data: Dataset, order: int = DEFAULT_ORDER,
                         adaptive: bool = True, nodes: QuadratureNodes | None = None):
    """Marginal log-likelihood and its gradient on the psi scale (incl. l's).

    The gradient holds the node placement fixed; with ``adaptive=True`` and
    no ``nodes`` the placement is computed at ``params`` first.
    """
    g = _grouped(data)
    return _evaluate(params, g, _nodes_for(params, g, order, adaptive, nodes), grad=True)


def _boundary(est: ParamVector, vcov: np.ndarray, names: tuple) -> bool:
    se = np.sqrt(np.clip(np.diag(vcov), 0, None))
    for name in ("l1",) if est.shared else ("l1", "l2"):
        j = names.index(name)
        value = getattr(est, name)
        if value < 1e-3 or not np.isfinite(se[j]) or value < 2.0 * se[j]:
            return True
    return False


def fit_mixed(
    data: Dataset,
    spec: ModelSpec | None = None,
    re_spec: RandomEffectSpec | None = None,
    start: ParamVector | None = None,
    gtol: float = 1e-6,
    adaptive: bool = True,
    max_stages: int = 8,
) -> FitResult:
    """Maximise the quadrature marginal likelihood over psi and (l1, l2, l12).

    Starts from the fixed-effects fit.  ``boundary`` is set when a Cholesky
    diagonal is below 1e-3 or within two standard errors of zero, i.e. the
    corresponding variance component is not distinguishable from zero.

    With ``adaptive`` the nodes are recentred at the subject posteriors,
    the likelihood is maximised with that placement held fixed, and the two
    steps alternate until the estimates stop moving.  The reported
    log-likelihood, gradient and information all use the final placement.
    """
    if re_spec is None:
        re_spec = RandomEffectSpec(
            order=spec.gh_order if spec else DEFAULT_ORDER, shared=bool(spec and spec.shared)
        )
    check_identifiable(data)
    if data.subject is None:
        raise DataError("random-effects fit needs a subject column")
    n_subjects = np.unique(data.subject).size
    if n_subjects < 2:
        raise DataError("random-effects fit needs at least two subjects")
    work = _grouped(data.collapse())
    rule = gh_rule(re_spec.order)
    if start is None:
        fixed = fit(work.data)
        base = fixed.estimates
        if re_spec.shared:
            start = replace(base, l1=re_spec.l1, shared=True)
        else:
            start = replace(base, l1=re_spec.l1, l2=re_spec.l2, l12=re_spec.l12)

    current = start
    n_iter = 0
    trace: list = []
    for _ in range(max_stages):
        if adaptive:
            nodes = _adaptive_nodes(current, work, rule)
        else:
            nodes = QuadratureNodes(*_plain_nodes(current, rule, work.n_subjects))

        def vg(u, nodes=nodes):
            p = current.from_free(u)
            value, g = _evaluate(p, work, nodes, grad=True)
            return value, p.free_jacobian().T @ g

        u0 = current.to_free()
        opt = maximise(vg, u0, gtol=gtol)
        n_iter += opt.n_iter
        trace.extend(opt.trace)
        moved = float(np.max(np.abs(opt.u - u0)))
        current = current.from_free(opt.u)
        if not adaptive or moved < 1e-4:
            break
    est = current

    def free_grad(u):
        return vg(u)[1]

    vcov_free, singular = information_covariance(free_grad, est.to_free())
    J = est.free_jacobian()
    vcov = J @ vcov_free @ J.T
    gnorm = float(np.max(np.abs(opt.grad)))
    names = est.names(data.z1_names, data.z2_names, data.z_omega_names)
    message = opt.message
    if singular:
        message = "observed information is singular or indefinite"
    return FitResult(
        estimates=est,
        vcov=vcov,
        vcov_free=vcov_free,
        loglik=opt.value,
        converged=bool(gnorm <= gtol),
        n_iter=n_iter,
        gradient_norm=gnorm,
        names=names,
        n_obs=data.n_obs,
        singular=singular,
        boundary=_boundary(est, vcov, names),
        message=message,
        trace=tuple(trace),
        z1_names=data.z1_names,
        z2_names=data.z2_names,
        z_omega_names=data.z_omega_names,
        gh_order=re_spec.order,
    )


def population_cell_probabilities(params: ParamVector, z1=None, z2=None, z_omega=None,
                                  order: int = DEFAULT_ORDER) -> CellTable:
    """Cell probabilities with the random intercepts integrated out."""
    z1 = np.zeros(params.beta_x.size) if z1 is None else np.atleast_1d(np.asarray(z1, float))
    z2 = np.zeros(params.beta_y.size) if z2 is None else np.atleast_1d(np.asarray(z2, float))
    if z_omega is None:
        z_omega = np.ones(params.zeta.size) if params.zeta.size == 1 else None
        if z_omega is None:
            raise ValueError("z_omega row required when omega has covariates")
    zw = np.atleast_1d(np.asarray(z_omega, float))
    K = params.k_levels
    te = np.concatenate(([-np.inf], params.tau, [np.inf]))
    a = params.theta - z1 @ params.beta_x
    loc = z2 @ params.beta_y
    omega = float(np.tanh(zw @ params.zeta))
    e, log_w = _plain_nodes(params, gh_rule(order), 1)
    u, v = _intercepts(params, e[0])
    wts = np.exp(log_w[0])
    y = np.tile(np.arange(1, K + 1), 2)
    x = np.repeat([0, 1], K)
    prob = cell_terms(
        x[:, None], a + u[None, :], te[y][:, None] - loc + v[None, :], te[y - 1][:, None] - loc + v[None, :], omega
    )
    table = (np.maximum(prob, 0.0) @ wts).reshape(2, K)
    return CellTable(table / table.sum(), "probabilities")


def population_association(fit_result: FitResult, k: int, z1=None, z2=None, z_omega=None,
                           order: int | None = None) -> float:
    """Population-averaged global odds ratio at level ``k``."""
    order = order or fit_result.gh_order or DEFAULT_ORDER
    table = population_cell_probabilities(fit_result.estimates, z1, z2, z_omega, order)
    return table_odds_ratio(table.values, k)


def random_effect_summary(fit_result: FitResult, level: float = 0.95) -> dict:
    """Variance components of D and the intercept correlation with Wald intervals."""
    est = fit_result.estimates
    if est.shared:
        out = {"d_x^2": delta_method(fit_result, lambda p: p.l1**2, level=level)}
        return out
    return {
        "d_x^2": delta_method(fit_result, lambda p: p.l1**2, level=level),
        "d_y^2": delta_method(fit_result, lambda p: p.l12**2 + p.l2**2, level=level),
        "d_xy": delta_method(fit_result, lambda p: p.l1 * p.l12, level=level),
        "corr": delta_method(fit_result, lambda p: p.l12 / math.hypot(p.l12, p.l2), level=level),
    }
