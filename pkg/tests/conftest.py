"""Shared fixtures: the trekking fit and seeded simulation designs."""
import math

import numpy as np
import pytest

from amhlogit import fit, load_trekking
from amhlogit.data import Dataset, effect_coding
from amhlogit.estimation import ParamVector
from amhlogit.observed import cell_terms
from amhlogit.simulate import simulate_dataset

TREK_COUNTS = np.array([[33, 45, 60, 26, 6], [14, 29, 80, 56, 16]], dtype=float)
TREK_EXPECTED = np.array([[33.59, 43.30, 60.30, 26.38, 6.26], [13.18, 30.48, 80.03, 55.73, 15.75]])

STIMULI = (16.0, 33.0, 100.0)
# generating values in the range of the printed cognitive-experiment fits
M1_TRUTH = dict(theta=-0.30, tau=(0.12, 1.95, 3.76), beta_x=0.0337, beta_y=0.0429, omega=0.88)
M2_OMEGA = (0.66, 0.93, 0.96)


def cognitive_design(n_subjects=20, reps=80):
    s = np.tile(np.repeat(STIMULI, reps), n_subjects)
    subject = np.repeat(np.arange(n_subjects), len(STIMULI) * reps)
    return s, subject


def simulate_cognitive(model: str, seed: int, n_subjects=20, reps=80, subject_sd=0.5):
    """M1/M2/M3-shaped data and the generating ParamVector.

    M2 uses one indicator column per stimulus level in the omega design;
    M3 adds sum-to-zero subject levels to both margins.
    """
    s, subject = cognitive_design(n_subjects, reps)
    t = M1_TRUTH
    z1 = s[:, None]
    z2 = s[:, None]
    bx = [t["beta_x"]]
    by = [t["beta_y"]]
    zw = None
    zeta = [np.arctanh(t["omega"])]
    names1 = names2 = ("s",)
    names_w = ()
    if model == "M2":
        zw = np.column_stack([(s == v).astype(float) for v in STIMULI])
        zeta = list(np.arctanh(M2_OMEGA))
        names_w = tuple(f"s={int(v)}" for v in STIMULI)
    elif model == "M3":
        rng = np.random.default_rng(10_000 + seed)
        ax = rng.normal(0, subject_sd, n_subjects)
        ay = rng.normal(0, subject_sd, n_subjects)
        ax -= ax.mean()
        ay -= ay.mean()
        cols, eff_names = effect_coding(subject)
        z1 = np.column_stack([s, cols])
        z2 = np.column_stack([s, cols])
        # location beta * s - a_i; effect coding stores a_1..a_{N-1}
        bx = [t["beta_x"], *(-ax[:-1])]
        by = [t["beta_y"], *(-ay[:-1])]
        names1 = names2 = ("s", *eff_names)
    truth = ParamVector(theta=t["theta"], tau=t["tau"], beta_x=bx, beta_y=by, zeta=zeta)
    d = simulate_dataset(truth, z1=z1, z2=z2, z_omega=zw, subject=subject, seed=seed)
    d = Dataset(
        x=d.x, y=d.y, k_levels=d.k_levels, z1=z1, z2=z2, z_omega=zw, subject=subject,
        z1_names=names1, z2_names=names2, z_omega_names=names_w,
    )
    return d, truth


def mixed_truth(omega=0.7, l1=1.0, l2=np.sqrt(0.75), l12=0.5, shared=False):
    return ParamVector(theta=-0.2, tau=(-0.5, 1.0), zeta=[np.arctanh(omega)], l1=l1,
                       l2=None if shared else l2, l12=None if shared else l12, shared=shared)


def simulate_mixed(n_subjects=20, trials=50, seed=3, **kw):
    truth = mixed_truth(**kw)
    subject = np.repeat(np.arange(n_subjects), trials)
    return simulate_dataset(truth, subject=subject, seed=seed), truth


def mc_marginal_loglik(params, data, draws=10**6, seed=0, chunk=10**5):
    """Plain Monte Carlo estimate of the random-intercept marginal loglik.

    Intercepts (u, v) = L e with e ~ N(0, I) are drawn once and shared by
    all subjects; the returned standard error comes from linearising
    sum_i log mean_m L_i(m) over draws, so the correlation induced by the
    common draws is accounted for.  No covariates (cells are tabulated).
    """
    rng = np.random.default_rng(seed)
    subjects = np.unique(data.subject)
    K = data.k_levels
    cells = [(x, y) for x in (0, 1) for y in range(1, K + 1)]
    counts = np.zeros((subjects.size, len(cells)))
    for i, s in enumerate(subjects):
        m = data.subject == s
        for c, (x, y) in enumerate(cells):
            counts[i, c] = np.sum(data.weight[m] * ((data.x[m] == x) & (data.y[m] == y)))
    te = np.r_[-np.inf, params.tau, np.inf]
    if params.shared:
        L = np.array([[params.l1, 0.0], [params.l1, 0.0]])
    else:
        L = np.array([[params.l1, 0.0], [params.l12, params.l2]])
    omega = math.tanh(params.zeta[0])
    blocks = []
    for _ in range(0, draws, chunk):
        uv = rng.standard_normal((chunk, 2)) @ L.T
        lp = np.empty((len(cells), chunk))
        for c, (x, y) in enumerate(cells):
            b = te[y] + uv[:, 1], te[y - 1] + uv[:, 1]
            lp[c] = np.log(cell_terms(x, params.theta + uv[:, 0], b[0], b[1], omega))
        blocks.append(counts @ lp)
    ll = np.concatenate(blocks, axis=1)
    top = ll.max(axis=1, keepdims=True)
    r = np.exp(ll - top)
    mean = r.mean(axis=1)
    estimate = float(np.sum(np.log(mean) + top[:, 0]))
    influence = (r / mean[:, None]).sum(axis=0)
    return estimate, float(influence.std(ddof=1) / math.sqrt(draws))


@pytest.fixture(scope="session")
def trekking():
    return load_trekking()


@pytest.fixture(scope="session")
def trekking_fit(trekking):
    return fit(trekking)


@pytest.fixture(scope="session")
def mixed_fixture():
    return simulate_mixed()
