"""Acceptance checks, one test and one printed PASS/FAIL line per criterion.

Tolerances are pinned exactly as stated in the acceptance list; a criterion
that cannot be met is reported as FAIL with the measured values rather than
loosened.  Run ``pytest tests/test_acceptance.py -v`` (or this file as a
script) to see the lines.
"""
import math
import sys
import time

import numpy as np
import pytest

from amhlogit import fit, load_trekking
from amhlogit.association import (
    binary_correlation_amh,
    latent_cross_moment,
    observed_odds_ratios,
    odds_ratio,
    odds_ratio_table,
)
from amhlogit.core import AmhParams, amh_cdf, amh_cdf_series, sample
from amhlogit.data import Dataset
from amhlogit.estimation import ParamVector, loglik, loglik_grad
from amhlogit.mixed import marginal_loglik
from amhlogit.observed import CellTable, Thresholds, cell_probabilities, goodness_of_fit, observed_moments, pmf

from conftest import TREK_COUNTS, TREK_EXPECTED, mc_marginal_loglik, simulate_cognitive, simulate_mixed

TREK_ESTIMATES = {
    "theta": (-0.14, -0.34, 0.07),
    "tau1": (-1.92, -2.22, -1.61),
    "tau2": (-0.71, -0.92, -0.49),
    "tau3": (0.92, 0.69, 1.15),
    "tau4": (2.75, 2.31, 3.18),
    "omega": (0.76, 0.49, 0.89),
}
TREK_OR_PREDICTED = (3.40, 2.87, 2.43, 2.30)
TREK_OR_CI = ((1.98, 5.86), (1.96, 4.21), (1.85, 3.19), (1.80, 2.93))
TREK_OR_OBSERVED = (3.11, 3.00, 2.52, 2.44)


class Checks:
    """Collects named sub-checks and prints one line for the criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.failed = []
        self.notes = []

    def check(self, ok, label):
        (self.notes if ok else self.failed).append(label)

    def finish(self, capsys):
        status = "PASS" if not self.failed else "FAIL"
        line = f"criterion {self.number} {status}: {self.title}"
        if self.failed:
            line += " | failed: " + "; ".join(self.failed)
        with capsys.disabled():
            print("\n" + line)
        assert not self.failed, line


def within(value, target, tol):
    return abs(value - target) <= tol


@pytest.fixture(scope="module")
def trek_fit():
    data = load_trekking()
    t0 = time.perf_counter()
    result = fit(data)
    return result, time.perf_counter() - t0


def test_criterion_1_trekking_fit(trek_fit, capsys):
    c = Checks(1, "trekking estimates and intervals match the published values, runtime < 1 s")
    result, seconds = trek_fit
    rows = {r["name"]: r for r in result.summary()}
    c.check(result.converged, "converged")
    for name, (est, lo, hi) in TREK_ESTIMATES.items():
        r = rows[name]
        c.check(within(r["estimate"], est, 0.01), f"{name} {r['estimate']:.4f} vs {est} (+-0.01)")
        c.check(within(r["lower"], lo, 0.02), f"{name} lower {r['lower']:.4f} vs {lo} (+-0.02)")
        c.check(within(r["upper"], hi, 0.02), f"{name} upper {r['upper']:.4f} vs {hi} (+-0.02)")
    c.check(seconds < 1.0, f"runtime {seconds:.3f} s")
    c.finish(capsys)


def test_criterion_2_predicted_counts(trek_fit, capsys):
    c = Checks(2, "predicted counts match the published table within 0.05, chi-square 0.22 +- 0.02")
    est = trek_fit[0].estimates
    expected = cell_probabilities(Thresholds(est.theta, tuple(est.tau)), AmhParams(est.omega)).scaled(365)
    worst = float(np.max(np.abs(expected.values - TREK_EXPECTED)))
    c.check(worst <= 0.05, f"max cell deviation {worst:.4f}")
    chi = goodness_of_fit(CellTable(TREK_COUNTS, "counts"), expected)
    c.check(within(chi, 0.22, 0.02), f"chi-square {chi:.4f}")
    c.finish(capsys)


def test_criterion_3_odds_ratios(trek_fit, capsys):
    c = Checks(3, "observed and predicted odds ratios with intervals match the published table")
    obs = observed_odds_ratios(load_trekking())
    c.check(np.array_equal(np.round(obs, 2), TREK_OR_OBSERVED), f"observed {np.round(obs, 4).tolist()}")
    for s, psi, (lo, hi) in zip(odds_ratio_table(trek_fit[0]), TREK_OR_PREDICTED, TREK_OR_CI):
        c.check(within(s.psi, psi, 0.02), f"psi_{s.level} {s.psi:.4f} vs {psi} (+-0.02)")
        c.check(within(s.ci[0], lo, 0.03), f"psi_{s.level} lower {s.ci[0]:.4f} vs {lo} (+-0.03)")
        c.check(within(s.ci[1], hi, 0.03), f"psi_{s.level} upper {s.ci[1]:.4f} vs {hi} (+-0.03)")
    c.finish(capsys)


def test_criterion_4_latent_cross_moment(trek_fit, capsys):
    c = Checks(4, "latent cross-moment 0.99 [0.55, 1.43]; scaled 15.7 [8.7, 22.7]")
    cm = latent_cross_moment(trek_fit[0])
    c.check(within(cm.estimate, 0.99, 0.01), f"estimate {cm.estimate:.4f} (+-0.01)")
    c.check(within(cm.lower, 0.55, 0.02), f"lower {cm.lower:.4f} vs 0.55 (+-0.02)")
    c.check(within(cm.upper, 1.43, 0.02), f"upper {cm.upper:.4f} vs 1.43 (+-0.02)")
    # the scaled figures are printed to one decimal: half a unit in that place
    sc = latent_cross_moment(trek_fit[0], sigma_x=5.4, sigma_y=2.9)
    c.check(within(sc.estimate, 15.7, 0.05), f"scaled {sc.estimate:.3f} vs 15.7 (+-0.05)")
    c.check(within(sc.lower, 8.7, 0.05), f"scaled lower {sc.lower:.3f} vs 8.7 (+-0.05)")
    c.check(within(sc.upper, 22.7, 0.05), f"scaled upper {sc.upper:.3f} vs 22.7 (+-0.05)")
    c.finish(capsys)


def test_criterion_5_simulated_cognitive_models(capsys):
    c = Checks(5, "M1/M2/M3 recovery within 3 SE in >= 18/20 seeds, M2 omega ordering, < 2 min")
    t0 = time.perf_counter()
    mean_omega = np.zeros(3)
    low_level_separated = 0
    for model in ("M1", "M2", "M3"):
        hits = None
        for seed in range(20):
            data, truth = simulate_cognitive(model, seed)
            r = fit(data)
            if not r.converged:
                c.check(False, f"{model} seed {seed} did not converge")
            inside = np.abs(r.estimates.to_array() - truth.to_array()) <= 3 * r.se
            hits = inside.astype(int) if hits is None else hits + inside
            if model == "M2":
                w = np.tanh(r.estimates.zeta)
                mean_omega += w / 20
                low_level_separated += bool(w[0] < min(w[1], w[2]))
        # every parameter must be inside its 3-SE band in at least 18 of the 20 seeds
        worst = int(hits.min())
        c.check(worst >= 18, f"{model} worst parameter recovered in {worst}/20 seeds")
    c.check(bool(mean_omega[0] < mean_omega[1] < mean_omega[2]),
            f"M2 seed-averaged omega {np.round(mean_omega, 4).tolist()} ordered")
    c.check(low_level_separated == 20, f"M2 omega_16 below both others in {low_level_separated}/20 seeds")
    seconds = time.perf_counter() - t0
    c.check(seconds < 120, f"runtime {seconds:.1f} s")
    c.finish(capsys)


def _random_model(rng):
    K = int(rng.integers(2, 8))
    tau = np.sort(rng.normal(0, 2, K - 1)) + np.arange(K - 1) * 1e-3
    return Thresholds(rng.normal(0, 2), tuple(tau)), AmhParams(float(rng.uniform(-1, 1)), rng.normal(), rng.normal())


def _definitional_or(th, p, k):
    a, b = th.theta - p.mu, th.tau[k - 1] - p.nu
    H = amh_cdf(AmhParams(p.omega), a, b)
    Fa, Gb = 1 / (1 + math.exp(-a)), 1 / (1 + math.exp(-b))
    return ((1 - Fa - Gb + H) / (Gb - H)) / ((Fa - H) / H)


def test_criterion_6_property_suites(capsys):
    c = Checks(6, "property suites")
    rng = np.random.default_rng(606)

    worst = 0.0
    for _ in range(1000):
        th, p = _random_model(rng)
        K = th.k_levels
        probs = pmf(th, p, np.repeat([0, 1], K), np.tile(np.arange(1, K + 1), 2))
        worst = max(worst, abs(probs.sum() - 1.0))
    c.check(worst <= 1e-12, f"pmf normalisation max error {worst:.2e} (1e-12)")

    g = np.linspace(-10, 10, 41)
    worst = 0.0
    for w in (-0.99, -0.7, -0.2, 0.3, 0.8, 0.99):
        p = AmhParams(w)
        worst = max(worst, float(np.max(np.abs(amh_cdf_series(p, g[:, None], g[None, :]) - amh_cdf(p, g[:, None], g[None, :])))))
    c.check(worst <= 1e-10, f"series vs closed form max error {worst:.2e} (1e-10)")

    grid = np.linspace(-2, 2, 5)
    worst = 0.0
    for w, seed in ((0.0, 1), (0.5, 2), (0.9, 3)):
        p = AmhParams(w, 0.3, -0.2)
        draws = sample(p, seed, 200_000)
        for u in grid:
            for v in grid:
                emp = np.mean((draws[:, 0] <= u) & (draws[:, 1] <= v))
                worst = max(worst, abs(emp - amh_cdf(p, u, v)))
    c.check(worst <= 0.005, f"sampler vs cdf grid distance {worst:.4f} (0.005)")

    n = 200
    data = Dataset(x=rng.integers(0, 2, n), y=rng.integers(1, 5, n), k_levels=4, z1=rng.normal(size=(n, 2)),
                   z2=rng.normal(size=(n, 1)), z_omega=np.column_stack([np.ones(n), rng.integers(0, 2, n)]))
    worst = 0.0
    for _ in range(100):
        tau = np.cumsum(np.r_[rng.normal(-1, 1), rng.uniform(0.2, 1.5, 2)])
        p = ParamVector(theta=rng.normal(0, 0.7), tau=tau, beta_x=rng.normal(0, 0.5, 2),
                        beta_y=rng.normal(0, 0.5, 1), zeta=rng.normal(0, 0.8, 2))
        _, grad = loglik_grad(p, data)
        psi = p.to_array()
        for j in range(psi.size):
            h = 1e-6 * (1 + abs(psi[j]))
            up, dn = psi.copy(), psi.copy()
            up[j] += h
            dn[j] -= h
            fd = (loglik(p.from_array(up), data) - loglik(p.from_array(dn), data)) / (2 * h)
            worst = max(worst, abs(grad[j] - fd) / max(1.0, abs(fd)))
    c.check(worst <= 1e-5, f"gradient vs finite differences worst relative {worst:.2e} (1e-5)")

    worst = 0.0
    for _ in range(1000):
        th = Thresholds(rng.normal(0, 1.5), tuple(np.sort(rng.normal(0, 1.5, 3))))
        p = AmhParams(float(rng.uniform(-1, 0.999)), rng.normal(), rng.normal())
        k = int(rng.integers(1, 4))
        closed, direct = odds_ratio(th, p, k), _definitional_or(th, p, k)
        worst = max(worst, abs(closed - direct) / abs(direct))
    c.check(worst <= 1e-10, f"closed-form OR vs definition worst relative {worst:.2e} (1e-10)")

    worst = 0.0
    for _ in range(500):
        theta, tau, w = rng.normal(0, 2), rng.normal(0, 2), rng.uniform(-1, 1)
        _, vx, _, vy, cov = observed_moments(Thresholds(theta, (tau,)), AmhParams(w))
        worst = max(worst, abs(binary_correlation_amh(theta, tau, w) - cov / math.sqrt(vx * vy)))
    c.check(worst <= 1e-12, f"K=2 correlation vs pmf moments {worst:.2e} (1e-12)")

    d, truth = simulate_mixed()
    gh = marginal_loglik(truth, d, order=20)
    mc, se = mc_marginal_loglik(truth, d, draws=10**6, seed=0)
    c.check(abs(gh - mc) <= 3 * se, f"GH(20) {gh:.4f} vs MC {mc:.4f} +- {se:.4f} ({abs(gh - mc) / se:.2f} SE)")
    c.finish(capsys)


def test_criterion_7_limits(trek_fit, capsys):
    c = Checks(7, "omega = 1 limits")
    # the limit value against the closed form extrapolated linearly from
    # 1 - 2d and 1 - d; the raw gap at 1 - d is d * dpsi/domega, which grows
    # without bound in the thresholds, so it is checked at the fitted model
    d = 1e-8
    worst = 0.0
    for theta, tau in ((0.3, (-0.4, 1.2)), (-1.0, (0.0, 2.5)), (2.0, (-3.0, -1.0)), (-4.0, (3.0, 5.0))):
        th = Thresholds(theta, tau)
        for k in (1, 2):
            one = odds_ratio(th, AmhParams(1.0), k)
            extrapolated = 2 * odds_ratio(th, AmhParams(1 - d), k) - odds_ratio(th, AmhParams(1 - 2 * d), k)
            worst = max(worst, abs(one - extrapolated))
    c.check(worst <= 1e-6, f"OR at omega=1 vs extrapolated closed form max difference {worst:.2e} (1e-6)")
    est = trek_fit[0].estimates
    th = Thresholds(est.theta, tuple(est.tau))
    raw = max(abs(odds_ratio(th, AmhParams(1.0), k) - odds_ratio(th, AmhParams(1 - d), k)) for k in range(1, 5))
    c.check(raw <= 1e-6, f"OR at omega=1 vs 1-1e-8 at the trekking thresholds {raw:.2e} (1e-6)")
    g = np.linspace(-30, 30, 61)
    u, v = g[:, None], g[None, :]
    gumbel = 1.0 / (1.0 + np.exp(-u) + np.exp(-v))
    worst = float(np.max(np.abs(amh_cdf(AmhParams(1.0), u, v) - gumbel)))
    c.check(worst <= 1e-12, f"cdf at omega=1 vs Gumbel type 1 max difference {worst:.2e} (1e-12)")
    c.finish(capsys)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
