import numpy as np
import pytest

from amhlogit import fit, load_trekking
from amhlogit.core import AmhParams, amh_cdf, logistic_cdf
from amhlogit.observed import (
    CellTable,
    Thresholds,
    cell_probabilities,
    goodness_of_fit,
    observed_moments,
    pmf,
)

# published trekking estimates (rounded as printed)
TREK_TH = Thresholds(-0.14, (-1.92, -0.71, 0.92, 2.75))
TREK_P = AmhParams(0.76)
TREK_COUNTS = np.array([[33, 45, 60, 26, 6], [14, 29, 80, 56, 16]], dtype=float)
TREK_EXPECTED = np.array([[33.59, 43.30, 60.30, 26.38, 6.26], [13.18, 30.48, 80.03, 55.73, 15.75]])


def random_model(rng):
    K = int(rng.integers(2, 8))
    tau = np.sort(rng.normal(0, 2, K - 1)) + np.arange(K - 1) * 1e-3
    th = Thresholds(rng.normal(0, 2), tuple(tau))
    p = AmhParams(float(rng.uniform(-1, 1)), float(rng.normal()), float(rng.normal()))
    return th, p


def test_threshold_validation():
    with pytest.raises(ValueError):
        Thresholds(0.0, (1.0, 0.5))
    with pytest.raises(ValueError):
        Thresholds(0.0, ())
    th = Thresholds(0.0, (0.0, 1.0))
    assert th.k_levels == 3
    assert th.tau_extended[0] == -np.inf and th.tau_extended[-1] == np.inf


def test_cell_table_validation():
    with pytest.raises(ValueError):
        CellTable(np.ones((3, 2)) / 6)
    with pytest.raises(ValueError):
        CellTable(np.ones((2, 2)))
    with pytest.raises(ValueError):
        CellTable(-np.ones((2, 2)), "counts")
    t = CellTable(np.full((2, 2), 0.25)).scaled(8)
    assert t.kind == "counts" and t.total == 8


def test_pmf_independent_fair_split():
    th = Thresholds(0.0, (0.0,))
    table = cell_probabilities(th, AmhParams(0.0)).values
    np.testing.assert_allclose(table, 0.25, atol=1e-15)


def test_pmf_domain():
    th = Thresholds(0.0, (0.0,))
    with pytest.raises(ValueError):
        pmf(th, AmhParams(0.1), 0, 3)
    with pytest.raises(ValueError):
        pmf(th, AmhParams(0.1), 2, 1)


def test_pmf_normalisation_random_draws():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        th, p = random_model(rng)
        K = th.k_levels
        x = np.repeat([0, 1], K)
        y = np.tile(np.arange(1, K + 1), 2)
        probs = pmf(th, p, x, y)
        assert probs.min() >= 0
        assert abs(probs.sum() - 1.0) <= 1e-12


def test_pmf_building_block_is_joint_cdf():
    rng = np.random.default_rng(4)
    for _ in range(50):
        th, p = random_model(rng)
        for k in range(1, th.k_levels):
            below = sum(pmf(th, p, 0, j) for j in range(1, k + 1))
            assert below == pytest.approx(amh_cdf(p, th.theta, th.tau[k - 1]), abs=1e-14)


def test_margins():
    rng = np.random.default_rng(9)
    for _ in range(200):
        th, p = random_model(rng)
        t = cell_probabilities(th, p).values
        assert t[1].sum() == pytest.approx(1.0 - logistic_cdf(th.theta - p.mu), abs=1e-12)
        cum = np.cumsum(t.sum(axis=0))[:-1]
        np.testing.assert_allclose(cum, logistic_cdf(np.array(th.tau) - p.nu), atol=1e-12)


def test_independence_is_outer_product():
    th = Thresholds(0.3, (-1.0, 0.2, 1.5))
    t = cell_probabilities(th, AmhParams(0.0, 0.4, -0.2)).values
    np.testing.assert_allclose(t, np.outer(t.sum(axis=1), t.sum(axis=0)), atol=1e-15)


def test_diagonal_concentration_grows_with_omega():
    th = Thresholds(0.0, (-1.0, 0.0, 1.0))
    tables = [cell_probabilities(th, AmhParams(w)).values for w in (-0.9, 0.0, 0.9)]
    corner = [t[1, -1] + t[0, 0] for t in tables]
    assert corner[0] < corner[1] < corner[2]


def test_top_cell_strictly_increasing_in_omega():
    th = Thresholds(0.2, (-0.5, 0.7))
    ws = np.linspace(0.01, 1.0, 50)
    top = [cell_probabilities(th, AmhParams(w)).values[1, -1] for w in ws]
    assert np.all(np.diff(top) > 0)


def test_trekking_predicted_counts():
    # the 2-dp estimates printed for the trekking fit move cells by up to 0.3, so use the full MLE
    est = fit(load_trekking()).estimates
    th = Thresholds(est.theta, tuple(est.tau))
    counts = cell_probabilities(th, AmhParams(est.omega)).scaled(365).values
    np.testing.assert_allclose(counts, TREK_EXPECTED, rtol=0, atol=0.01)
    rounded = cell_probabilities(TREK_TH, TREK_P).scaled(365).values
    np.testing.assert_allclose(rounded, TREK_EXPECTED, rtol=0, atol=0.3)


def test_moments_closed_forms():
    mx, vx, *_ = observed_moments(Thresholds(0.0, (0.5,)), AmhParams(0.4))
    assert mx == pytest.approx(0.5, abs=1e-15) and vx == pytest.approx(0.25, abs=1e-15)
    *_, cov = observed_moments(Thresholds(0.0, (0.0,)), AmhParams(0.8))
    assert cov == pytest.approx(0.0625, abs=1e-12)


def test_covariance_general_k_formula():
    rng = np.random.default_rng(17)
    for _ in range(200):
        th, p = random_model(rng)
        _, _, _, _, cov = observed_moments(th, p)
        te = th.tau_extended
        k = np.arange(1, th.k_levels + 1)
        F = logistic_cdf(th.theta - p.mu)
        G = logistic_cdf(te - p.nu)
        H = amh_cdf(p, th.theta, te)
        formula = np.sum(k * (F * (G[1:] - G[:-1]) - (H[1:] - H[:-1])))
        assert cov == pytest.approx(formula, abs=1e-12)


def test_var_y_matches_pmf_summation():
    th = Thresholds(0.1, (-1.0, 0.3, 2.0))
    p = AmhParams(0.5, 0.0, 0.3)
    _, _, my, vy, _ = observed_moments(th, p)
    py = cell_probabilities(th, p).values.sum(axis=0)
    k = np.arange(1, 5)
    assert vy == pytest.approx(k**2 @ py - (k @ py) ** 2, abs=1e-13)


def test_proportional_odds_under_location_shift():
    th = Thresholds(0.0, (-1.0, 0.5, 2.0))
    def lor(nu):
        py = cell_probabilities(th, AmhParams(0.6, 0.0, nu)).values.sum(axis=0)
        cum = np.cumsum(py)[:-1]
        lg = np.log(cum / (1 - cum))
        return lg[2] - lg[0]
    assert lor(0.0) == pytest.approx(lor(1.3), abs=1e-10)
    assert lor(0.0) == pytest.approx(3.0, abs=1e-10)


def test_goodness_of_fit():
    t = CellTable(TREK_COUNTS, "counts")
    assert goodness_of_fit(t, t) == 0.0
    e = CellTable(np.full((2, 2), 25.0), "counts")
    o = CellTable(np.array([[26.0, 24.0], [25.0, 25.0]]), "counts")
    assert goodness_of_fit(o, e) == pytest.approx(0.08, abs=1e-15)
    chi = goodness_of_fit(t, CellTable(TREK_EXPECTED, "counts"))
    assert chi == pytest.approx(0.22, abs=0.02)
    with pytest.raises(ValueError):
        goodness_of_fit(e, CellTable(np.array([[50.0, 0.0], [25.0, 25.0]]), "counts"))
    with pytest.raises(ValueError):
        goodness_of_fit(t, e)
