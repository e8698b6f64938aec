import math

import numpy as np
import pytest

from crossfit_lab.dependence import Independent, TwoWayClustered
from crossfit_lab.dgp import (NETWORK_ATE, NETWORK_MEAN_MU, NETWORK_NOISE_VAR, TWO_WAY_ATE,
                              gen_network, gen_timeseries, gen_two_way, generate, lagged_dataset,
                              mc_truth, oracle_sample, oracle_score, oracle_scores, true_psi)
from crossfit_lab.estimators import aipw_score


def same_table(a, b):
    return (np.array_equal(a.table.covariates, b.table.covariates)
            and np.array_equal(a.table.treatment, b.table.treatment)
            and np.array_equal(a.table.outcome, b.table.outcome))


# -- two-way -----------------------------------------------------------------

def test_two_way_shape():
    ds = gen_two_way(10, 10, seed=0)
    assert ds.n == 100 and ds.table.p == 5
    assert set(np.unique(ds.table.treatment)) <= {0, 1}
    assert isinstance(ds.structure, TwoWayClustered)
    assert ds.structure.correlated_pairs() == 10 * 45 * 2


def test_two_way_rectangular_and_independent_variant():
    ds = generate("two_way", (3, 5), seed=1)
    assert ds.n == 15 and ds.params["N"] == 3
    iid = generate("two_way_independent", (4, 5), seed=1)
    assert isinstance(iid.structure, Independent) and iid.dgp == "two_way_independent"


def test_two_way_rejects_small_grid():
    with pytest.raises(ValueError):
        gen_two_way(1, 5, seed=0)


def test_beta22_probabilities():
    cdf = lambda x: 3 * x**2 - 2 * x**3  # noqa: E731
    assert math.isclose(1 - cdf(0.4), 0.648)
    assert math.isclose(1 - cdf(0.6), 0.352)
    assert math.isclose(1 - cdf(0.7), 0.216)
    assert math.isclose(NETWORK_ATE, 0.368)
    assert math.isclose(NETWORK_ATE, 2 * NETWORK_MEAN_MU)


def test_two_way_truth_by_monte_carlo():
    est, se = mc_truth("two_way", "ate", n_draws=2 * 10**6, seed=3)
    assert TWO_WAY_ATE == pytest.approx(1.045)
    assert abs(est - TWO_WAY_ATE) < 4 * se


def test_two_way_propensity_quadrature_matches_simulation():
    # 20x20 Gauss-Hermite marginal propensity against a brute-force average over latents
    ds = gen_two_way(3, 3, seed=4)
    from crossfit_lab.dgp import two_way_treatment_index
    from scipy.special import expit
    lin = two_way_treatment_index(ds.table.covariates)
    z = np.random.default_rng(5).standard_normal((2, 400_000))
    brute = expit((lin[:, None] + 0.6 * z[0] - 0.6 * z[1]) / 5).mean(axis=1)
    assert np.max(np.abs(brute - ds.oracle.g1)) < 2e-3


# -- network -----------------------------------------------------------------

def test_network_isolated_unit_noise_is_own_draw():
    ds = gen_network(200, seed=6)
    deg = ds.structure.degrees()
    iso = np.flatnonzero(deg == 0)
    assert iso.size > 0
    o = ds.oracle
    resid = ds.table.outcome - np.where(ds.table.treatment == 1, o.m1, o.m0)
    assert np.allclose(resid[iso], o.latent["delta"][iso])


def test_network_noise_variance():
    # one fixed graph, fresh noise: Var(noise_i) = sigma^2 (1 + deg_i)
    ds = gen_network(60, seed=7)
    G = ds.structure.adjacency()
    rng = np.random.default_rng(8)
    noise = np.array([2 * (rng.beta(6, 6, 60) - 0.5) + G @ (2 * (rng.beta(6, 6, 60) - 0.5))
                      for _ in range(20000)])
    expected = NETWORK_NOISE_VAR * (1 + np.asarray(G.sum(axis=1)).ravel())
    assert NETWORK_NOISE_VAR == pytest.approx(0.0769, abs=1e-4)
    assert np.allclose(noise.var(axis=0), expected, rtol=0.06)


def test_network_closed_form_nuisances():
    ds = gen_network(500, seed=9)
    W1, W2, W3 = ds.table.covariates.T
    mu = (5 * (W1 > 0.4) - 2 * (W1 > 0.6) + 3 * (W1 > 0.7) + (2 * W3 - 1) * W2 + 1)
    assert np.allclose(ds.oracle.m0, mu) and np.allclose(ds.oracle.m1, 3 * mu)
    assert np.allclose(ds.oracle.g1, 1 / (1 + np.exp(-(mu / 20 - 1))))


def test_network_oracle_score_matches_aipw():
    ds = gen_network(50, seed=10)
    o, t = ds.oracle, ds.table
    for i in (0, 17, 49):
        assert oracle_score(ds, i) == aipw_score("ate", o.m0[i], o.m1[i], o.g1[i],
                                                 t.treatment[i], t.outcome[i])


def test_network_independent_variant():
    ds = generate("network_independent", 100, seed=1)
    assert isinstance(ds.structure, Independent)
    assert np.allclose(ds.table.outcome - np.where(ds.table.treatment == 1, ds.oracle.m1,
                                                   ds.oracle.m0), ds.oracle.latent["delta"])


def test_network_rejects_small_n():
    with pytest.raises(ValueError):
        gen_network(9, seed=0)


def test_er_degree_bound_logged():
    # maximum degree of G(n, 3/n) grows like log n / log log n; record the constant
    ratios = [gen_network(1000, seed=s).structure.max_degree() / math.log(1000)
              for s in range(100)]
    print(f"max degree / log n over 100 draws at n=1000: max {max(ratios):.2f}")
    assert max(ratios) < 3


# -- time series -------------------------------------------------------------

def test_timeseries_effect_is_one():
    ds = gen_timeseries(200, seed=0)
    assert true_psi("timeseries") == 1.0
    assert np.allclose((ds.oracle.m1 - ds.oracle.m0)[4:], 1.0)


def test_timeseries_propensity_formula():
    ds = gen_timeseries(400, m=4, seed=1)
    X = ds.oracle.latent["X"]
    A = ds.table.treatment
    t = np.arange(4, 400)
    expected = 1 / (1 + np.exp(-(X[t] + np.array([A[s - 4:s].sum() for s in t]) - 0.5) / 4))
    assert np.allclose(ds.oracle.g1[t], expected)


def test_timeseries_mean_of_x():
    ds = gen_timeseries(200_000, m=4, seed=2)
    X = ds.oracle.latent["X"][4:]
    assert abs(X.mean() - 0.25 * (1 + 1 / 2 + 1 / 3 + 1 / 4) * 2.5) < 0.005
    assert abs(X.mean() - 1.302) < 0.006


def test_timeseries_rejects_short_series():
    with pytest.raises(ValueError):
        gen_timeseries(16, m=4, seed=0)


def test_lagged_dataset_alignment():
    raw = gen_timeseries(125, m=4, seed=3)
    lag = lagged_dataset(raw)
    w = lag.params["window"]
    assert w == 5 and lag.n == 125 - 5
    assert lag.table.covariate_names[:4] == ("L1_lag1", "L2_lag1", "L3_lag1", "A_lag1")
    # row 0 is time 5: its first lag is time 4
    assert np.array_equal(lag.table.covariates[0, :3], raw.table.covariates[4])
    assert lag.table.covariates[0, 3] == raw.table.treatment[4]
    assert lag.structure.n == lag.n and lag.structure.m == 4


def test_timeseries_oracle_scores_centre_on_one():
    ds = generate("timeseries", 20000, seed=4)
    s = oracle_scores(ds)
    assert abs(s.mean() - 1.0) < 3 * s.std() / math.sqrt(s.size)


# -- shared properties -------------------------------------------------------

@pytest.mark.parametrize("dgp,size", [("two_way", (6, 7)), ("network", 300),
                                      ("timeseries", 300)])
def test_determinism(dgp, size):
    assert same_table(generate(dgp, size, seed=42), generate(dgp, size, seed=42))
    assert not same_table(generate(dgp, size, seed=42), generate(dgp, size, seed=43))


@pytest.mark.parametrize("dgp,size", [("two_way", (25, 25)), ("network", 1000),
                                      ("timeseries", 1000)])
def test_treatment_prevalence(dgp, size):
    p = generate(dgp, size, seed=5).table.treatment.mean()
    assert 0.05 < p < 0.95


@pytest.mark.parametrize("dgp,size", [("two_way_independent", 200_000), ("network", 200_000),
                                      ("timeseries", 200_000)])
def test_oracle_consistency(dgp, size):
    ds = oracle_sample(dgp, size, seed=6)
    for estimand in ("ate", "cm0", "cm1"):
        s = oracle_scores(ds, estimand)
        se = s.std() / math.sqrt(s.size)
        assert abs(s.mean() - true_psi(dgp, estimand)) < 4 * se, estimand


def test_mc_truth_network():
    est, se = mc_truth("network", "ate", n_draws=4 * 10**6, seed=1)
    assert abs(est - NETWORK_ATE) < 4 * se


def test_unknown_dgp():
    with pytest.raises(ValueError):
        generate("spatial", 10)
    with pytest.raises(ValueError):
        true_psi("spatial")
