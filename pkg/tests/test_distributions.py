import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import log_trunc_poisson, naive_log_gaussian
from prosodic_hlm.distributions import (DegenerateStatsError, SufficientStatsGaussian,
                                        SufficientStatsPoisson, gamma_poisson_posterior,
                                        log_gaussian, log_gaussian_rows, log_poisson_duration,
                                        log_poisson_min_duration, niw_posterior,
                                        sample_crt_tables, sample_dirichlet, sample_from_log,
                                        sample_gamma_poisson_rate, sample_niw_gaussian)
from prosodic_hlm.model import NIWParams


# ----------------------------------------------------------------- Dirichlet

def test_dirichlet_concentration_limit(rng):
    p = sample_dirichlet([1e9, 1e9], rng)
    assert np.allclose(p, 0.5, atol=1e-3)


def test_dirichlet_weak_limit_point_is_on_simplex(rng):
    p = sample_dirichlet([5.0, 5.0], rng)
    assert abs(p.sum() - 1) < 1e-12 and (p >= 0).all()


def test_dirichlet_monte_carlo_mean(rng):
    draws = np.array([sample_dirichlet([2.0, 1.0, 1.0], rng) for _ in range(100_000)])
    assert np.allclose(draws.mean(axis=0), [0.5, 0.25, 0.25], atol=0.01)


def test_dirichlet_tiny_concentrations_stay_finite(rng):
    p = sample_dirichlet(np.full(10, 1e-3), rng)
    assert np.isfinite(p).all() and abs(p.sum() - 1) < 1e-12


@pytest.mark.parametrize("bad", [[1.0, 0.0], [-1.0, 2.0], [np.inf, 1.0], []])
def test_dirichlet_rejects_bad_concentration(bad, rng):
    with pytest.raises(ValueError):
        sample_dirichlet(bad, rng)


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=12), st.integers(0, 2**32 - 1))
def test_dirichlet_simplex_property(conc, seed):
    p = sample_dirichlet(conc, np.random.default_rng(seed))
    assert abs(p.sum() - 1) < 1e-12 and (p >= 0).all()


def test_dirichlet_seed_reproducible():
    a = sample_dirichlet([1.0, 2.0, 3.0], np.random.default_rng(7))
    b = sample_dirichlet([1.0, 2.0, 3.0], np.random.default_rng(7))
    assert np.array_equal(a, b)


# ----------------------------------------------------------------------- NIW

def test_niw_posterior_hand_computed_exact():
    prior = NIWParams(np.zeros(2), 1.0, np.eye(2), 4.0)
    x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]])
    post = niw_posterior(prior, SufficientStatsGaussian.from_data(x))
    assert post.kappa0 == 4.0
    assert post.nu0 == 7.0
    assert post.mu0.tolist() == [2.25, 1.5]
    assert post.sigma0.tolist() == [[15.75, 0.5], [0.5, 12.0]]


def test_niw_posterior_matches_rational_arithmetic():
    """Default emission prior (kappa0 = 0.01) against exact rational arithmetic."""
    mu0 = [Fraction(1, 2), Fraction(-1, 4)]
    kappa0 = Fraction(0.01)
    prior = NIWParams(np.array([float(m) for m in mu0]), float(kappa0), np.eye(2), 4.0)
    x = [[Fraction(1), Fraction(2)], [Fraction(-3), Fraction(5)], [Fraction(2), Fraction(0)],
         [Fraction(7), Fraction(-1)]]
    post = niw_posterior(prior, SufficientStatsGaussian.from_data(np.array(x, dtype=float)))
    n = len(x)
    s = [sum(r[i] for r in x) for i in range(2)]
    kn = kappa0 + n
    mun = [(kappa0 * mu0[i] + s[i]) / kn for i in range(2)]
    xbar = [s[i] / n for i in range(2)]
    for i in range(2):
        assert post.mu0[i] == pytest.approx(float(mun[i]), rel=1e-15, abs=0)
        for j in range(2):
            scatter = sum(r[i] * r[j] for r in x) - n * xbar[i] * xbar[j]
            shrink = kappa0 * n / kn * (xbar[i] - mu0[i]) * (xbar[j] - mu0[j])
            want = (1 if i == j else 0) + scatter + shrink
            assert post.sigma0[i, j] == pytest.approx(float(want), rel=1e-13, abs=0)
    assert post.kappa0 == float(kn) and post.nu0 == 8.0


def test_niw_empty_stats_returns_prior_exactly():
    prior = NIWParams(np.array([1.0, 2.0]), 0.3, np.array([[2.0, 0.5], [0.5, 1.0]]), 5.0)
    post = niw_posterior(prior, SufficientStatsGaussian.empty(2))
    assert post is prior


def test_niw_posterior_mean_concentrates(rng):
    prior = NIWParams.standard(3, 0.0, 0.01)
    m = np.array([1.5, -2.0, 0.5])
    x = rng.normal(size=(10_000, 3)) + m
    mean, cov = sample_niw_gaussian(prior, SufficientStatsGaussian.from_data(x), rng)
    assert np.all(np.abs(mean - m) < 0.05)
    assert np.allclose(cov, np.eye(3), atol=0.1)


def test_prosody_boundary_prior_draws_centre_near_one(rng):
    prior = NIWParams.standard(2, 1.0, 2.0)
    means = np.array([sample_niw_gaussian(prior, SufficientStatsGaussian.empty(2), rng)[0]
                      for _ in range(4000)])
    assert np.allclose(np.median(means, axis=0), 1.0, atol=0.1)


def test_niw_draw_is_spd(rng):
    prior = NIWParams.standard(4, 0.0, 0.01)
    for _ in range(50):
        _, cov = sample_niw_gaussian(prior, SufficientStatsGaussian.empty(4), rng)
        np.linalg.cholesky(cov)
        assert np.array_equal(cov, cov.T)


def test_niw_degenerate_stats_rejected():
    prior = NIWParams.standard(2, 0.0, 1.0)
    broken = SufficientStatsGaussian(2, np.zeros(2), -100 * np.eye(2))
    with pytest.raises(DegenerateStatsError):
        niw_posterior(prior, broken)


def test_niw_zero_dimension_is_a_no_op(rng):
    mean, cov = sample_niw_gaussian(NIWParams.standard(0), SufficientStatsGaussian.empty(0), rng)
    assert mean.shape == (0,) and cov.shape == (0, 0)


# ------------------------------------------------------------- Gamma-Poisson

def test_gamma_poisson_posterior_exact():
    assert gamma_poisson_posterior(200.0, 10.0, SufficientStatsPoisson(0, 0)) == (200.0, 10.0)
    assert gamma_poisson_posterior(200.0, 10.0, SufficientStatsPoisson(100, 1500)) == (1700.0, 110.0)
    assert gamma_poisson_posterior(200.0, 10.0, SufficientStatsPoisson(1, 1)) == (201.0, 11.0)


@pytest.mark.parametrize("n,total,mean", [
    (0, 0, 20.0),
    (100, 1500, 1700 / 110),
    (1, 1, 201 / 11),
])
def test_gamma_poisson_monte_carlo_mean(n, total, mean, rng):
    draws = [sample_gamma_poisson_rate(200.0, 10.0, SufficientStatsPoisson(n, total), rng)
             for _ in range(100_000)]
    assert abs(np.mean(draws) - mean) < 0.1


def test_gamma_poisson_rejects_bad_prior(rng):
    with pytest.raises(ValueError):
        sample_gamma_poisson_rate(0.0, 1.0, SufficientStatsPoisson(0, 0), rng)


# ------------------------------------------------------------ duration pmfs

def test_duration_pmf_small_rate_puts_mass_at_one():
    assert log_poisson_duration(1, 1e-8) == pytest.approx(0.0, abs=1e-7)


def test_duration_pmf_direct_formula():
    want = math.log(stats.poisson.pmf(20, 20) / (1 - math.exp(-20)))
    assert float(log_poisson_duration(20, 20.0)) == pytest.approx(want, abs=1e-12)


def test_duration_pmf_normalised():
    d = np.arange(1, 501)
    assert abs(np.exp(log_poisson_duration(d, 20.0)).sum() - 1) < 1e-10


def test_duration_pmf_rejects_zero():
    with pytest.raises(ValueError):
        log_poisson_duration(0, 3.0)


@given(st.floats(0.05, 60.0), st.integers(1, 200))
def test_duration_pmf_matches_independent_formula(rate, d):
    assert float(log_poisson_duration(d, rate)) == pytest.approx(log_trunc_poisson(d, rate), abs=1e-9)


@given(st.floats(0.5, 80.0), st.integers(1, 10))
def test_min_duration_pmf_normalised(rate, min_d):
    d = np.arange(1, 800)
    p = np.exp(log_poisson_min_duration(d, rate, min_d))
    assert abs(p.sum() - 1) < 1e-9
    assert (p[:min_d - 1] == 0).all()


# ---------------------------------------------------------------- Gaussians

def test_log_gaussian_standard_mode():
    assert log_gaussian([0.0], [0.0], [[1.0]]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_log_gaussian_at_mean_2d():
    cov = np.array([[2.0, 0.3], [0.3, 0.5]])
    want = -math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(cov))
    assert log_gaussian([1.0, -1.0], [1.0, -1.0], cov) == pytest.approx(want, abs=1e-12)


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_log_gaussian_matches_naive(dim, seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(dim, dim))
    cov = a @ a.T + 0.5 * np.eye(dim)
    x, mean = r.normal(size=dim), r.normal(size=dim)
    assert log_gaussian(x, mean, cov) == pytest.approx(naive_log_gaussian(x, mean, cov), abs=1e-10)


def test_log_gaussian_rows_agree_with_single_calls(rng):
    cov = np.array([[1.0, 0.2], [0.2, 0.7]])
    x = rng.normal(size=(7, 2))
    rows = log_gaussian_rows(x, [0.1, 0.2], cov)
    assert np.allclose(rows, [log_gaussian(xi, [0.1, 0.2], cov) for xi in x], atol=1e-13)


def test_log_gaussian_rejects_non_spd():
    with pytest.raises(ValueError):
        log_gaussian([0.0, 0.0], [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


# -------------------------------------------------------------- misc samplers

def test_crt_tables_bounds_and_mean(rng):
    counts = np.array([[0, 5], [30, 1]])
    t = sample_crt_tables(counts, np.array([2.0, 0.5]), rng)
    assert (t <= counts).all() and (t[counts > 0] >= 1).all() and t[0, 0] == 0
    # E[tables] = sum_k a / (a + k)
    draws = [sample_crt_tables(np.array([[30]]), np.array([2.0]), rng)[0, 0] for _ in range(20000)]
    want = sum(2.0 / (2.0 + k) for k in range(30))
    assert abs(np.mean(draws) - want) < 0.05


def test_sample_from_log_never_picks_impossible(rng):
    logp = np.array([-np.inf, 0.0, -np.inf, np.log(3.0)])
    picks = np.array([sample_from_log(logp, rng) for _ in range(20000)])
    assert set(picks.tolist()) <= {1, 3}
    assert abs((picks == 3).mean() - 0.75) < 0.015
    with pytest.raises(ValueError):
        sample_from_log(np.full(3, -np.inf), rng)
