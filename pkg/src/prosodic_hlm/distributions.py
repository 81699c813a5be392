"""Conjugate-prior primitives: NIW-Gaussian, Gamma-Poisson and Dirichlet."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .model import NIWParams

LOG_2PI = np.log(2 * np.pi)


class DegenerateStatsError(ValueError):
    """Posterior scale matrix lost positive-definiteness."""


@dataclass
class SufficientStatsGaussian:
    n: int
    sum: np.ndarray
    sum_outer: np.ndarray

    @classmethod
    def empty(cls, dim: int) -> "SufficientStatsGaussian":
        return cls(0, np.zeros(dim), np.zeros((dim, dim)))

    @classmethod
    def from_data(cls, x: np.ndarray) -> "SufficientStatsGaussian":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return cls(x.shape[0], x.sum(axis=0), x.T @ x)


@dataclass
class SufficientStatsPoisson:
    n: int
    total: int

    @classmethod
    def from_data(cls, durations) -> "SufficientStatsPoisson":
        d = np.asarray(durations, dtype=np.int64)
        return cls(int(d.size), int(d.sum()))


def sample_dirichlet(concentration, rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet draw, computed in log space.

    Tiny concentrations make plain gamma draws underflow to zero, so each
    component uses ``Gamma(a) = Gamma(a + 1) * U**(1/a)`` on the log scale.
    """
    a = np.asarray(concentration, dtype=float)
    if a.ndim != 1 or a.size == 0 or not (a > 0).all() or not np.isfinite(a).all():
        raise ValueError("Dirichlet concentrations must be finite and positive")
    log_g = np.log(rng.standard_gamma(a + 1.0)) + np.log(rng.random(a.size)) / a
    p = np.exp(log_g - special.logsumexp(log_g))
    return p / p.sum()


def niw_posterior(prior: NIWParams, stats_: SufficientStatsGaussian) -> NIWParams:
    """Standard conjugate update; ``n == 0`` returns ``prior`` unchanged."""
    if stats_.n == 0:
        return prior
    n = stats_.n
    kappa_n = prior.kappa0 + n
    nu_n = prior.nu0 + n
    mu_n = (prior.kappa0 * prior.mu0 + stats_.sum) / kappa_n
    xbar = stats_.sum / n
    scatter = stats_.sum_outer - n * np.outer(xbar, xbar)
    diff = xbar - prior.mu0
    sigma_n = prior.sigma0 + scatter + (prior.kappa0 * n / kappa_n) * np.outer(diff, diff)
    sigma_n = 0.5 * (sigma_n + sigma_n.T)
    try:
        return NIWParams(mu_n, kappa_n, sigma_n, nu_n)
    except ValueError as exc:
        raise DegenerateStatsError(str(exc)) from exc


def sample_niw_gaussian(prior: NIWParams, stats_: SufficientStatsGaussian,
                        rng: np.random.Generator):
    """Draw ``(mean, cov)`` from the NIW posterior given sufficient statistics."""
    post = niw_posterior(prior, stats_)
    dim = post.dim
    if dim == 0:
        return np.zeros(0), np.zeros((0, 0))
    cov = np.asarray(stats.invwishart.rvs(df=post.nu0, scale=post.sigma0, random_state=rng),
                     dtype=float).reshape(dim, dim)
    cov = 0.5 * (cov + cov.T)
    mean = rng.multivariate_normal(post.mu0, cov / post.kappa0, method="cholesky")
    return mean, cov


def gamma_poisson_posterior(shape: float, rate: float, stats_: SufficientStatsPoisson):
    return shape + stats_.total, rate + stats_.n


def sample_gamma_poisson_rate(shape: float, rate: float, stats_: SufficientStatsPoisson,
                              rng: np.random.Generator) -> float:
    if shape <= 0 or rate <= 0:
        raise ValueError("Gamma shape and rate must be positive")
    a, b = gamma_poisson_posterior(shape, rate, stats_)
    return float(rng.gamma(a, 1.0 / b))


def log_poisson_duration(d, rate: float):
    """Poisson log-pmf restricted to ``d >= 1`` (the mass at zero is removed)."""
    d_arr = np.asarray(d)
    if (d_arr < 1).any():
        raise ValueError("durations are at least one frame")
    if rate <= 0:
        raise ValueError("rate must be positive")
    return (d_arr * np.log(rate) - rate - special.gammaln(d_arr + 1.0)
            - np.log(-np.expm1(-rate)))


def log_poisson_tail(min_d: int, rate: float) -> float:
    """``log P(X >= min_d)`` for ``X ~ Poisson(rate)``."""
    if min_d <= 0:
        return 0.0
    p = special.gammainc(min_d, rate)
    if p > 1e-300:
        return float(np.log(p))
    d = np.arange(min_d, min_d + 400)
    return float(special.logsumexp(d * np.log(rate) - rate - special.gammaln(d + 1.0)))


def log_poisson_min_duration(d, rate: float, min_d: int):
    """Poisson log-pmf restricted to ``d >= min_d`` and renormalised."""
    d_arr = np.asarray(d)
    out = (d_arr * np.log(rate) - rate - special.gammaln(d_arr + 1.0)
           - log_poisson_tail(min_d, rate))
    return np.where(d_arr >= min_d, out, -np.inf)


def log_gaussian(x, mean, cov) -> float:
    """Multivariate normal log-density via a Cholesky factor."""
    return float(log_gaussian_rows(np.atleast_2d(np.asarray(x, dtype=float)), mean, cov)[0])


def log_gaussian_rows(x: np.ndarray, mean, cov) -> np.ndarray:
    """Log-density of each row of ``x``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.asarray(cov, dtype=float).reshape(mean.size, mean.size)
    dim = mean.size
    if dim == 0:
        return np.zeros(x.shape[0])
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    z = np.linalg.solve(chol, (x - mean).T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (dim * LOG_2PI + logdet + np.einsum("ij,ij->j", z, z))


def sample_crt_tables(counts: np.ndarray, concentration: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """Number of occupied tables in a Chinese restaurant per count entry.

    ``counts[i, j]`` customers seated with concentration
    ``concentration[j]``; used by the auxiliary-variable update of the
    top-level weights of a truncated HDP.
    """
    counts = np.asarray(counts, dtype=np.int64)
    tables = np.zeros_like(counts)
    rows, cols = np.nonzero(counts)
    for i, j in zip(rows, cols):
        n = counts[i, j]
        a = concentration[j]
        tables[i, j] = int((rng.random(n) < a / (a + np.arange(n))).sum())
    return tables


def sample_from_log(logp: np.ndarray, rng: np.random.Generator) -> int:
    """Index drawn with probability proportional to ``exp(logp)``."""
    m = np.max(logp)
    if not np.isfinite(m):
        raise ValueError("all candidate probabilities are zero")
    p = np.exp(logp - m)
    c = np.cumsum(p)
    return int(np.searchsorted(c, rng.random() * c[-1], side="right"))
