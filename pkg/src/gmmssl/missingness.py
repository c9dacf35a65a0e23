"""Logistic missing-label mechanism driven by classification entropy.

The probability that the label of ``y`` is missing is

    q(y) = logistic(xi0 + xi1 * c(y)),   c(y) = log e(y)

where ``e(y)`` is the Shannon entropy of the posterior class probabilities
of ``y``.  ``c(y) = e(y)`` (raw entropy) is available for replicating
workflows that regress on the entropy directly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .model import GmmParams, posterior_entropy

ENTROPY_FLOOR = 1e-300
LOG_COVARIATE = "log"
RAW_COVARIATE = "raw"

DEGENERATE_INTERCEPT = 30.0
SEPARATION_CAP = 1e3


@dataclass(frozen=True)
class MissingnessParams:
    """Intercept and entropy slope of the missingness logistic model."""

    xi0: float
    xi1: float
    covariate: str = LOG_COVARIATE

    def __post_init__(self):
        object.__setattr__(self, "xi0", float(self.xi0))
        object.__setattr__(self, "xi1", float(self.xi1))
        if not (np.isfinite(self.xi0) and np.isfinite(self.xi1)):
            raise ValueError("missingness coefficients must be finite")
        if self.covariate not in (LOG_COVARIATE, RAW_COVARIATE):
            raise ValueError(f"unknown entropy covariate {self.covariate!r}")

    def as_array(self):
        return np.array([self.xi0, self.xi1])


@dataclass(frozen=True, eq=False)
class FullParams:
    """Classifier parameters together with the missingness coefficients."""

    theta: GmmParams
    xi: MissingnessParams


def entropy_covariate(ent, mode=LOG_COVARIATE):
    """Covariate entering the linear predictor, given per-row entropies."""
    ent = np.asarray(ent, dtype=float)
    if mode == LOG_COVARIATE:
        return np.log(np.maximum(ent, ENTROPY_FLOOR))
    return ent


def linear_predictor(y, psi):
    _, ent = posterior_entropy(y, psi.theta)
    return psi.xi.xi0 + psi.xi.xi1 * entropy_covariate(ent, psi.xi.covariate)


def q_prob(y, psi):
    """Missing-label probability for each row of ``y`` (scalar for one vector)."""
    single = np.ndim(y) <= 1 and np.size(y) == psi.theta.p
    q = expit(linear_predictor(y, psi))
    return float(q[0]) if single else q


def bernoulli_loglik(eta, m):
    """Sum of ``m log q + (1 - m) log(1 - q)`` with ``q = logistic(eta)``.

    Evaluated as ``-log(1 + exp(-eta))`` and ``-log(1 + exp(eta))`` so it
    stays finite for large ``|eta|``.
    """
    eta = np.asarray(eta, dtype=float)
    m = np.asarray(m, dtype=float)
    return float(-(m * np.logaddexp(0.0, -eta) + (1.0 - m) * np.logaddexp(0.0, eta)).sum())


def log_lik_miss(sample, psi):
    """Log-likelihood of the missing-label indicators of ``sample``."""
    if psi.xi.xi1 == 0.0:
        eta = np.full(sample.n, psi.xi.xi0)
    else:
        eta = linear_predictor(sample.y, psi)
    return bernoulli_loglik(eta, sample.m)


def expected_missing_fraction(y, psi):
    """Average missing-label probability over the rows of ``y``."""
    return float(np.mean(np.atleast_1d(q_prob(y, psi))))


@dataclass(frozen=True)
class LogisticFit:
    """Result of :func:`fit_logistic`.

    ``status`` is ``"converged"``, ``"max_iter"``, ``"degenerate"`` (constant
    response, intercept capped at +/-30) or ``"separated"`` (coefficients
    rescaled onto the cap of 1e3).
    """

    xi: MissingnessParams
    status: str
    iterations: int
    loglik: float
    cov: np.ndarray = field(repr=False)

    @property
    def flagged(self):
        return self.status in ("degenerate", "separated")

    @property
    def stderr(self):
        return np.sqrt(np.diag(self.cov))


def fit_logistic(covariate, response, *, intercept_only=False, start=None,
                 max_iter=100, tol=1e-10, covariate_mode=LOG_COVARIATE):
    """Maximum-likelihood logistic regression of ``response`` on ``covariate``.

    Newton-Raphson (iteratively reweighted least squares) with step halving.
    Stops when the largest coefficient change is below ``tol`` or after
    ``max_iter`` iterations.

    Parameters
    ----------
    covariate : (n,) array
    response : (n,) array of 0/1
    intercept_only : bool
        Fix the slope at zero and fit the intercept alone.
    start : (2,) array, optional
        Warm start for ``(xi0, xi1)``.

    Returns
    -------
    LogisticFit
    """
    x = np.asarray(covariate, dtype=float).ravel()
    r = np.asarray(response, dtype=float).ravel()
    n = r.shape[0]
    if x.shape[0] != n:
        raise ValueError("covariate and response lengths differ")
    if n < 2:
        raise ValueError("need at least two observations")
    if not np.all((r == 0.0) | (r == 1.0)):
        raise ValueError("response must be binary")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariate must be finite")

    X = np.ones((n, 1)) if intercept_only else np.column_stack([np.ones(n), x])
    k = X.shape[1]

    n_events = r.sum()
    if n_events == 0.0 or n_events == n:
        sign = 1.0 if n_events == n else -1.0
        beta = np.zeros(k)
        beta[0] = sign * DEGENERATE_INTERCEPT
        return _result(beta, "degenerate", 0, X, r, covariate_mode)

    if not intercept_only and np.ptp(x) == 0.0:
        raise ValueError("covariate is constant but the response is not")

    beta = np.zeros(k) if start is None else np.asarray(start, dtype=float)[:k].copy()
    if not np.all(np.isfinite(beta)) or np.max(np.abs(beta)) > SEPARATION_CAP:
        beta = np.zeros(k)
    ll = bernoulli_loglik(X @ beta, r)
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        mu = expit(eta)
        w = mu * (1.0 - mu)
        grad = X.T @ (r - mu)
        hess = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            ll_cand = bernoulli_loglik(X @ cand, r)
            if ll_cand >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        change = np.max(np.abs(cand - beta))
        increased = ll_cand > ll
        beta, ll = cand, max(ll, ll_cand)
        if np.max(np.abs(beta)) > SEPARATION_CAP and increased:
            beta = beta * (SEPARATION_CAP / np.max(np.abs(beta)))
            status = "separated"
            break
        if change < tol:
            status = "converged"
            break
    if status != "separated" and np.all(np.abs(r - expit(X @ beta)) < 1e-8):
        # fitted probabilities saturate: no finite maximiser exists
        status = "separated"
        big = np.max(np.abs(beta))
        if big > SEPARATION_CAP:
            beta = beta * (SEPARATION_CAP / big)
    return _result(beta, status, it, X, r, covariate_mode)


def _result(beta, status, iterations, X, r, covariate_mode):
    mu = expit(X @ beta)
    w = mu * (1.0 - mu)
    hess = (X * w[:, None]).T @ X
    k = X.shape[1]
    try:
        cov_k = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        cov_k = np.full((k, k), np.inf)
    cov = np.zeros((2, 2))
    cov[:k, :k] = cov_k
    xi1 = float(beta[1]) if k == 2 else 0.0
    return LogisticFit(
        xi=MissingnessParams(float(beta[0]), xi1, covariate_mode),
        status=status,
        iterations=iterations,
        loglik=bernoulli_loglik(X @ beta, r),
        cov=cov,
    )
