import mpmath
import numpy as np
import pytest
from scipy.special import log_expit
from scipy.stats import multivariate_normal

from gmmssl.likelihood import (
    log_lik_classified,
    log_lik_full,
    log_lik_ignore,
    log_lik_miss,
    log_lik_parts,
    log_lik_unclassified,
)
from gmmssl.missingness import FullParams, MissingnessParams
from gmmssl.model import PartiallyLabeledSample

from conftest import random_params, random_sample


def _mp_entropy(log_scores):
    # high-precision entropy: near-certain rows lose their entropy in doubles
    with mpmath.workdps(60):
        w = [mpmath.exp(mpmath.mpf(float(v))) for v in log_scores]
        tot = mpmath.fsum(w)
        return float(-mpmath.fsum((x / tot) * mpmath.log(x / tot) for x in w if x > 0))


def _oracle(sample, theta, xi):
    dens = np.column_stack(
        [theta.pi[i] * multivariate_normal(theta.mu[i], theta.covariance(i)).pdf(sample.y) for i in range(theta.g)]
    )
    lab = sample.labeled
    c = np.sum(np.log(dens[lab, sample.z[lab] - 1]))
    u = np.sum(np.log(dens[~lab].sum(1)))
    logd = np.column_stack(
        [np.log(theta.pi[i]) + multivariate_normal(theta.mu[i], theta.covariance(i)).logpdf(sample.y) for i in range(theta.g)]
    )
    ent = np.array([_mp_entropy(row) for row in logd])
    eta = xi.xi0 + xi.xi1 * np.log(np.maximum(ent, 1e-300))
    miss = np.sum(sample.m * log_expit(eta) + (1 - sample.m) * log_expit(-eta))
    return c, u, miss


def test_parts_match_density_oracle(rng):
    for _ in range(10):
        theta = random_params(rng)
        s = random_sample(rng, theta, 60)
        xi = MissingnessParams(rng.normal(), rng.normal())
        c, u, miss = _oracle(s, theta, xi)
        assert log_lik_classified(s, theta) == pytest.approx(c, rel=1e-10)
        assert log_lik_unclassified(s, theta) == pytest.approx(u, rel=1e-10)
        assert log_lik_miss(s, FullParams(theta, xi)) == pytest.approx(miss, rel=1e-9)


def test_full_is_ignore_plus_miss_on_random_instances(rng):
    for _ in range(100):
        theta = random_params(rng)
        s = random_sample(rng, theta, int(rng.integers(5, 80)), missing=rng.uniform(0.05, 0.95))
        psi = FullParams(theta, MissingnessParams(rng.normal(scale=2), rng.normal(scale=2)))
        full = log_lik_full(s, psi)
        assert abs(full - (log_lik_ignore(s, theta) + log_lik_miss(s, psi))) <= 1e-12 * max(1.0, abs(full))
        assert sum(log_lik_parts(s, psi)) == pytest.approx(full, rel=1e-12, abs=1e-12)


def test_empty_parts_are_zero(rng):
    theta = random_params(rng, g=2, p=1)
    y = rng.normal(size=(5, 1))
    labeled = PartiallyLabeledSample(y, [1, 2, 1, 2, 1])
    unlabeled = PartiallyLabeledSample(y, [0] * 5)
    assert log_lik_unclassified(labeled, theta) == 0.0
    assert log_lik_classified(unlabeled, theta) == 0.0


def test_label_out_of_range_rejected(rng):
    theta = random_params(rng, g=2, p=1)
    s = PartiallyLabeledSample(np.zeros((2, 1)), [1, 3])
    with pytest.raises(ValueError):
        log_lik_classified(s, theta)
