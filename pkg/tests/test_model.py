import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from gmmssl.model import (
    CovarianceError,
    GmmParams,
    PartiallyLabeledSample,
    bayes_classify,
    entropy,
    log_gaussian_pdf,
    mixture_logpdf,
    posterior,
    posterior_entropy,
    safe_cholesky,
)

from conftest import random_params


@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 50.0))
def test_posterior_rows_normalised_and_entropy_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    theta = random_params(rng)
    y = rng.normal(scale=scale, size=(8, theta.p))
    tau, ent = posterior_entropy(y, theta)
    assert np.all(tau >= 0.0)
    np.testing.assert_allclose(tau.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(ent >= -1e-10)
    assert np.all(ent <= np.log(theta.g) + 1e-10)


def test_posterior_against_direct_bayes_formula(rng):
    for _ in range(20):
        theta = random_params(rng)
        y = rng.normal(size=(30, theta.p))
        dens = np.column_stack(
            [theta.pi[i] * multivariate_normal(theta.mu[i], theta.covariance(i)).pdf(y) for i in range(theta.g)]
        )
        np.testing.assert_allclose(posterior(y, theta), dens / dens.sum(1, keepdims=True), atol=1e-12)
        np.testing.assert_allclose(mixture_logpdf(y, theta), np.log(dens.sum(1)), rtol=1e-11)


def test_log_gaussian_pdf_matches_scipy(rng):
    for p in (1, 2, 5):
        a = rng.normal(size=(p, p))
        sigma = a @ a.T + np.eye(p)
        mu, y = rng.normal(size=p), rng.normal(size=p)
        assert log_gaussian_pdf(y, mu, sigma) == pytest.approx(
            multivariate_normal(mu, sigma).logpdf(y), rel=1e-12
        )


def test_entropy_known_values():
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy([0.5, 0.5]) == pytest.approx(np.log(2.0), abs=1e-15)
    assert entropy(np.full(4, 0.25)) == pytest.approx(np.log(4.0), abs=1e-15)
    np.testing.assert_allclose(entropy(np.array([[1.0, 0.0], [0.5, 0.5]])), [0.0, np.log(2)])


def test_far_outlier_has_finite_scores():
    theta = GmmParams([0.5, 0.5], [[0.0], [1.0]], [[1.0]])
    tau, ent = posterior_entropy(np.array([[1e6]]), theta)
    assert np.all(np.isfinite(tau)) and np.isfinite(ent).all()
    assert np.isfinite(mixture_logpdf(np.array([[1e6]]), theta)).all()


def test_bayes_rule_ties_and_midpoint():
    theta = GmmParams([0.5, 0.5], [[-1.0], [1.0]], [[1.0]])
    assert bayes_classify(np.array([[0.0]]), theta)[0] == 1
    np.testing.assert_array_equal(bayes_classify(np.array([[-0.1], [0.1]]), theta), [1, 2])


def test_bayes_rule_is_argmax_posterior(rng):
    theta = random_params(rng, g=4, p=2)
    y = rng.normal(size=(500, 2))
    np.testing.assert_array_equal(bayes_classify(y, theta), np.argmax(posterior(y, theta), 1) + 1)


def test_permutation_relabels_consistently(rng):
    theta = random_params(rng, g=3, p=2)
    order = np.array([2, 0, 1])
    y = rng.normal(size=(50, 2))
    np.testing.assert_allclose(posterior(y, theta.permuted(order)), posterior(y, theta)[:, order], atol=1e-14)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(pi=[1.0], mu=[[0.0]], sigma=[[1.0]]),
        dict(pi=[0.5, 0.6], mu=[[0.0], [1.0]], sigma=[[1.0]]),
        dict(pi=[0.0, 1.0], mu=[[0.0], [1.0]], sigma=[[1.0]]),
        dict(pi=[0.5, 0.5], mu=[[0.0], [1.0]], sigma=np.ones((3, 1, 1))),
        dict(pi=[0.5, 0.5], mu=[[0.0, 0.0], [1.0, 1.0]], sigma=[[1.0, 0.5], [0.0, 1.0]]),
    ],
)
def test_invalid_parameters_rejected(kwargs):
    with pytest.raises(ValueError):
        GmmParams(**kwargs)


def test_non_positive_definite_covariance_names_class():
    bad = np.array([[[1.0, 0.0], [0.0, 1.0]], [[1.0, 2.0], [2.0, 1.0]]])
    with pytest.raises(CovarianceError) as err:
        GmmParams([0.5, 0.5], np.zeros((2, 2)), bad)
    assert err.value.index == 2


def test_jitter_rescues_singular_covariance():
    s = np.array([[1.0, 1.0], [1.0, 1.0]])
    L = safe_cholesky(s)
    assert np.max(np.abs(L @ L.T - s)) < 1e-3


def test_common_and_class_covariance_shapes():
    a = GmmParams([0.5, 0.5], [[0.0, 0.0], [1.0, 1.0]], np.eye(2))
    assert a.ncov == 1 and a.common and a.sigma.shape == (1, 2, 2)
    b = GmmParams([0.5, 0.5], [[0.0, 0.0], [1.0, 1.0]], np.stack([np.eye(2), 2 * np.eye(2)]))
    assert b.ncov == 2 and not b.common
    with pytest.raises(ValueError):
        a.pi[0] = 0.3


def test_sample_label_normalisation():
    s = PartiallyLabeledSample(np.zeros((4, 1)), [1, None, float("nan"), 2])
    np.testing.assert_array_equal(s.z, [1, 0, 0, 2])
    np.testing.assert_array_equal(s.m, [0, 1, 1, 0])
    with pytest.raises(ValueError):
        PartiallyLabeledSample(np.zeros((2, 1)), [1.5, 1])
    with pytest.raises(ValueError):
        PartiallyLabeledSample(np.array([[np.inf], [0.0]]), [1, 2])
    with pytest.raises(ValueError):
        s.check_labels(1)


def test_mixture_density_integrates_to_one():
    theta = GmmParams([0.3, 0.7], [[-2.0], [1.5]], np.array([[[0.5]], [[2.0]]]))
    grid = np.linspace(-15, 15, 30001)
    dens = np.exp(mixture_logpdf(grid[:, None], theta))
    assert trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(logsumexp(np.log(posterior(grid[:, None], theta)), axis=1), 0.0, atol=1e-12)
