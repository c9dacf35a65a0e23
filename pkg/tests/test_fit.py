import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.stats import norm

from gmmssl.fit import (
    FitConfig,
    FitError,
    ThetaTransform,
    fit,
    fit_complete,
    fit_full,
    fit_ignore,
    initial_values,
    initial_xi,
    q_function,
    q_gradient,
    responsibilities,
    theta_from_unconstrained,
    theta_to_unconstrained,
)
from gmmssl.likelihood import log_lik_classified, log_lik_full
from gmmssl.missingness import FullParams, MissingnessParams
from gmmssl.model import GmmParams, PartiallyLabeledSample
from gmmssl.simulate import reference_model, rmix

from conftest import random_params, random_sample, reference_sample


# ---------------------------------------------------------------------------
# complete data


def test_closed_form_hand_example():
    s = PartiallyLabeledSample(np.array([[0.0], [2.0], [10.0], [12.0]]), [1, 1, 2, 2])
    r = fit_complete(s, FitConfig("com", ncov=2))
    np.testing.assert_allclose(r.theta.pi, [0.5, 0.5])
    np.testing.assert_allclose(r.theta.mu.ravel(), [1.0, 11.0])
    np.testing.assert_allclose(r.theta.sigma.ravel(), [1.0, 1.0])
    assert r.converged and r.iterations == 1


def test_closed_form_unequal_sizes_common_covariance():
    # class 1: {0, 2}; class 2: {5, 6, 10}; pooled divisor n = 5
    s = PartiallyLabeledSample(np.array([[0.0], [2.0], [5.0], [6.0], [10.0]]), [1, 1, 2, 2, 2])
    r = fit_complete(s, FitConfig("com", ncov=1))
    np.testing.assert_allclose(r.theta.pi, [0.4, 0.6])
    np.testing.assert_allclose(r.theta.mu.ravel(), [1.0, 7.0])
    np.testing.assert_allclose(r.theta.sigma.ravel(), [(1 + 1 + 4 + 1 + 9) / 5])


def _brute_force_cc(y, z):
    # independent coordinates: logit weight, two means, two log standard deviations
    def nll(v):
        p1 = 1 / (1 + np.exp(-v[0]))
        pis = np.array([p1, 1 - p1])
        mus, sds = v[1:3], np.exp(v[3:5])
        return -np.sum(np.log(pis[z - 1]) + norm.logpdf(y, mus[z - 1], sds[z - 1]))

    res = minimize(nll, np.zeros(5), method="BFGS", options={"gtol": 1e-10})
    res = minimize(nll, res.x, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 40000})
    v = res.x
    p1 = 1 / (1 + np.exp(-v[0]))
    return np.array([p1, 1 - p1]), v[1:3], np.exp(2 * v[3:5])


def test_closed_form_matches_brute_force_n20():
    rng = np.random.default_rng(20)
    z = np.array([1] * 9 + [2] * 11)
    y = np.where(z == 1, rng.normal(0, 1, 20), rng.normal(3, 2, 20))
    r = fit_complete(PartiallyLabeledSample(y[:, None], z), FitConfig("com", ncov=2))
    pi, mu, var = _brute_force_cc(y, z)
    np.testing.assert_allclose(r.theta.pi, pi, atol=1e-4)
    np.testing.assert_allclose(r.theta.mu.ravel(), mu, atol=1e-4)
    np.testing.assert_allclose(r.theta.sigma.ravel(), var, atol=1e-4)


def test_complete_fit_errors():
    y = np.arange(6.0)[:, None]
    with pytest.raises(FitError):
        fit_complete(PartiallyLabeledSample(y, [1, 1, 0, 2, 2, 2]))
    with pytest.raises(FitError):
        fit_complete(PartiallyLabeledSample(y, [1, 1, 1, 3, 3, 3]), g=3)


def test_complete_fit_invariant_to_duplication(rng):
    theta = random_params(rng, g=3, p=2)
    y, z = rmix(60, theta, 1)
    a = fit_complete(PartiallyLabeledSample(y, z)).theta
    b = fit_complete(PartiallyLabeledSample(np.vstack([y, y]), np.concatenate([z, z]))).theta
    assert a.allclose(b, atol=1e-12)


# ---------------------------------------------------------------------------
# transform and Q-function


def test_transform_round_trip(rng):
    for _ in range(1000):
        ncov = int(rng.integers(1, 3))
        theta = random_params(rng, ncov=ncov)
        v = theta_to_unconstrained(theta)
        back = theta_from_unconstrained(v, theta.g, theta.p, theta.ncov)
        assert back.allclose(theta, atol=1e-10)
        assert ThetaTransform(theta.g, theta.p, theta.ncov).size == v.size


def _fd_gradient(theta, xi, resp, sample, h=1e-6):
    tf = ThetaTransform(theta.g, theta.p, theta.ncov)
    v = tf.pack(theta)
    out = np.empty_like(v)
    for k in range(v.size):
        e = np.zeros_like(v)
        e[k] = h
        fp = q_function(tf.unpack(v + e), xi, resp, sample)
        fm = q_function(tf.unpack(v - e), xi, resp, sample)
        out[k] = (fp - fm) / (2 * h)
    return out


@pytest.mark.parametrize("covariate", ["log", "raw"])
def test_q_gradient_matches_central_differences(covariate):
    rng = np.random.default_rng(7)
    for trial in range(10):
        theta = random_params(rng, g=int(rng.integers(2, 4)), p=int(rng.integers(1, 3)), ncov=1 + trial % 2)
        s = random_sample(rng, theta, 25)
        xi = MissingnessParams(rng.normal(), rng.normal(scale=2), covariate)
        resp = responsibilities(s, theta)
        g_an = q_gradient(theta, xi, resp, s)
        g_fd = _fd_gradient(theta, xi, resp, s)
        assert np.linalg.norm(g_an - g_fd) <= 1e-5 * max(1.0, np.linalg.norm(g_fd))


def test_q_with_indicator_weights_is_classified_loglik(rng):
    theta = random_params(rng, g=3, p=2)
    y, z = rmix(40, theta, 3)
    s = PartiallyLabeledSample(y, z)
    resp = responsibilities(s, theta)
    assert q_function(theta, None, resp, s) == pytest.approx(log_lik_classified(s, theta), rel=1e-12)


# ---------------------------------------------------------------------------
# initialisation


def test_initial_means_close_on_reference_model():
    truth = reference_model().mu
    errs = []
    for seed in range(20):
        s, _ = reference_sample(seed)
        errs.append(np.abs(initial_values(s, 4, 2, seed).mu - truth))
    assert np.all(np.median(errs, axis=0) < 0.5)


def test_initial_xi_sign_on_reference_model():
    positive = 0
    for seed in range(50):
        s, _ = reference_sample(1000 + seed)
        th = initial_values(s, 4, 2, seed)
        positive += initial_xi(s, th).xi.xi1 > 0
    assert positive >= 45


def test_unlabeled_initialisation_deterministic(rng):
    theta = GmmParams([0.5, 0.5], [[-3.0], [3.0]], [[1.0]])
    y, _ = rmix(100, theta, 5)
    s = PartiallyLabeledSample(y, np.zeros(100, int))
    a, b = initial_values(s, 2, 1, seed=3), initial_values(s, 2, 1, seed=3)
    assert a.allclose(b)


def test_initial_xi_mcar_slope_near_zero():
    rng = np.random.default_rng(11)
    theta = GmmParams([0.5, 0.5], [[0.0], [2.0]], [[1.0]])
    y, z = rmix(5000, theta, rng)
    m = (rng.random(5000) < 0.4).astype(int)
    s = PartiallyLabeledSample(y, np.where(m == 1, 0, z))
    res = initial_xi(s, theta)
    assert abs(res.xi.xi1) < 3 * res.stderr[1]


def test_initial_xi_all_labeled_degenerate(rng):
    theta = GmmParams([0.5, 0.5], [[0.0], [2.0]], [[1.0]])
    y, z = rmix(50, theta, 1)
    res = initial_xi(PartiallyLabeledSample(y, z), theta)
    assert res.status == "degenerate" and res.flagged


# ---------------------------------------------------------------------------
# iterative fits


def test_em_on_complete_data_reproduces_closed_form(rng):
    theta = random_params(rng, g=2, p=2)
    y, z = rmix(80, theta, 8)
    s = PartiallyLabeledSample(y, z)
    cf = fit_complete(s, FitConfig("com", ncov=2)).theta
    em = fit_ignore(s, FitConfig("ign", ncov=2, iter_max=1), theta)
    assert em.theta.allclose(cf, atol=1e-12)


def test_em_unlabeled_recovers_separated_means():
    theta = GmmParams([0.5, 0.5], [[-2.0], [2.0]], [[1.0]])
    errs = []
    for seed in range(20):
        y, _ = rmix(2000, theta, seed)
        s = PartiallyLabeledSample(y, np.zeros(2000, int))
        r = fit(s, FitConfig("ign", ncov=1, seed=seed), g=2)
        errs.append(np.sort(r.theta.mu.ravel()) - [-2.0, 2.0])
    assert np.all(np.abs(np.median(errs, axis=0)) < 0.2)


@pytest.mark.parametrize("fit_type", ["ign", "full"])
def test_traces_non_decreasing(fit_type):
    for seed in range(5):
        s, _ = reference_sample(seed)
        r = fit(s, FitConfig(fit_type, seed=seed), g=4)
        assert np.min(np.diff(r.loglik_trace)) >= -1e-8
        assert r.converged


def test_full_objective_matches_report():
    s, _ = reference_sample(3)
    r = fit(s, FitConfig("full", seed=3), g=4)
    assert -r.objective == pytest.approx(log_lik_full(s, FullParams(r.theta, r.xi)), rel=1e-12)


def test_full_with_xi1_fixed_matches_ignore():
    for seed in range(3):
        s, _ = reference_sample(seed)
        init = initial_values(s, 4, 2, seed)
        ig = fit_ignore(s, FitConfig("ign", seed=seed), init)
        fu = fit(s, FitConfig("full", seed=seed, fix_xi1_zero=True), init=init, g=4)
        assert fu.xi.xi1 == 0.0
        for a, b in ((ig.theta.pi, fu.theta.pi), (ig.theta.mu, fu.theta.mu), (ig.theta.sigma, fu.theta.sigma)):
            np.testing.assert_allclose(a, b, atol=1e-4)


def test_full_fit_on_labeled_sample_equals_closed_form(rng):
    theta = random_params(rng, g=2, p=2)
    y, z = rmix(100, theta, 4)
    s = PartiallyLabeledSample(y, z)
    with pytest.warns(RuntimeWarning):
        r = fit(s, FitConfig("full"), g=2)
    assert r.theta.allclose(fit_complete(s).theta, atol=1e-6)
    assert r.xi_status == "degenerate"


def test_fixed_point():
    s, _ = reference_sample(5)
    cfg = FitConfig("full", seed=5)
    r = fit(s, cfg, g=4)
    again = fit_full(s, cfg, r.theta, r.xi)
    assert again.iterations <= 2
    assert abs(again.objective - r.objective) < 1e-6


def test_label_permutation_equivariance():
    s, _ = reference_sample(6)
    order = np.array([2, 0, 3, 1])  # new class k is old class order[k]
    inv = np.argsort(order)
    z_perm = np.where(s.z > 0, inv[np.maximum(s.z, 1) - 1] + 1, 0)
    sp = PartiallyLabeledSample(s.y, z_perm)
    init = initial_values(s, 4, 2, 0)
    for fit_type in ("ign", "full"):
        cfg = FitConfig(fit_type)
        a = fit(s, cfg, init=init, g=4)
        b = fit(sp, cfg, init=init.permuted(order), g=4)
        assert b.theta.allclose(a.theta.permuted(order), atol=1e-6)


def test_collapse_is_reported_not_raised():
    y = np.array([[0.0], [0.0], [0.0], [5.0], [5.1], [4.9]])
    s = PartiallyLabeledSample(y, [1, 0, 0, 2, 0, 0])
    init = GmmParams([0.5, 0.5], [[0.0], [5.0]], np.array([[[1.0]], [[1.0]]]))
    r = fit_ignore(s, FitConfig("ign", ncov=2), init)
    assert not r.converged
    assert "collapse" in r.reason


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig("bogus")
    with pytest.raises(ValueError):
        FitConfig(ncov=3)
    with pytest.raises(ValueError):
        FitConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        FitConfig(entropy_covariate="sqrt")
