"""Parameter estimation for complete, ignore-missingness and full likelihoods.

* :func:`fit_complete` - closed-form maximum likelihood on a fully labeled sample.
* :func:`fit_ignore` - EM on the partial-sample likelihood that ignores why
  labels are missing.
* :func:`fit_full` - ECM on the full likelihood including the entropy-based
  missingness model.  CM-1 maximises the Q-function over the classifier
  parameters with L-BFGS in an unconstrained coordinate system; CM-2 refits
  the logistic missingness model.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from . import kernels
from .likelihood import log_lik_parts
from .missingness import (
    ENTROPY_FLOOR,
    LOG_COVARIATE,
    RAW_COVARIATE,
    FullParams,
    MissingnessParams,
    bernoulli_loglik,
    entropy_covariate,
    fit_logistic,
)
from .model import CovarianceError, GmmParams, posterior_entropy, safe_cholesky

FIT_TYPES = ("com", "ign", "full")
MIN_PROPORTION = 1e-8
ABS_TOL_FLOOR = 1e-12
LOG_2PI = np.log(2.0 * np.pi)


class FitError(ValueError):
    """Input that a fitter cannot accept (e.g. missing labels for ``com``)."""


@dataclass(frozen=True)
class FitConfig:
    """Fitting controls; defaults follow the reference package."""

    fit_type: str = "full"
    ncov: int = 2
    iter_max: int = 500
    eval_max: int = 500
    rel_tol: float = 1e-15
    sing_tol: float = 1e-15
    seed: int = 0
    fix_xi1_zero: bool = False
    entropy_covariate: str = LOG_COVARIATE

    def __post_init__(self):
        if self.fit_type not in FIT_TYPES:
            raise ValueError(f"fit_type must be one of {FIT_TYPES}, got {self.fit_type!r}")
        if self.ncov not in (1, 2):
            raise ValueError(f"ncov must be 1 or 2, got {self.ncov!r}")
        if self.iter_max < 1 or self.eval_max < 1:
            raise ValueError("iteration and evaluation limits must be positive")
        for name in ("rel_tol", "sing_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")
        if self.entropy_covariate not in (LOG_COVARIATE, RAW_COVARIATE):
            raise ValueError(f"unknown entropy covariate {self.entropy_covariate!r}")


@dataclass(eq=False)
class FitReport:
    """Outcome of a fit.

    ``objective`` is the final *negative* log-likelihood of the objective
    matching ``fit_type``; ``loglik_trace`` holds the log-likelihood after
    each iteration (index 0 is the starting value for iterative fits).
    """

    fit_type: str
    theta: GmmParams
    xi: MissingnessParams | None
    objective: float
    converged: bool
    reason: str
    iterations: int
    loglik_trace: np.ndarray = field(repr=False)
    xi_status: str | None = None

    @property
    def ncov(self):
        return self.theta.ncov

    @property
    def params(self):
        return FullParams(self.theta, self.xi) if self.xi is not None else self.theta


# ---------------------------------------------------------------------------
# unconstrained coordinates


class ThetaTransform:
    """Map between :class:`GmmParams` and an unconstrained real vector.

    Layout: ``g - 1`` log-ratio weights (class ``g`` is the reference), the
    ``g * p`` means row by row, then for each stored covariance the lower
    triangle of its Cholesky factor in row-major order with the diagonal on
    the log scale.
    """

    def __init__(self, g, p, ncov):
        self.g, self.p, self.ncov = g, p, ncov
        self.k = 1 if ncov == 1 else g
        self.tril = np.tril_indices(p)
        self.diag_pos = np.flatnonzero(self.tril[0] == self.tril[1])
        self.n_tri = len(self.tril[0])
        self.size = (g - 1) + g * p + self.k * self.n_tri

    def split(self, v):
        g, p = self.g, self.p
        a = v[: g - 1]
        mu = v[g - 1 : g - 1 + g * p].reshape(g, p)
        tri = v[g - 1 + g * p :].reshape(self.k, self.n_tri)
        return a, mu, tri

    def log_pi(self, a):
        full = np.append(a, 0.0)
        return full - logsumexp(full)

    def chol(self, tri):
        L = np.zeros((self.k, self.p, self.p))
        vals = tri.copy()
        vals[:, self.diag_pos] = np.exp(vals[:, self.diag_pos])
        L[:, self.tril[0], self.tril[1]] = vals
        return L

    def pack(self, theta):
        if (theta.g, theta.p, theta.ncov) != (self.g, self.p, self.ncov):
            raise ValueError("parameter shape does not match the transform")
        logp = np.log(theta.pi)
        a = logp[:-1] - logp[-1]
        tri = theta.chol[:, self.tril[0], self.tril[1]].copy()
        tri[:, self.diag_pos] = np.log(tri[:, self.diag_pos])
        return np.concatenate([a, theta.mu.ravel(), tri.ravel()])

    def unpack(self, v):
        a, mu, tri = self.split(np.asarray(v, dtype=float))
        pi = np.exp(self.log_pi(a))
        pi = pi / pi.sum()
        L = self.chol(tri)
        sigma = L @ L.transpose(0, 2, 1)
        return GmmParams(pi, mu, sigma)


def theta_to_unconstrained(theta):
    return ThetaTransform(theta.g, theta.p, theta.ncov).pack(theta)


def theta_from_unconstrained(v, g, p, ncov):
    return ThetaTransform(g, p, ncov).unpack(v)


# ---------------------------------------------------------------------------
# E-step and Q-function


def responsibilities(sample, theta):
    """Class weights per row: label indicators where known, posteriors elsewhere."""
    sample.check_labels(theta.g)
    tau, _ = posterior_entropy(sample.y, theta)
    lab = sample.labeled
    tau[lab] = 0.0
    tau[lab, sample.z[lab] - 1] = 1.0
    return tau


def _q_eval(v, tf, y, resp, m, xi, want_grad):
    a, mu, tri = tf.split(v)
    log_pi = tf.log_pi(a)
    L = tf.chol(tri)
    n, p = y.shape
    g = tf.g
    Z = np.empty((g, n, p))
    logf = np.empty((n, g))
    for i in range(g):
        c = 0 if tf.k == 1 else i
        zi = solve_triangular(L[c], (y - mu[i]).T, lower=True, check_finite=False)
        Z[i] = zi.T
        logf[:, i] = (
            -0.5 * p * LOG_2PI - np.log(np.diag(L[c])).sum() - 0.5 * np.einsum("ij,ij->j", zi, zi)
        )
    s = logf + log_pi
    value = float(np.sum(resp * s))
    W = resp
    if xi is not None:
        log_tau, _, ent = kernels.log_posterior_entropy(s)
        if xi.covariate == LOG_COVARIATE:
            cov = np.log(np.maximum(ent, ENTROPY_FLOOR))
        else:
            cov = ent
        eta = xi.xi0 + xi.xi1 * cov
        value += bernoulli_loglik(eta, m)
        if want_grad and xi.xi1 != 0.0:
            q = expit(eta)
            if xi.covariate == LOG_COVARIATE:
                dcov = np.where(ent > ENTROPY_FLOOR, 1.0 / np.maximum(ent, ENTROPY_FLOOR), 0.0)
            else:
                dcov = np.ones_like(ent)
            factor = (m - q) * xi.xi1 * dcov
            W = resp + kernels.entropy_score_weights(log_tau, ent, factor)
    if not want_grad:
        return value
    wsum = W.sum(axis=0)
    grad_a = wsum[:-1] - np.exp(log_pi[:-1]) * wsum.sum()
    grad_mu = np.empty((g, p))
    grad_L = np.zeros((tf.k, p, p))
    for i in range(g):
        c = 0 if tf.k == 1 else i
        wz = W[:, i] @ Z[i]
        grad_mu[i] = solve_triangular(L[c], wz, lower=True, trans="T", check_finite=False)
        M = (Z[i] * W[:, i, None]).T @ Z[i] - wsum[i] * np.eye(p)
        grad_L[c] += solve_triangular(L[c], M, lower=True, trans="T", check_finite=False)
    gtri = grad_L[:, tf.tril[0], tf.tril[1]]
    gtri[:, tf.diag_pos] *= L[:, tf.tril[0], tf.tril[1]][:, tf.diag_pos]
    return value, np.concatenate([grad_a, grad_mu.ravel(), gtri.ravel()])


def q_function(theta, xi, resp, sample):
    """ECM surrogate: expected complete-data log-likelihood plus the
    missingness log-likelihood at ``(theta, xi)``.

    ``resp`` are the E-step weights (see :func:`responsibilities`).  Pass
    ``xi=None`` to drop the missingness block.
    """
    tf = ThetaTransform(theta.g, theta.p, theta.ncov)
    return _q_eval(tf.pack(theta), tf, sample.y, np.asarray(resp, float), sample.m, xi, False)


def q_gradient(theta, xi, resp, sample):
    """Analytic gradient of :func:`q_function` in unconstrained coordinates."""
    tf = ThetaTransform(theta.g, theta.p, theta.ncov)
    return _q_eval(tf.pack(theta), tf, sample.y, np.asarray(resp, float), sample.m, xi, True)[1]


# ---------------------------------------------------------------------------
# closed-form pieces


def weighted_mstep(y, resp, ncov):
    """Closed-form maximiser of the complete-data part for weights ``resp``."""
    n, p = y.shape
    nk = resp.sum(axis=0)
    if np.any(nk <= 0.0):
        empty = int(np.flatnonzero(nk <= 0.0)[0]) + 1
        raise CovarianceError(f"class {empty} has no weight", index=empty)
    pi = nk / nk.sum()
    mu = (resp.T @ y) / nk[:, None]
    g = resp.shape[1]
    covs = np.empty((g, p, p))
    for i in range(g):
        d = y - mu[i]
        covs[i] = (d * resp[:, i, None]).T @ d
    if ncov == 1:
        sigma = covs.sum(axis=0) / nk.sum()
        sigma = sigma[None]
    else:
        sigma = covs / nk[:, None, None]
    sigma = 0.5 * (sigma + sigma.transpose(0, 2, 1))
    for k, s in enumerate(sigma):
        safe_cholesky(s, index=None if ncov == 1 else k + 1)
    return GmmParams(pi, mu, sigma)


def _indicators(z, g):
    resp = np.zeros((z.shape[0], g))
    resp[np.arange(z.shape[0]), z - 1] = 1.0
    return resp


def fit_complete(sample, config=FitConfig(fit_type="com"), g=None):
    """Closed-form MLE from a fully labeled sample.

    Proportions ``n_i / n``, class means, and covariances with divisor
    ``n_i`` (pooled with divisor ``n`` when ``ncov == 1``).
    """
    if not sample.labeled.all():
        raise FitError("sample has missing labels; use fit_ignore or fit_full")
    g = int(sample.z.max()) if g is None else g
    sample.check_labels(g)
    counts = np.bincount(sample.z, minlength=g + 1)[1:]
    if np.any(counts == 0):
        raise FitError(f"class {int(np.flatnonzero(counts == 0)[0]) + 1} has no observations")
    theta = weighted_mstep(sample.y, _indicators(sample.z, g), config.ncov)
    classified, _, _ = log_lik_parts(sample, FullParams(theta, MissingnessParams(0.0, 0.0)))
    return FitReport(
        fit_type="com",
        theta=theta,
        xi=None,
        objective=-classified,
        converged=True,
        reason="closed form",
        iterations=1,
        loglik_trace=np.array([classified]),
    )


# ---------------------------------------------------------------------------
# initial values


def _kmeans(y, g, seed, restarts=10):
    best = None
    children = np.random.SeedSequence(seed).spawn(restarts)
    for child in children:
        rng = np.random.default_rng(child)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            centers, labels = kmeans2(y, g, minit="++", seed=rng)
        inertia = float(np.sum((y - centers[labels]) ** 2))
        if best is None or inertia < best[0]:
            best = (inertia, labels)
    return best[1]


def _match_clusters(clusters, z, g):
    """Map cluster ids to class labels by majority vote, then by size."""
    votes = np.zeros((g, g), dtype=int)
    lab = z > 0
    np.add.at(votes, (clusters[lab], z[lab] - 1), 1)
    mapping = -np.ones(g, dtype=int)
    used = np.zeros(g, dtype=bool)
    order = np.argsort(-votes, axis=None, kind="stable")
    for flat in order:
        c, k = divmod(int(flat), g)
        if votes[c, k] == 0:
            break
        if mapping[c] < 0 and not used[k]:
            mapping[c] = k
            used[k] = True
    sizes = np.bincount(clusters, minlength=g)
    free = iter(np.flatnonzero(~used))
    for c in sorted(np.flatnonzero(mapping < 0), key=lambda c: (-sizes[c], c)):
        mapping[c] = next(free)
    return mapping


def _partition_params(y, labels0, g, ncov):
    n, p = y.shape
    counts = np.bincount(labels0, minlength=g)
    if np.any(counts == 0):
        raise FitError(f"class {int(np.flatnonzero(counts == 0)[0]) + 1} received no rows")
    resp = np.zeros((n, g))
    resp[np.arange(n), labels0] = 1.0
    pi = counts / n
    mu = (resp.T @ y) / counts[:, None]
    pooled = sum(((y[labels0 == i] - mu[i]).T @ (y[labels0 == i] - mu[i])) for i in range(g)) / n
    if ncov == 1:
        sigma = pooled[None]
    else:
        sigma = np.empty((g, p, p))
        for i in range(g):
            d = y[labels0 == i] - mu[i]
            sigma[i] = d.T @ d / counts[i] if counts[i] > p else pooled
    for k in range(sigma.shape[0]):
        L = safe_cholesky(sigma[k], index=None if ncov == 1 else k + 1)
        sigma[k] = L @ L.T
    return GmmParams(pi, mu, sigma)


def initial_values(sample, g, ncov=2, seed=0):
    """Starting classifier parameters for the iterative fitters.

    When every class has at least ``p + 1`` labeled rows the estimates come
    from the labeled rows alone.  Otherwise k-means (10 seeded restarts) runs
    on all rows, clusters are matched to classes by majority vote of their
    labeled members, and labeled rows keep their own labels.
    """
    sample.check_labels(g)
    n, p = sample.y.shape
    if n < g:
        raise FitError(f"need at least g={g} rows, got {n}")
    lab = sample.labeled
    counts = np.bincount(sample.z[lab], minlength=g + 1)[1:]
    if np.all(counts >= p + 1):
        return _partition_params(sample.y[lab], sample.z[lab] - 1, g, ncov)
    if np.any(counts == 0) and n < g * (p + 1):
        raise FitError("too few rows for k-means initialisation")
    clusters = _kmeans(sample.y, g, seed)
    mapping = _match_clusters(clusters, sample.z, g)
    labels0 = mapping[clusters]
    labels0[lab] = sample.z[lab] - 1
    return _partition_params(sample.y, labels0, g, ncov)


def initial_xi(sample, theta0, covariate=LOG_COVARIATE, fix_xi1_zero=False):
    """Logistic fit of the missing indicators on the entropy covariate under ``theta0``."""
    _, ent = posterior_entropy(sample.y, theta0)
    return fit_logistic(
        entropy_covariate(ent, covariate),
        sample.m,
        intercept_only=fix_xi1_zero,
        covariate_mode=covariate,
    )


# ---------------------------------------------------------------------------
# iterative fitters


def _tolerance(ll, rel_tol):
    return max(rel_tol * (abs(ll) + rel_tol), ABS_TOL_FLOOR)


def fit_ignore(sample, config, init):
    """EM on the ignore-missingness likelihood, starting from ``init``."""
    sample.check_labels(init.g)
    ncov = config.ncov
    theta = init if init.ncov == ncov else _recast(init, ncov)
    ll = _ll_ignore(sample, theta)
    trace = [ll]
    converged, reason = False, "iteration limit"
    it = 0
    for it in range(1, config.iter_max + 1):
        resp = responsibilities(sample, theta)
        try:
            new = weighted_mstep(sample.y, resp, ncov)
        except CovarianceError as exc:
            reason = f"component collapse: {exc}"
            it -= 1
            break
        if np.min(new.pi) < MIN_PROPORTION:
            reason = "component collapse: mixing proportion below 1e-8"
            it -= 1
            break
        ll_new = _ll_ignore(sample, new)
        step = _param_change(theta, new)
        gain = ll_new - ll
        theta, ll = new, ll_new
        trace.append(ll)
        if gain < _tolerance(ll, config.rel_tol):
            converged, reason = True, "relative tolerance"
            break
        if step < config.sing_tol:
            converged, reason = True, "singular convergence"
            break
    return FitReport(
        fit_type="ign",
        theta=theta,
        xi=None,
        objective=-ll,
        converged=converged,
        reason=reason,
        iterations=it,
        loglik_trace=np.array(trace),
    )


def _cm1(theta, xi, resp, sample, tf, config):
    y, m = sample.y, sample.m
    v0 = tf.pack(theta)
    scale = 1.0 / sample.n

    def neg(v):
        try:
            val, grad = _q_eval(v, tf, y, resp, m, xi, True)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError):
            return np.inf, np.zeros_like(v)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            return np.inf, np.zeros_like(v)
        return -val * scale, -grad * scale

    f0 = neg(v0)[0]
    best_v, best_f = v0, f0
    start_v, start_f = v0, f0
    try:
        cf = tf.pack(weighted_mstep(y, resp, config.ncov))
        f_cf = neg(cf)[0]
        if f_cf < start_f:
            start_v, start_f = cf, f_cf
    except (CovarianceError, ValueError):
        pass
    if start_f < best_f:
        best_v, best_f = start_v, start_f
    res = minimize(
        neg,
        start_v,
        jac=True,
        method="L-BFGS-B",
        options={"maxfun": config.eval_max, "maxiter": config.eval_max, "ftol": 1e-15, "gtol": 1e-10},
    )
    if np.isfinite(res.fun) and res.fun < best_f:
        best_v, best_f = res.x, res.fun
    ok = bool(res.success) or res.status == 2  # status 2: no further progress possible
    return tf.unpack(best_v), best_f < f0, ok, res.message


def fit_full(sample, config, init_theta, init_xi):
    """ECM on the full likelihood, starting from ``(init_theta, init_xi)``.

    Each iteration computes E-step weights under the current parameters,
    maximises the Q-function over the classifier parameters with the
    missingness coefficients held fixed (CM-1), then refits the missingness
    logistic regression on the updated entropies (CM-2).  A CM-1 proposal is
    only accepted when it does not lower Q, and a CM-2 proposal only when it
    does not lower the indicator likelihood, so the full log-likelihood is
    non-decreasing.
    """
    sample.check_labels(init_theta.g)
    n_lab = int(sample.labeled.sum())
    if n_lab == 0 or n_lab == sample.n:
        warnings.warn(
            "full fit works best with both labeled and unlabeled rows", RuntimeWarning, stacklevel=2
        )
    ncov = config.ncov
    theta = init_theta if init_theta.ncov == ncov else _recast(init_theta, ncov)
    if isinstance(init_xi, MissingnessParams):
        xi = init_xi
    else:
        xi = MissingnessParams(*np.asarray(init_xi, float)[:2], config.entropy_covariate)
    if xi.covariate != config.entropy_covariate:
        xi = replace(xi, covariate=config.entropy_covariate)
    if config.fix_xi1_zero:
        xi = replace(xi, xi1=0.0)
    tf = ThetaTransform(theta.g, theta.p, ncov)
    ll = _ll_full(sample, theta, xi)
    trace = [ll]
    converged, reason = False, "iteration limit"
    xi_status = None
    it = 0
    for it in range(1, config.iter_max + 1):
        resp = responsibilities(sample, theta)
        try:
            new_theta, _, ok, message = _cm1(theta, xi, resp, sample, tf, config)
        except CovarianceError as exc:
            reason = f"component collapse: {exc}"
            it -= 1
            break
        if np.min(new_theta.pi) < MIN_PROPORTION:
            reason = "component collapse: mixing proportion below 1e-8"
            it -= 1
            break
        new_xi, xi_status = _cm2(sample, new_theta, xi, config)
        ll_new = _ll_full(sample, new_theta, new_xi)
        step = max(
            _param_change(theta, new_theta),
            float(np.max(np.abs(new_xi.as_array() - xi.as_array()))),
        )
        gain = ll_new - ll
        theta, xi, ll = new_theta, new_xi, ll_new
        trace.append(ll)
        if not ok and gain <= 0.0:
            reason = f"CM-1 optimizer failure: {message}"
            break
        if gain < _tolerance(ll, config.rel_tol):
            converged, reason = True, "relative tolerance"
            break
        if step < config.sing_tol:
            converged, reason = True, "singular convergence"
            break
    return FitReport(
        fit_type="full",
        theta=theta,
        xi=xi,
        objective=-ll,
        converged=converged,
        reason=reason,
        iterations=it,
        loglik_trace=np.array(trace),
        xi_status=xi_status,
    )


def _cm2(sample, theta, xi, config):
    _, ent = posterior_entropy(sample.y, theta)
    cov = entropy_covariate(ent, xi.covariate)
    res = fit_logistic(
        cov,
        sample.m,
        intercept_only=config.fix_xi1_zero,
        start=xi.as_array(),
        covariate_mode=xi.covariate,
    )
    old = bernoulli_loglik(xi.xi0 + xi.xi1 * cov, sample.m)
    new = bernoulli_loglik(res.xi.xi0 + res.xi.xi1 * cov, sample.m)
    if new >= old:
        return res.xi, res.status
    return xi, res.status


def fit(sample, config, init=None, init_xi=None, g=None):
    """Dispatch on ``config.fit_type``, building initial values when absent."""
    if config.fit_type == "com":
        return fit_complete(sample, config, g=g if init is None else init.g)
    if init is None:
        if g is None:
            raise ValueError("g is required when no initial parameters are given")
        init = initial_values(sample, g, config.ncov, config.seed)
    if config.fit_type == "ign":
        return fit_ignore(sample, config, init)
    if init_xi is None:
        init_xi = initial_xi(sample, init, config.entropy_covariate, config.fix_xi1_zero).xi
    return fit_full(sample, config, init, init_xi)


# ---------------------------------------------------------------------------
# helpers


def _ll_ignore(sample, theta):
    c, u, _ = log_lik_parts(sample, FullParams(theta, MissingnessParams(0.0, 0.0)))
    return c + u


def _ll_full(sample, theta, xi):
    c, u, miss = log_lik_parts(sample, FullParams(theta, xi))
    return c + u + miss


def _param_change(a, b):
    return float(
        max(np.max(np.abs(a.pi - b.pi)), np.max(np.abs(a.mu - b.mu)), np.max(np.abs(a.sigma - b.sigma)))
    )


def _recast(theta, ncov):
    if ncov == theta.ncov:
        return theta
    if ncov == 1:
        pooled = np.einsum("i,ijk->jk", theta.pi, theta.sigma)
        return GmmParams(theta.pi, theta.mu, pooled)
    return GmmParams(theta.pi, theta.mu, np.repeat(theta.sigma, theta.g, axis=0))
