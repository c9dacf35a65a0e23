"""Gaussian class densities, posterior probabilities, entropy and the Bayes rule.

Class labels are 1-based throughout the public API (``1..g``); a missing
label is stored as ``0`` (see :data:`MISSING`).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels

MISSING = 0

JITTER_START = 1e-10
JITTER_STOP = 1e-4


class CovarianceError(np.linalg.LinAlgError):
    """A covariance matrix could not be factorised even after jitter."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def safe_cholesky(sigma, index=None):
    """Lower Cholesky factor of ``sigma`` with escalating diagonal jitter.

    Jitter starts at ``1e-10 * mean(diag)`` and grows tenfold up to
    ``1e-4 * mean(diag)``.  Raises :class:`CovarianceError` naming ``index``
    (a 1-based class number, if given) when every attempt fails.
    """
    sigma = np.asarray(sigma, dtype=float)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        pass
    where = "" if index is None else f" for class {index}"
    scale = float(np.mean(np.diag(sigma)))
    if not np.isfinite(scale) or scale <= 0.0:
        # nothing to scale the jitter by: a collapsed or invalid covariance
        raise CovarianceError(f"covariance{where} has no positive variance", index=index)
    eye = np.eye(sigma.shape[0])
    jitter = JITTER_START
    while jitter <= JITTER_STOP * (1 + 1e-9):
        try:
            return np.linalg.cholesky(sigma + jitter * scale * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CovarianceError(f"covariance{where} is not positive definite", index=index)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GmmParams:
    """Mixing proportions, class means and class covariances.

    Parameters
    ----------
    pi : (g,) array
        Mixing proportions, strictly positive and summing to one.
    mu : (g, p) array
        Class means, one row per class.
    sigma : (p, p), (1, p, p) or (g, p, p) array
        One shared covariance (common mode, ``ncov == 1``) or one per class
        (unequal mode, ``ncov == 2``).
    """

    pi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).ravel()
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = sigma.reshape(1, 1, 1)
        elif sigma.ndim == 2:
            sigma = sigma[None]
        g, p = mu.shape
        if g < 2:
            raise ValueError(f"need at least two classes, got g={g}")
        if pi.shape != (g,):
            raise ValueError(f"pi has shape {pi.shape}, expected ({g},)")
        if not np.all(np.isfinite(pi)) or np.any(pi <= 0.0):
            raise ValueError("mixing proportions must be finite and strictly positive")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixing proportions sum to {pi.sum()!r}, not 1")
        if not np.all(np.isfinite(mu)):
            raise ValueError("class means must be finite")
        if sigma.shape[1:] != (p, p) or sigma.shape[0] not in (1, g):
            raise ValueError(
                f"sigma has shape {sigma.shape}, expected ({p}, {p}), (1, {p}, {p}) or ({g}, {p}, {p})"
            )
        for k, s in enumerate(sigma):
            if not np.all(np.isfinite(s)):
                raise ValueError("covariances must be finite")
            if np.max(np.abs(s - s.T)) > 1e-10 * max(1.0, np.max(np.abs(s))):
                raise ValueError(f"covariance {k + 1} is not symmetric")
        object.__setattr__(self, "pi", _frozen(pi))
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "sigma", _frozen(0.5 * (sigma + sigma.transpose(0, 2, 1))))
        # factorise eagerly so invalid covariances fail at construction
        _ = self.chol

    @property
    def g(self):
        return self.mu.shape[0]

    @property
    def p(self):
        return self.mu.shape[1]

    @property
    def ncov(self):
        """1 for a common covariance, 2 for class-specific covariances."""
        return 1 if self.sigma.shape[0] == 1 else 2

    @property
    def common(self):
        return self.ncov == 1

    @cached_property
    def chol(self):
        L = np.empty_like(self.sigma)
        for k, s in enumerate(self.sigma):
            L[k] = safe_cholesky(s, index=None if self.common else k + 1)
        L.setflags(write=False)
        return L

    def covariance(self, i):
        """Covariance of class ``i`` (0-based)."""
        return self.sigma[0] if self.common else self.sigma[i]

    def permuted(self, order):
        """Parameters with classes reordered so new class ``k`` is old ``order[k]``."""
        order = np.asarray(order)
        sigma = self.sigma if self.common else self.sigma[order]
        return GmmParams(self.pi[order], self.mu[order], sigma)

    def allclose(self, other, atol=0.0, rtol=0.0):
        return (
            self.sigma.shape == other.sigma.shape
            and self.mu.shape == other.mu.shape
            and np.allclose(self.pi, other.pi, atol=atol, rtol=rtol)
            and np.allclose(self.mu, other.mu, atol=atol, rtol=rtol)
            and np.allclose(self.sigma, other.sigma, atol=atol, rtol=rtol)
        )


@dataclass(frozen=True, eq=False)
class PartiallyLabeledSample:
    """Feature matrix with optional class labels.

    ``z`` accepts integers ``1..g``; missing entries may be given as ``0``,
    ``None`` or ``NaN`` and are stored as ``0``.
    """

    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise ValueError("y must be an (n, p) matrix")
        if not np.all(np.isfinite(y)):
            raise ValueError("features must be finite")
        z = _normalise_labels(self.z)
        if z.shape != (y.shape[0],):
            raise ValueError(f"got {z.shape[0]} labels for {y.shape[0]} rows")
        y.setflags(write=False)
        z.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.y.shape[1]

    @property
    def m(self):
        """Missing-label indicators (1 where the label is absent)."""
        return (self.z == MISSING).astype(float)

    @property
    def labeled(self):
        return self.z != MISSING

    def check_labels(self, g):
        if np.any(self.z < 0) or np.any(self.z > g):
            bad = self.z[(self.z < 0) | (self.z > g)][0]
            raise ValueError(f"label {bad} outside 1..{g}")

    def take(self, rows):
        return PartiallyLabeledSample(self.y[rows], self.z[rows])


def _normalise_labels(z):
    arr = np.asarray(z, dtype=object).ravel()
    out = np.zeros(arr.shape[0], dtype=np.int64)
    for j, v in enumerate(arr):
        if v is None:
            continue
        fv = float(v)
        if np.isnan(fv):
            continue
        if fv != int(fv):
            raise ValueError(f"label {v!r} at row {j} is not an integer")
        out[j] = int(fv)
    return out


def log_gaussian_pdf(y, mu, sigma):
    """Log density of ``N(mu, sigma)`` at ``y`` via a Cholesky factor."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    L = safe_cholesky(sigma)
    return float(kernels.component_log_densities(y[None], mu[None], L[None])[0, 0])


def log_scores(y, theta):
    """Unnormalised log posteriors ``log pi_i + log f_i(y_j)`` as an (n, g) array."""
    y = _as_rows(y, theta.p)
    return np.log(theta.pi) + kernels.component_log_densities(y, theta.mu, theta.chol)


def mixture_logpdf(y, theta):
    """Log mixture density at each row of ``y`` (scalar for a single vector)."""
    single = np.ndim(y) <= 1 and theta.p == np.size(y)
    _, log_norm, _ = kernels.log_posterior_entropy(log_scores(y, theta))
    return float(log_norm[0]) if single else log_norm


def posterior(y, theta):
    """(n, g) matrix of posterior class probabilities."""
    log_tau, _, _ = kernels.log_posterior_entropy(log_scores(y, theta))
    tau = np.exp(log_tau)
    return tau / tau.sum(axis=1, keepdims=True)


def posterior_entropy(y, theta):
    """Posterior matrix and per-row entropy in one pass."""
    log_tau, _, ent = kernels.log_posterior_entropy(log_scores(y, theta))
    return np.exp(log_tau), ent


def entropy(tau):
    """Shannon entropy (natural log) of a probability vector or of each row."""
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(tau > 0.0, tau * np.log(np.where(tau > 0.0, tau, 1.0)), 0.0)
    e = -terms.sum(axis=-1)
    e = np.maximum(e, 0.0)
    return float(e) if e.ndim == 0 else e


def bayes_classify(y, theta):
    """Allocate each row to the class of maximal posterior (labels ``1..g``).

    Ties go to the smallest class index.
    """
    return np.argmax(log_scores(y, theta), axis=1) + 1


def _as_rows(y, p):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        y = y.reshape(1, 1)
    elif y.ndim == 1:
        y = y.reshape(1, -1) if y.shape[0] == p else y.reshape(-1, 1)
    if y.shape[1] != p:
        raise ValueError(f"data have {y.shape[1]} columns, model expects {p}")
    return y
