"""Log-likelihood objectives for partially labeled samples.

``log_lik_full`` is built by composing ``log_lik_ignore`` and
``log_lik_miss`` so the decomposition holds exactly as implemented.
"""

import numpy as np

from . import kernels
from .missingness import (
    bernoulli_loglik,
    entropy_covariate,
    expected_missing_fraction,
    log_lik_miss,
)
from .model import log_scores

__all__ = [
    "log_lik_classified",
    "log_lik_unclassified",
    "log_lik_ignore",
    "log_lik_miss",
    "log_lik_full",
    "expected_missing_fraction",
    "log_lik_parts",
]


def log_lik_classified(sample, theta):
    """Sum of ``log pi_z + log f_z(y)`` over labeled rows (0 if none)."""
    sample.check_labels(theta.g)
    lab = sample.labeled
    if not lab.any():
        return 0.0
    s = log_scores(sample.y[lab], theta)
    return float(s[np.arange(s.shape[0]), sample.z[lab] - 1].sum())


def log_lik_unclassified(sample, theta):
    """Sum of the log mixture density over unlabeled rows (0 if none)."""
    unl = ~sample.labeled
    if not unl.any():
        return 0.0
    _, log_norm, _ = kernels.log_posterior_entropy(log_scores(sample.y[unl], theta))
    return float(log_norm.sum())


def log_lik_ignore(sample, theta):
    """Partial-sample log-likelihood that ignores the missingness mechanism."""
    return log_lik_classified(sample, theta) + log_lik_unclassified(sample, theta)


def log_lik_full(sample, psi):
    """Full log-likelihood: ignore-missingness part plus the indicator part."""
    return log_lik_ignore(sample, psi.theta) + log_lik_miss(sample, psi)


def log_lik_parts(sample, psi):
    """``(classified, unclassified, miss)`` from a single scoring pass.

    Used inside the fitting loops where the three terms are needed together;
    ``sum`` of the parts agrees with :func:`log_lik_full` to rounding.
    """
    theta = psi.theta
    s = log_scores(sample.y, theta)
    log_tau, log_norm, ent = kernels.log_posterior_entropy(s)
    lab = sample.labeled
    classified = float(s[lab, sample.z[lab] - 1].sum()) if lab.any() else 0.0
    unclassified = float(log_norm[~lab].sum())
    eta = psi.xi.xi0 + psi.xi.xi1 * entropy_covariate(ent, psi.xi.covariate)
    return classified, unclassified, bernoulli_loglik(eta, sample.m)
