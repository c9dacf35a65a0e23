"""Pure-numpy implementations of the per-row kernels.

These mirror the compiled routines in ``_kernels.pyx`` one for one and are
used whenever the extension is unavailable (or ``GMMSSL_PURE_PYTHON=1``).
"""

import numpy as np
from scipy.linalg import solve_triangular

LOG_2PI = np.log(2.0 * np.pi)


def component_log_densities(y, mu, chol):
    """Log Gaussian densities of every row under every component.

    Parameters
    ----------
    y : (n, p) array
    mu : (g, p) array
    chol : (k, p, p) array of lower Cholesky factors, k == 1 (shared) or g.

    Returns
    -------
    (n, g) array with entry ``[j, i] = log N(y_j; mu_i, L_i L_i^T)``.
    """
    n, p = y.shape
    g = mu.shape[0]
    shared = chol.shape[0] == 1
    out = np.empty((n, g))
    for i in range(g):
        L = chol[0] if shared else chol[i]
        z = solve_triangular(L, (y - mu[i]).T, lower=True, check_finite=False)
        half_logdet = np.log(np.diag(L)).sum()
        out[:, i] = -0.5 * p * LOG_2PI - half_logdet - 0.5 * np.einsum("ij,ij->j", z, z)
    return out


def log_posterior_entropy(scores):
    """Normalise per-row log scores into log posteriors and their entropy.

    The log normaliser is ``max + log1p(sum of the other exponentials)`` and
    log posteriors are formed as ``(s - max) - log1p(rest)``, so a posterior
    close to one keeps full relative precision in ``log tau``; the entropy of
    a near-certain row (and its logarithm) depends on exactly that.

    Returns
    -------
    log_tau : (n, g) array
    log_norm : (n,) array, the row log-sum-exp
    ent : (n,) array, Shannon entropy (natural log) of each row
    """
    n = scores.shape[0]
    top = np.argmax(scores, axis=1)
    rows = np.arange(n)
    mx = scores[rows, top]
    with np.errstate(invalid="ignore"):
        ex = np.exp(scores - mx[:, None])
    ex[rows, top] = 0.0
    log1p_rest = np.log1p(ex.sum(axis=1))
    log_norm = mx + log1p_rest
    # shift by the max first so the top class gets exactly -log1p(rest)
    log_tau = (scores - mx[:, None]) - log1p_rest[:, None]
    tau = np.exp(log_tau)
    terms = np.where(tau > 0.0, tau * log_tau, 0.0)
    ent = -terms.sum(axis=1)
    np.maximum(ent, 0.0, out=ent)
    return log_tau, log_norm, ent


def entropy_score_weights(log_tau, ent, factor):
    """Chain-rule weights ``factor_j * d e_j / d s_ij``.

    With ``tau = softmax(s)`` the entropy derivative is
    ``d e / d s_i = -tau_i (log tau_i + e)``.
    """
    tau = np.exp(log_tau)
    inner = np.where(tau > 0.0, tau * (log_tau + ent[:, None]), 0.0)
    return -factor[:, None] * inner
