"""Synthetic partially labeled data.

Random streams come from numpy's PCG64 bit generator
(``numpy.random.default_rng``) seeded with the caller's integer; replicate
streams are derived with ``SeedSequence.spawn``.  The same seed therefore
reproduces the same draws on every platform numpy supports.
"""

import numpy as np

from .missingness import q_prob
from .model import GmmParams


def make_rng(seed):
    """``numpy.random.Generator`` (PCG64) from an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed, count):
    """``count`` independent child seed sequences of ``seed``.

    A ``SeedSequence`` argument is copied first, so repeated calls with the
    same object yield the same children.
    """
    if isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        seed = np.random.SeedSequence(seed)
    return seed.spawn(count)


def rmix(n, theta, seed=None):
    """Draw ``n`` labeled points from the Gaussian mixture ``theta``.

    Returns
    -------
    y : (n, p) array
    clust : (n,) int array of class labels in ``1..g``
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not isinstance(theta, GmmParams):
        raise TypeError("theta must be GmmParams")
    rng = make_rng(seed)
    clust = rng.choice(theta.g, size=n, p=theta.pi)
    eps = rng.standard_normal((n, theta.p))
    if theta.common:
        y = theta.mu[clust] + eps @ theta.chol[0].T
    else:
        y = theta.mu[clust] + np.einsum("nij,nj->ni", theta.chol[clust], eps)
    return y, clust + 1


def rlabel(y, psi, seed=None):
    """Missing-label indicators ``m_j ~ Bernoulli(q(y_j))`` (1 = missing)."""
    rng = make_rng(seed)
    q = np.atleast_1d(q_prob(np.asarray(y, dtype=float), psi))
    return (rng.random(q.shape[0]) < q).astype(np.int64)


def mask_labels(clust, m):
    """Observed labels: ``clust`` with entries where ``m == 1`` set to 0 (missing)."""
    z = np.array(clust, dtype=np.int64, copy=True)
    z[np.asarray(m) == 1] = 0
    return z


def reference_model():
    """Four trivariate classes in equal proportions with ``Sigma_i = i * I``.

    The setting used in the package walkthrough; pair it with
    ``MissingnessParams(-0.5, 1.0)``.
    """
    mu = np.array(
        [
            [0.2, 0.3, 0.4],
            [0.2, 0.7, 0.6],
            [0.1, 0.7, 1.6],
            [0.2, 1.7, 0.6],
        ]
    )
    sigma = np.stack([np.eye(3) * (i + 1) for i in range(4)])
    return GmmParams(np.full(4, 0.25), mu, sigma)
