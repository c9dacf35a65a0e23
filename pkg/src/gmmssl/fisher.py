"""Two-class homoscedastic diagnostics: discriminant coefficients and
Monte-Carlo Fisher information about them under several likelihoods.

The model is reparameterised as ``(theta_1, beta)`` where ``theta_1``
holds the overall mean ``mu_bar = pi1 mu1 + pi2 mu2`` and the overall
covariance ``Lambda = Sigma + pi1 pi2 delta delta^T`` (``delta = mu1 - mu2``),
and ``beta = (beta0, beta1)`` are the coefficients of the linear
discriminant ``d(y) = beta0 + beta1^T y``, with ``beta0`` including the
prior log-odds.  Information is taken about ``beta`` with ``theta_1`` held
at its true value; scores are central finite differences of the
per-observation log-likelihood.

Regimes
-------
``CC``       completely classified: ``log pi_z phi(y; mu_z, Sigma)``
``PC_ig``    labeled rows as ``CC``, unlabeled rows ``log f(y)``
``PC_full``  ``PC_ig`` plus the missing-indicator log-likelihood
``miss``     missing-indicator log-likelihood alone
``lr``       logistic log-likelihood of the label given ``y``
``clr``      as ``lr`` but averaged over the unlabeled population, i.e.
             ``E[q(Y) s s^T] / E[q(Y)]``
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, log_expit

from .missingness import ENTROPY_FLOOR, LOG_COVARIATE, FullParams, MissingnessParams
from .model import GmmParams
from .simulate import make_rng, rlabel, rmix

REGIMES = ("CC", "PC_ig", "PC_full", "miss", "lr", "clr")
LOG_2PI = np.log(2.0 * np.pi)


class ScoreError(FloatingPointError):
    def __init__(self, count):
        super().__init__(f"{count} Monte-Carlo draws produced non-finite scores")
        self.count = count


@dataclass(frozen=True)
class DiscriminantCoefficients:
    beta0: float
    beta1: np.ndarray

    def as_vector(self):
        return np.concatenate([[self.beta0], self.beta1])

    def __call__(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return self.beta0 + y @ self.beta1


def discriminant_coefficients(mu1, mu2, sigma, log_prior_ratio=0.0):
    """Linear discriminant coefficients for two classes sharing ``sigma``.

    ``beta1 = sigma^{-1} (mu1 - mu2)`` and
    ``beta0 = log_prior_ratio - (mu1 + mu2)^T beta1 / 2``; class 1 is
    favoured where ``beta0 + beta1^T y > 0``.
    """
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    beta1 = np.linalg.solve(sigma, mu1 - mu2)
    beta0 = float(log_prior_ratio - 0.5 * (mu1 + mu2) @ beta1)
    return DiscriminantCoefficients(beta0, beta1)


@dataclass(frozen=True, eq=False)
class TwoClassModel:
    """Two Gaussian classes with a shared covariance."""

    pi1: float
    mu1: np.ndarray
    mu2: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.pi1 < 1.0:
            raise ValueError("pi1 must lie in (0, 1)")
        object.__setattr__(self, "mu1", np.atleast_1d(np.asarray(self.mu1, dtype=float)))
        object.__setattr__(self, "mu2", np.atleast_1d(np.asarray(self.mu2, dtype=float)))
        object.__setattr__(self, "sigma", np.atleast_2d(np.asarray(self.sigma, dtype=float)))

    @classmethod
    def canonical(cls, delta, pi1=0.5, p=1):
        """Identity covariance, ``mu1 = (delta, 0, ...)``, ``mu2 = 0``."""
        if delta < 0:
            raise ValueError("delta must be non-negative")
        mu1 = np.zeros(p)
        mu1[0] = delta
        return cls(pi1, mu1, np.zeros(p), np.eye(p))

    @classmethod
    def from_gmm(cls, theta):
        if theta.g != 2 or theta.ncov != 1:
            raise ValueError("diagnostics need a two-class model with a common covariance")
        return cls(float(theta.pi[0]), theta.mu[0], theta.mu[1], theta.sigma[0])

    @property
    def p(self):
        return self.mu1.shape[0]

    @property
    def delta(self):
        d = self.mu1 - self.mu2
        return float(np.sqrt(d @ np.linalg.solve(self.sigma, d)))

    def to_gmm(self):
        return GmmParams([self.pi1, 1.0 - self.pi1], np.stack([self.mu1, self.mu2]), self.sigma)

    def beta(self):
        return discriminant_coefficients(
            self.mu1, self.mu2, self.sigma, np.log(self.pi1 / (1.0 - self.pi1))
        )


class BetaParameterization:
    """Recover ``(pi1, mu1, mu2, Sigma)`` from ``beta`` with ``theta_1`` fixed."""

    def __init__(self, model):
        self.model = model
        pi1, pi2 = model.pi1, 1.0 - model.pi1
        d = model.mu1 - model.mu2
        self.mu_bar = pi1 * model.mu1 + pi2 * model.mu2
        self.Lambda = model.sigma + pi1 * pi2 * np.outer(d, d)
        self.beta = model.beta().as_vector()

    def model_at(self, beta):
        beta = np.asarray(beta, dtype=float)
        b0, b1 = beta[0], beta[1:]
        Lb = self.Lambda @ b1
        b = float(b1 @ Lb)
        target = b0 + float(self.mu_bar @ b1)

        def sq_dist(pi1):
            w = pi1 * (1.0 - pi1)
            return 2.0 * b / (1.0 + np.sqrt(1.0 + 4.0 * w * b))

        def h(pi1):
            return np.log(pi1 / (1.0 - pi1)) - 0.5 * (1.0 - 2.0 * pi1) * sq_dist(pi1) - target

        pi1 = brentq(h, 1e-12, 1.0 - 1e-12, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        pi2 = 1.0 - pi1
        a = sq_dist(pi1)
        delta = Lb / (1.0 + pi1 * pi2 * a)
        sigma = self.Lambda - pi1 * pi2 * np.outer(delta, delta)
        return TwoClassModel(pi1, self.mu_bar + pi2 * delta, self.mu_bar - pi1 * delta, sigma)


@dataclass(frozen=True)
class Draws:
    """Monte-Carlo sample: features, labels (1 or 2), missing indicators and
    the true missing probabilities."""

    y: np.ndarray
    z: np.ndarray
    m: np.ndarray
    q: np.ndarray


def draw_sample(model, xi, n_mc, seed):
    rng = make_rng(seed)
    theta = model.to_gmm()
    y, z = rmix(n_mc, theta, rng)
    psi = FullParams(theta, xi)
    m = rlabel(y, psi, rng)
    q = _components(model, xi, y, z, m)["q"]
    return Draws(y, z, m.astype(float), q)


def _components(model, xi, y, z, m):
    """Per-draw log-likelihood pieces under ``model``."""
    L = np.linalg.cholesky(model.sigma)
    half_logdet = np.log(np.diag(L)).sum()
    p = model.p

    def logphi(mu):
        r = np.linalg.solve(L, (y - mu).T)
        return -0.5 * p * LOG_2PI - half_logdet - 0.5 * np.einsum("ij,ij->j", r, r)

    s1 = np.log(model.pi1) + logphi(model.mu1)
    s2 = np.log(1.0 - model.pi1) + logphi(model.mu2)
    log_fy = np.logaddexp(s1, s2)
    d = s1 - s2
    log_t1 = log_expit(d)
    log_t2 = log_expit(-d)
    t1, t2 = np.exp(log_t1), np.exp(log_t2)
    ent = -(t1 * log_t1 + t2 * log_t2)
    ent = np.maximum(ent, 0.0)
    if xi.covariate == LOG_COVARIATE:
        cov = np.log(np.maximum(ent, ENTROPY_FLOOR))
    else:
        cov = ent
    eta = xi.xi0 + xi.xi1 * cov
    is1 = z == 1
    log_joint = np.where(is1, s1, s2)
    log_lr = np.where(is1, log_t1, log_t2)
    miss = m * log_expit(eta) + (1.0 - m) * log_expit(-eta)
    return {
        "log_joint": log_joint,
        "log_fy": log_fy,
        "log_lr": log_lr,
        "miss": miss,
        "q": expit(eta),
    }


def _regime_loglik(parts, m):
    ig = (1.0 - m) * parts["log_joint"] + m * parts["log_fy"]
    return {
        "CC": parts["log_joint"],
        "PC_ig": ig,
        "PC_full": ig + parts["miss"],
        "miss": parts["miss"],
        "lr": parts["log_lr"],
        "clr": parts["log_lr"],
    }


def scores(model, xi, draws, regimes=REGIMES):
    """Central-difference scores about ``beta`` for each regime, (n, p+1) arrays."""
    par = BetaParameterization(model)
    beta = par.beta
    out = {r: np.empty((draws.y.shape[0], beta.size)) for r in regimes}
    for k in range(beta.size):
        h = 1e-5 * (1.0 + abs(beta[k]))
        e = np.zeros_like(beta)
        e[k] = h
        plus = _regime_loglik(_components(par.model_at(beta + e), xi, draws.y, draws.z, draws.m), draws.m)
        minus = _regime_loglik(_components(par.model_at(beta - e), xi, draws.y, draws.z, draws.m), draws.m)
        for r in regimes:
            out[r][:, k] = (plus[r] - minus[r]) / (2.0 * h)
    return out


@dataclass(frozen=True)
class InformationEstimate:
    """Per-observation information matrix with entrywise Monte-Carlo standard errors."""

    regime: str
    matrix: np.ndarray
    stderr: np.ndarray
    n_mc: int

    def as_dict(self):
        return {
            "regime": self.regime,
            "matrix": self.matrix.tolist(),
            "stderr": self.stderr.tolist(),
            "n_mc": self.n_mc,
        }


def _outer_mean(s, weights=None):
    n, k = s.shape
    prods = s[:, :, None] * s[:, None, :]
    if weights is None:
        mat = prods.mean(axis=0)
        se = prods.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        w = weights / weights.sum()
        mat = np.einsum("n,nij->ij", w, prods)
        se = np.sqrt(np.einsum("n,nij->ij", w**2, (prods - mat) ** 2))
    mat = 0.5 * (mat + mat.T)
    return mat, se


def information_from_scores(regime, s, draws):
    bad = ~np.all(np.isfinite(s), axis=1)
    if bad.any():
        raise ScoreError(int(bad.sum()))
    weights = draws.q if regime == "clr" else None
    mat, se = _outer_mean(s, weights)
    return InformationEstimate(regime, mat, se, s.shape[0])


def mc_score_information(psi, regime, n_mc=1_000_000, seed=0, draws=None):
    """Monte-Carlo Fisher information about ``beta`` for one regime.

    ``psi`` is a :class:`FullParams` whose ``theta`` has two classes and a
    common covariance.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {REGIMES}")
    model, xi = _split(psi)
    draws = draw_sample(model, xi, n_mc, seed) if draws is None else draws
    s = scores(model, xi, draws, (regime,))[regime]
    return information_from_scores(regime, s, draws)


def all_information(psi, n_mc=1_000_000, seed=0, draws=None):
    """Every regime from one shared Monte-Carlo sample."""
    model, xi = _split(psi)
    draws = draw_sample(model, xi, n_mc, seed) if draws is None else draws
    sc = scores(model, xi, draws)
    return {r: information_from_scores(r, sc[r], draws) for r in REGIMES}, draws


def _split(psi):
    return TwoClassModel.from_gmm(psi.theta), psi.xi


@dataclass(frozen=True)
class CompensationReport:
    """Missing-indicator information against the information lost to missing labels.

    ``compensation`` is ``I_miss - gamma * I_clr``; a positive
    ``min_eigenvalue`` means the indicators more than make up for the lost
    labels.  ``residual`` is the relative norm
    ``||I_full - (I_CC - gamma I_clr + I_miss)|| / ||I_CC||`` and
    ``mcar_residual`` the analogous ``||(I_CC - I_ig) - m_bar I_lr|| / ||I_CC||``.
    """

    gamma: float
    m_bar: float
    compensation: np.ndarray
    min_eigenvalue: float
    residual: float
    mcar_residual: float
    information: dict

    def as_dict(self):
        return {
            "gamma": self.gamma,
            "m_bar": self.m_bar,
            "compensation": self.compensation.tolist(),
            "eigenvalues": np.linalg.eigvalsh(self.compensation).tolist(),
            "min_eigenvalue": self.min_eigenvalue,
            "compensates": bool(self.min_eigenvalue > 0.0),
            "residual": self.residual,
            "mcar_residual": self.mcar_residual,
            "information": {k: v.as_dict() for k, v in self.information.items()},
        }


def compensation_check(psi, n_mc=1_000_000, seed=0):
    """Estimate ``I_miss - gamma I_clr`` and the decomposition residuals."""
    info, draws = all_information(psi, n_mc, seed)
    gamma = float(draws.q.mean())
    m_bar = float(draws.m.mean())
    I = {k: v.matrix for k, v in info.items()}
    comp = I["miss"] - gamma * I["clr"]
    comp = 0.5 * (comp + comp.T)
    norm_cc = np.linalg.norm(I["CC"])
    residual = np.linalg.norm(I["PC_full"] - (I["CC"] - gamma * I["clr"] + I["miss"])) / norm_cc
    mcar = np.linalg.norm((I["CC"] - I["PC_ig"]) - m_bar * I["lr"]) / norm_cc
    return CompensationReport(
        gamma=gamma,
        m_bar=m_bar,
        compensation=comp,
        min_eigenvalue=float(np.linalg.eigvalsh(comp)[0]),
        residual=float(residual),
        mcar_residual=float(mcar),
        information=info,
    )


def canonical_psi(delta, xi0, xi1, pi1=0.5, p=1, covariate=LOG_COVARIATE):
    """Full parameter for the canonical two-class model."""
    theta = TwoClassModel.canonical(delta, pi1, p).to_gmm()
    return FullParams(theta, MissingnessParams(xi0, xi1, covariate))
