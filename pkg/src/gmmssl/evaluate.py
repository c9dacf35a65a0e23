"""Error-rate estimation: held-out error, LOOCV, Monte-Carlo conditional
error and the empirical relative efficiency of partially supervised rules.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fit import FitConfig, FitError, fit, fit_complete
from .missingness import FullParams
from .model import CovarianceError, PartiallyLabeledSample, bayes_classify
from .simulate import mask_labels, rlabel, rmix, spawn_seeds

DEFAULT_MC = 1_000_000
_MC_CHUNK = 250_000


def erate(y, true_labels, theta):
    """Fraction of rows whose Bayes allocation under ``theta`` differs from the truth."""
    truth = np.asarray(true_labels).ravel()
    pred = bayes_classify(y, theta)
    if pred.shape != truth.shape:
        raise ValueError("label count does not match the number of rows")
    return float(np.mean(pred != truth))


def mc_draws(theta_true, n_mc, seed):
    """Labeled Monte-Carlo sample from the true model, in chunks."""
    ys, zs = [], []
    for k, child in enumerate(spawn_seeds(seed, -(-n_mc // _MC_CHUNK))):
        size = min(_MC_CHUNK, n_mc - k * _MC_CHUNK)
        y, z = rmix(size, theta_true, child)
        ys.append(y)
        zs.append(z)
    return np.concatenate(ys), np.concatenate(zs)


def mc_conditional_error(theta_hat, theta_true, n_mc=DEFAULT_MC, seed=0, draws=None):
    """Monte-Carlo estimate of the error of the plug-in rule ``theta_hat``
    when data follow ``theta_true``.

    ``draws`` may carry a precomputed ``(y, labels)`` pair from
    :func:`mc_draws` so several rules can share one sample.
    """
    y, z = mc_draws(theta_true, n_mc, seed) if draws is None else draws
    return erate(y, z, theta_hat)


def mc_standard_error(rate, n_mc):
    return float(np.sqrt(max(rate * (1.0 - rate), 1e-300) / n_mc))


# ---------------------------------------------------------------------------
# leave-one-out


@dataclass
class LoocvResult:
    """Fold-averaged error over converged folds.

    ``errors[j]`` is 1 when held-out row ``j`` was misclassified, ``converged[j]``
    whether its fold's fit converged.  A fold whose fit raised is recorded as
    non-converged with prediction 0.
    """

    rate: float
    errors: np.ndarray
    predictions: np.ndarray
    converged: np.ndarray

    @property
    def n_nonconverged(self):
        return int(np.sum(~self.converged))


def fold_seeds(seed, n):
    """One integer seed per fold, derived from the master seed."""
    return [int(c.generate_state(1)[0]) for c in spawn_seeds(seed, n)]


def _fold(j, y, truth, observed, g, config, fold_seed):
    keep = np.arange(y.shape[0]) != j
    cfg = replace(config, seed=fold_seed)
    try:
        if config.fit_type == "com":
            report = fit_complete(PartiallyLabeledSample(y[keep], truth[keep]), cfg, g=g)
        else:
            report = fit(PartiallyLabeledSample(y[keep], observed[keep]), cfg, g=g)
    except (FitError, CovarianceError):
        # counted with the non-converged folds
        return 0, False
    pred = int(bayes_classify(y[j : j + 1], report.theta)[0])
    return pred, report.converged


def loocv_error(y, truth, observed=None, config=FitConfig(fit_type="com"), g=None, seed=0,
                threads=1):
    """Leave-one-out error of the rule produced by ``config.fit_type``.

    Parameters
    ----------
    y : (n, p) array
    truth : (n,) true labels, all present; the held-out row is scored against these.
    observed : (n,) labels with 0 for missing, used to fit ``ign``/``full``
        rules (the held-in rows keep their missingness pattern).  Ignored for
        ``com``.
    seed : int
        Master seed; fold ``j`` uses ``fold_seeds(seed, n)[j]``.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    truth = np.asarray(truth, dtype=np.int64)
    if np.any(truth < 1):
        raise ValueError("truth labels must all be present")
    n = y.shape[0]
    g = int(truth.max()) if g is None else g
    if config.fit_type != "com":
        if observed is None:
            raise ValueError("observed labels are required for ign/full LOOCV")
        observed = PartiallyLabeledSample(y, observed).z
    seeds = fold_seeds(seed, n)
    args = [(j, y, truth, observed, g, config, seeds[j]) for j in range(n)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(lambda a: _fold(*a), args))
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out = [_fold(*a) for a in args]
    pred = np.array([o[0] for o in out])
    conv = np.array([o[1] for o in out], dtype=bool)
    errors = (pred != truth).astype(int)
    if not conv.any():
        rate = float("nan")
    else:
        rate = float(errors[conv].mean())
    if not conv.all():
        warnings.warn(f"{int((~conv).sum())} LOOCV folds did not converge", RuntimeWarning, stacklevel=2)
    return LoocvResult(rate=rate, errors=errors, predictions=pred, converged=conv)


# ---------------------------------------------------------------------------
# relative efficiency


@dataclass
class EfficiencyResult:
    """Replicate-level conditional errors and the derived efficiency ratios.

    ``ratio_*`` divide the mean excess error of the completely supervised rule
    by the mean excess error of the named rule; ``median_ratio_*`` use
    medians over replicates instead of means.  Values above one favour the
    partially supervised rule.
    """

    optimal_error: float
    err_csl: np.ndarray
    err_ign: np.ndarray
    err_full: np.ndarray
    converged: dict = field(default_factory=dict)

    def _excess(self, err):
        return err - self.optimal_error

    @property
    def ratio_full(self):
        return float(np.mean(self._excess(self.err_csl)) / np.mean(self._excess(self.err_full)))

    @property
    def ratio_ign(self):
        return float(np.mean(self._excess(self.err_csl)) / np.mean(self._excess(self.err_ign)))

    @property
    def median_ratio_full(self):
        return float(np.median(self._excess(self.err_csl)) / np.median(self._excess(self.err_full)))

    @property
    def median_ratio_ign(self):
        return float(np.median(self._excess(self.err_csl)) / np.median(self._excess(self.err_ign)))

    def as_dict(self):
        return {
            "optimal_error": self.optimal_error,
            "ratio_full": self.ratio_full,
            "ratio_ign": self.ratio_ign,
            "median_ratio_full": self.median_ratio_full,
            "median_ratio_ign": self.median_ratio_ign,
            "err_csl": self.err_csl.tolist(),
            "err_ign": self.err_ign.tolist(),
            "err_full": self.err_full.tolist(),
            "converged": {k: np.asarray(v).tolist() for k, v in self.converged.items()},
        }


def _replicate(theta_true, xi_true, n, config, child, draws):
    s_data, s_label, s_fit = child.spawn(3)
    y, clust = rmix(n, theta_true, s_data)
    m = rlabel(y, FullParams(theta_true, xi_true), s_label)
    g = theta_true.g
    fit_seed = int(s_fit.generate_state(1)[0])
    com_cfg = replace(config, fit_type="com", seed=fit_seed)
    csl = fit_complete(PartiallyLabeledSample(y, clust), com_cfg, g=g)
    partial = PartiallyLabeledSample(y, mask_labels(clust, m))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ign = fit(partial, replace(config, fit_type="ign", seed=fit_seed), g=g)
        full = fit(partial, replace(config, fit_type="full", seed=fit_seed), g=g)
    errs = tuple(erate(draws[0], draws[1], r.theta) for r in (csl, ign, full))
    return errs, (ign.converged, full.converged)


def empirical_relative_efficiency(theta_true, xi_true, n, n_reps, seed=0, n_mc=DEFAULT_MC,
                                  config=FitConfig(), threads=1):
    """Monte-Carlo relative efficiency of the ``ign`` and ``full`` rules
    against the completely supervised rule.

    Every replicate simulates a sample of size ``n`` with missingness drawn
    from ``xi_true``, fits all three rules, and scores each on one shared
    Monte-Carlo test sample of size ``n_mc``; the optimal error is estimated
    once on that same sample, so excess errors are common-random-number
    differences.
    """
    root = np.random.SeedSequence(seed)
    mc_seed, rep_seed = root.spawn(2)
    draws = mc_draws(theta_true, n_mc, mc_seed)
    opt = erate(draws[0], draws[1], theta_true)
    children = rep_seed.spawn(n_reps)
    args = [(theta_true, xi_true, n, config, c, draws) for c in children]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(lambda a: _replicate(*a), args))
    else:
        out = [_replicate(*a) for a in args]
    errs = np.array([o[0] for o in out])
    conv = np.array([o[1] for o in out], dtype=bool)
    return EfficiencyResult(
        optimal_error=opt,
        err_csl=errs[:, 0],
        err_ign=errs[:, 1],
        err_full=errs[:, 2],
        converged={"ign": conv[:, 0], "full": conv[:, 1]},
    )
