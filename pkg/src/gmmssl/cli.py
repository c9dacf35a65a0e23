"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 fit did not converge
(only with ``--strict``).
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from .evaluate import empirical_relative_efficiency, erate, loocv_error
from .fisher import canonical_psi, compensation_check
from .fit import FIT_TYPES, FitConfig, FitError, fit, initial_values, initial_xi
from .io import (
    DataError,
    RunConfig,
    load_model,
    load_run_config,
    read_dataset,
    save_model,
    write_dataset,
    write_json,
    write_predictions,
)
from .missingness import FullParams, LOG_COVARIATE, RAW_COVARIATE, MissingnessParams
from .model import GmmParams, PartiallyLabeledSample, bayes_classify, posterior_entropy
from .simulate import mask_labels, reference_model, rlabel, rmix, spawn_seeds

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NONCONVERGED = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x):
    return repr(float(x))


def _vec(a):
    return " ".join(_fmt(v) for v in np.ravel(a))


# ---------------------------------------------------------------------------
# simulate


def _simulation_model(args):
    ref = reference_model()
    custom = any(v is not None for v in (args.g, args.p, args.pi, args.mu))
    if not custom:
        pi, mu, g, p = ref.pi, ref.mu, ref.g, ref.p
    else:
        if args.mu is None or args.p is None or args.g is None:
            raise UsageError("--g, --p and --mu are required for a custom model")
        g, p = args.g, args.p
        if len(args.mu) != g * p:
            raise UsageError(f"--mu needs g*p = {g * p} values (class by class)")
        mu = np.array(args.mu, dtype=float).reshape(g, p)
        pi = np.full(g, 1.0 / g) if args.pi is None else np.array(args.pi, dtype=float)
        if pi.shape != (g,):
            raise UsageError(f"--pi needs {g} values")
    if args.sigma_file is not None:
        try:
            with open(args.sigma_file) as fh:
                sigma = np.array(json.load(fh), dtype=float)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read sigma file: {exc}") from None
    else:
        scale = np.arange(1, g + 1, dtype=float) if args.sigma_scale is None else np.array(args.sigma_scale)
        if scale.shape not in ((1,), (g,)):
            raise UsageError(f"--sigma-scale needs 1 or {g} values")
        sigma = scale[:, None, None] * np.eye(p)
    try:
        return GmmParams(pi, mu, sigma)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise UsageError(f"invalid model: {exc}") from None


def cmd_simulate(args):
    if args.n < 1:
        raise UsageError("--n must be positive")
    theta = _simulation_model(args)
    xi = MissingnessParams(args.xi[0], args.xi[1], args.entropy_covariate)
    s_data, s_label = spawn_seeds(args.seed, 2)
    y, clust = rmix(args.n, theta, s_data)
    m = rlabel(y, FullParams(theta, xi), s_label)
    write_dataset(args.out, y, label=mask_labels(clust, m), truth=clust)
    print(f"rows: {args.n}")
    print(f"missing fraction: {float(m.mean()):.6f}")
    return 0


# ---------------------------------------------------------------------------
# fit


def _run_config(args):
    try:
        base = load_run_config(args.config) if args.config else RunConfig()
        return _merge(base, args)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(str(exc)) from None


def _merge(base, args):
    return base.merged(
        fit_type=args.type,
        ncov=args.ncov,
        iter_max=args.iter_max,
        eval_max=args.eval_max,
        rel_tol=args.rel_tol,
        sing_tol=args.sing_tol,
        seed=args.seed,
        fix_xi1_zero=True if args.fix_xi1_zero else None,
        entropy_covariate=args.entropy_covariate,
        g=args.g,
        data=args.data,
        out_model=getattr(args, "out_model", None),
        init=getattr(args, "init", None),
        feature_columns=tuple(args.feature_columns) if args.feature_columns else None,
        threads=getattr(args, "threads", None),
        strict=True if getattr(args, "strict", False) else None,
    )


def _load_data(rc):
    if rc.data is None:
        raise UsageError("--data is required")
    return read_dataset(rc.data, rc.feature_columns)


def _infer_g(rc, *label_sets):
    if rc.g is not None:
        return rc.g
    top = max(int(np.max(z)) if z is not None and z.size else 0 for z in label_sets)
    if top < 2:
        raise DataError("cannot infer g from labels; pass --g")
    return top


def _init_path(init):
    if init == "auto":
        return None
    return init[5:] if init.startswith("file=") else init


def _print_report(report):
    t = report.theta
    print(f"type: {report.fit_type}")
    print(f"objective: {_fmt(report.objective)}")
    print(f"converged: {str(bool(report.converged)).lower()}")
    print(f"reason: {report.reason}")
    print(f"iterations: {report.iterations}")
    print(f"pi: {_vec(t.pi)}")
    for i in range(t.g):
        print(f"mu[{i + 1}]: {_vec(t.mu[i])}")
    for i in range(t.ncov if t.ncov == 1 else t.g):
        print(f"sigma[{i + 1}]: {_vec(t.sigma[i])}")
    if report.xi is not None:
        print(f"xi: {_fmt(report.xi.xi0)} {_fmt(report.xi.xi1)}")


def cmd_fit(args):
    rc = _run_config(args)
    if rc.out_model is None:
        raise UsageError("--out-model is required")
    data = _load_data(rc)
    labels = data.require_labels()
    g = _infer_g(rc, labels)
    cfg = rc.fit
    sample = PartiallyLabeledSample(data.y, labels)
    init_theta = init_xi = None
    path = _init_path(rc.init)
    if path is not None:
        start = load_model(path)
        if start.theta.g != g or start.theta.p != sample.p:
            raise DataError("initial model dimensions do not match the data")
        if start.theta.ncov != cfg.ncov:
            raise DataError(f"initial model has ncov={start.theta.ncov} but --ncov is {cfg.ncov}")
        init_theta = start.theta
        if cfg.fit_type == "full" and start.xi is not None:
            xi = start.xi
            if cfg.fix_xi1_zero:
                xi = MissingnessParams(xi.xi0, 0.0, xi.covariate)
            init_xi = MissingnessParams(xi.xi0, xi.xi1, cfg.entropy_covariate)
    elif cfg.fit_type != "com":
        init_theta = initial_values(sample, g, cfg.ncov, cfg.seed)
        if cfg.fit_type == "full":
            init_xi = initial_xi(sample, init_theta, cfg.entropy_covariate, cfg.fix_xi1_zero).xi
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        report = fit(sample, cfg, init=init_theta, init_xi=init_xi, g=g)
    save_model(rc.out_model, report)
    _print_report(report)
    if rc.strict and not report.converged:
        return EXIT_NONCONVERGED
    return 0


# ---------------------------------------------------------------------------
# predict / evaluate / loocv


def _model_for(data, path):
    mf = load_model(path)
    if mf.theta.p != data.y.shape[1]:
        raise DataError(f"model has p={mf.theta.p} but the data have {data.y.shape[1]} features")
    return mf


def cmd_predict(args):
    data = read_dataset(args.data, args.feature_columns)
    theta = _model_for(data, args.model).theta
    tau, ent = posterior_entropy(data.y, theta)
    pred = bayes_classify(data.y, theta)
    if args.out:
        write_predictions(args.out, pred, tau, ent)
    else:
        _stdout_predictions(pred, tau, ent)
    return 0


def _stdout_predictions(pred, tau, ent):
    print(",".join(["predicted"] + [f"tau{i + 1}" for i in range(tau.shape[1])] + ["entropy"]))
    for j in range(pred.shape[0]):
        print(",".join([str(int(pred[j]))] + [_fmt(t) for t in tau[j]] + [_fmt(ent[j])]))


def cmd_evaluate(args):
    data = read_dataset(args.data, args.feature_columns)
    truth = data.require_truth()
    theta = _model_for(data, args.model).theta
    rate = erate(data.y, truth, theta)
    wrong = int(np.sum(bayes_classify(data.y, theta) != truth))
    print(f"error rate: {rate!r}")
    print(f"misclassified: {wrong} of {data.n}")
    return 0


def cmd_loocv(args):
    rc = _run_config(args)
    data = _load_data(rc)
    cfg = rc.fit
    truth = data.truth
    if truth is None:
        labels = data.require_labels()
        if np.any(labels == 0):
            raise DataError("loocv needs a 'truth' column when labels are missing")
        truth = labels
    observed = None
    if cfg.fit_type != "com":
        observed = data.require_labels()
    g = _infer_g(rc, truth)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = loocv_error(data.y, truth, observed, cfg, g=g, seed=cfg.seed, threads=rc.threads)
    print(f"type: {cfg.fit_type}")
    print(f"loocv error rate: {res.rate!r}")
    print(f"folds: {data.n}")
    print(f"non-converged folds: {res.n_nonconverged}")
    return 0


# ---------------------------------------------------------------------------
# diagnose / efficiency


def _canonical_or_model(args):
    if args.model is not None:
        mf = load_model(args.model)
        if mf.theta.g != 2 or mf.theta.ncov != 1:
            raise DataError("diagnostics need a two-class model with ncov=1")
        xi = mf.xi
        if args.xi is not None:
            xi = MissingnessParams(args.xi[0], args.xi[1], args.entropy_covariate)
        if xi is None:
            raise UsageError("the model has no xi block; pass --xi")
        return FullParams(mf.theta, xi)
    xi = args.xi if args.xi is not None else (0.0, 5.0)
    if args.delta < 0 or not 0 < args.pi1 < 1 or args.p < 1:
        raise UsageError("need --delta >= 0, 0 < --pi1 < 1 and --p >= 1")
    return canonical_psi(args.delta, xi[0], xi[1], args.pi1, args.p, args.entropy_covariate)


def cmd_diagnose(args):
    if args.n_mc < 10:
        raise UsageError("--n-mc must be at least 10")
    psi = _canonical_or_model(args)
    rep = compensation_check(psi, args.n_mc, args.seed)
    out = rep.as_dict()
    out["settings"] = {
        "n_mc": args.n_mc,
        "seed": args.seed,
        "pi": psi.theta.pi.tolist(),
        "mu": psi.theta.mu.tolist(),
        "sigma": psi.theta.sigma[0].tolist(),
        "xi": [psi.xi.xi0, psi.xi.xi1],
        "covariate": psi.xi.covariate,
    }
    if args.out_report:
        write_json(args.out_report, out)
    print(f"gamma: {rep.gamma!r}")
    print(f"min eigenvalue: {rep.min_eigenvalue!r}")
    print(f"compensates: {str(rep.min_eigenvalue > 0).lower()}")
    print(f"residual: {rep.residual!r}")
    print(f"mcar residual: {rep.mcar_residual!r}")
    return 0


def cmd_efficiency(args):
    xi = args.xi if args.xi is not None else (0.0, 5.0)
    psi = canonical_psi(args.delta, xi[0], xi[1], args.pi1, args.p, args.entropy_covariate)
    cfg = FitConfig(ncov=1, iter_max=args.iter_max or 500)
    res = empirical_relative_efficiency(
        psi.theta, psi.xi, args.n, args.reps, seed=args.seed, n_mc=args.n_mc, config=cfg,
        threads=args.threads,
    )
    if args.out_report:
        write_json(args.out_report, res.as_dict())
    print(f"optimal error: {res.optimal_error!r}")
    for k in ("ratio_full", "ratio_ign", "median_ratio_full", "median_ratio_ign"):
        print(f"{k.replace('_', ' ')}: {getattr(res, k)!r}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _fit_flags(p, with_outputs):
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--type", choices=FIT_TYPES, default=None, help="com, ign or full (default full)")
    p.add_argument("--ncov", type=int, choices=(1, 2), default=None, help="1 common, 2 class-specific")
    p.add_argument("--g", type=int, default=None, help="number of classes (default: largest label)")
    p.add_argument("--iter-max", type=int, default=None)
    p.add_argument("--eval-max", type=int, default=None)
    p.add_argument("--rel-tol", type=float, default=None)
    p.add_argument("--sing-tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fix-xi1-zero", action="store_true", help="hold xi1 at 0 (MCAR mechanism)")
    p.add_argument("--entropy-covariate", choices=(LOG_COVARIATE, RAW_COVARIATE), default=None)
    p.add_argument("--feature-columns", nargs="+", default=None)
    p.add_argument("--config", help="JSON run configuration; flags override it")
    if with_outputs:
        p.add_argument("--init", default=None, help="'auto' or a model file (optionally 'file=PATH')")
        p.add_argument("--out-model", help="where to write the fitted model JSON")
        p.add_argument("--strict", action="store_true", help="exit 3 when the fit does not converge")
    else:
        p.add_argument("--threads", type=int, default=None)


def _canonical_flags(p):
    p.add_argument("--delta", type=float, default=2.0)
    p.add_argument("--pi1", type=float, default=0.5)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--xi", type=float, nargs=2, default=None, metavar=("XI0", "XI1"))
    p.add_argument("--entropy-covariate", choices=(LOG_COVARIATE, RAW_COVARIATE), default=LOG_COVARIATE)
    p.add_argument("--n-mc", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-report")


def build_parser():
    parser = _Parser(prog="gmmssl", description="Semi-supervised Gaussian mixture classification.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="draw a partially labeled sample")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--g", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--pi", type=float, nargs="+", default=None)
    p.add_argument("--mu", type=float, nargs="+", default=None, help="g*p values, class by class")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--sigma-scale", type=float, nargs="+", default=None, help="Sigma_i = s_i * I")
    grp.add_argument("--sigma-file", default=None, help="JSON list of covariance matrices")
    p.add_argument("--xi", type=float, nargs=2, default=(-0.5, 1.0), metavar=("XI0", "XI1"))
    p.add_argument("--entropy-covariate", choices=(LOG_COVARIATE, RAW_COVARIATE), default=LOG_COVARIATE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a classifier")
    _fit_flags(p, True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior probabilities and Bayes allocations")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.add_argument("--feature-columns", nargs="+", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="error rate against the truth column")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--feature-columns", nargs="+", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loocv", help="leave-one-out error rate")
    _fit_flags(p, False)
    p.set_defaults(func=cmd_loocv)

    p = sub.add_parser("diagnose", help="Fisher-information compensation diagnostics (two classes)")
    p.add_argument("--model", default=None, help="two-class ncov=1 model file instead of canonical flags")
    _canonical_flags(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("efficiency", help="Monte-Carlo relative efficiency on the canonical model")
    _canonical_flags(p)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--iter-max", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_efficiency)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gmmssl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FitError) as exc:
        print(f"gmmssl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, np.linalg.LinAlgError) as exc:
        # remaining ValueErrors come from validating the data against the model
        print(f"gmmssl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BrokenPipeError:
        # reader closed early (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
