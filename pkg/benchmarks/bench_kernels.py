"""Compare the compiled and numpy kernel backends, and time one full fit
under each.

    python benchmarks/bench_kernels.py [--n 100000] [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gmmssl import _kernels_py

try:
    from gmmssl import _kernels as _compiled
except ImportError:
    _compiled = None


def _inputs(n, g, p, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, p))
    mu = rng.standard_normal((g, p))
    a = rng.standard_normal((g, p, p))
    sigma = a @ a.transpose(0, 2, 1) + p * np.eye(p)
    chol = np.linalg.cholesky(sigma)
    return y, mu, np.ascontiguousarray(chol)


def bench_kernels(n, g, p, repeat):
    y, mu, chol = _inputs(n, g, p)
    scores = _kernels_py.component_log_densities(y, mu, chol) + np.log(1.0 / g)
    log_tau, _, ent = _kernels_py.log_posterior_entropy(scores)
    factor = np.ones(n)
    cases = {
        "component_log_densities": lambda m: m.component_log_densities(y, mu, chol),
        "log_posterior_entropy": lambda m: m.log_posterior_entropy(scores),
        "entropy_score_weights": lambda m: m.entropy_score_weights(log_tau, ent, factor),
    }
    rows = []
    for name, call in cases.items():
        t_py = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=repeat))
        if _compiled is None:
            rows.append((name, t_py, float("nan")))
            continue
        t_c = min(timeit.repeat(lambda: call(_compiled), number=1, repeat=repeat))
        a, b = call(_kernels_py), call(_compiled)
        a, b = (a,) if not isinstance(a, tuple) else a, (b,) if not isinstance(b, tuple) else b
        err = max(float(np.max(np.abs(x - z))) for x, z in zip(a, b))
        if err > 1e-9:
            raise SystemExit(f"{name}: backends disagree by {err:.3g}")
        rows.append((name, t_py, t_c))
    return rows


_FIT_SNIPPET = """
import time, warnings
from gmmssl import FitConfig, FullParams, MissingnessParams, PartiallyLabeledSample, fit
from gmmssl import mask_labels, reference_model, rlabel, rmix, BACKEND
theta = reference_model()
y, z = rmix({n}, theta, 1)
m = rlabel(y, FullParams(theta, MissingnessParams(-0.5, 1.0)), 2)
s = PartiallyLabeledSample(y, mask_labels(z, m))
t = time.perf_counter()
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    for seed in range({reps}):
        fit(s, FitConfig(seed=seed), g=4)
print(BACKEND, time.perf_counter() - t)
"""


def bench_fit(n, reps):
    out = {}
    for force in ("0", "1"):
        env = dict(os.environ, GMMSSL_PURE_PYTHON=force)
        res = subprocess.run(
            [sys.executable, "-c", _FIT_SNIPPET.format(n=n, reps=reps)],
            env=env, capture_output=True, text=True, check=True,
        )
        backend, secs = res.stdout.split()
        out[backend] = float(secs)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--g", type=int, default=4)
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--fit-n", type=int, default=1000)
    ap.add_argument("--fit-reps", type=int, default=3)
    args = ap.parse_args()
    print(f"kernels on n={args.n}, g={args.g}, p={args.p} (best of {args.repeat})")
    print(f"{'kernel':<26}{'python [ms]':>13}{'compiled [ms]':>15}{'speedup':>9}")
    for name, t_py, t_c in bench_kernels(args.n, args.g, args.p, args.repeat):
        print(f"{name:<26}{1e3 * t_py:>13.2f}{1e3 * t_c:>15.2f}{t_py / t_c:>9.2f}")
    times = bench_fit(args.fit_n, args.fit_reps)
    print(f"\nfull ECM fit, reference model, n={args.fit_n}, {args.fit_reps} seeds")
    for backend, secs in sorted(times.items()):
        print(f"  {backend:<9}{secs:8.2f} s")


if __name__ == "__main__":
    main()
