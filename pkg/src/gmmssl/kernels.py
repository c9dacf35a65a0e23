"""Backend selection for the per-row numerical kernels.

The compiled extension ``gmmssl._kernels`` is used when it imports; the
numpy fallback in ``gmmssl._kernels_py`` is used otherwise, or when the
environment variable ``GMMSSL_PURE_PYTHON`` is set to a non-empty value
other than ``0``.
"""

import os

import numpy as np

from . import _kernels_py

_force_py = os.environ.get("GMMSSL_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py
        BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def component_log_densities(y, mu, chol):
    return _impl.component_log_densities(_c(y), _c(mu), _c(chol))


def log_posterior_entropy(scores):
    return _impl.log_posterior_entropy(_c(scores))


def entropy_score_weights(log_tau, ent, factor):
    return _impl.entropy_score_weights(_c(log_tau), _c(ent), _c(factor))
