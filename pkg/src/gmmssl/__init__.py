"""Semi-supervised Gaussian mixture classification with an entropy-based
missing-label mechanism."""

import sys

__version__ = "0.1.0"

from .evaluate import (
    EfficiencyResult,
    LoocvResult,
    empirical_relative_efficiency,
    erate,
    loocv_error,
    mc_conditional_error,
)
from .fisher import (
    DiscriminantCoefficients,
    TwoClassModel,
    canonical_psi,
    compensation_check,
    discriminant_coefficients,
    mc_score_information,
)
from .fit import (
    FitConfig,
    FitError,
    FitReport,
    fit,
    fit_complete,
    fit_full,
    fit_ignore,
    initial_values,
    initial_xi,
)
from .kernels import BACKEND
from .likelihood import (
    log_lik_classified,
    log_lik_full,
    log_lik_ignore,
    log_lik_miss,
    log_lik_unclassified,
)
from .missingness import FullParams, MissingnessParams, fit_logistic, q_prob
from .model import (
    GmmParams,
    PartiallyLabeledSample,
    bayes_classify,
    entropy,
    mixture_logpdf,
    posterior,
    posterior_entropy,
)
from .simulate import mask_labels, reference_model, rlabel, rmix

__all__ = [n for n, v in dict(globals()).items() if not n.startswith("_") and not isinstance(v, type(sys))]
