"""Exact and approximate SBM / DCSBM likelihoods and fitting backends."""
from .exact import (
    CLAMP,
    ResourceLimitError,
    complete_log_lik,
    dcsbm_degree_estimates,
    dcsbm_profile_log_lik,
    exhaustive_fit,
    exhaustive_log_g,
    mean_field_elbo,
    one_hot,
    profile_log_lik,
    profile_mle,
)
from .labels import canonical_labels, estimate_labels, refine_labels, spectral_embedding, spectral_init
from .plugin import fit_from_labels, plugin_fit
from .variational import FitResult, variational_em

__all__ = [
    "CLAMP",
    "FitResult",
    "ResourceLimitError",
    "canonical_labels",
    "complete_log_lik",
    "dcsbm_degree_estimates",
    "dcsbm_profile_log_lik",
    "estimate_labels",
    "exhaustive_fit",
    "exhaustive_log_g",
    "fit_from_labels",
    "mean_field_elbo",
    "one_hot",
    "plugin_fit",
    "profile_log_lik",
    "profile_mle",
    "refine_labels",
    "spectral_embedding",
    "spectral_init",
    "variational_em",
]
