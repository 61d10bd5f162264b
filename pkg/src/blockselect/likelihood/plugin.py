"""Plug-in profile likelihood at estimated labels."""
from __future__ import annotations

import numpy as np

from ..graph import Graph, count_stats
from .exact import dcsbm_profile_log_lik, profile_log_lik, profile_mle
from .labels import estimate_labels
from .variational import FitResult


def labels_objective(g: Graph, z, n_blocks: int, model: str = "sbm") -> float:
    """Profile log-likelihood of ``g`` at fixed labels under ``model``."""
    if model == "dcsbm":
        return dcsbm_profile_log_lik(g, z, n_blocks)
    return profile_log_lik(count_stats(g, z, n_blocks))


def plugin_fit(g: Graph, n_blocks: int, model: str = "sbm", seed=None, init=None) -> FitResult:
    z = estimate_labels(g, n_blocks, model, seed=seed, init=init)
    return fit_from_labels(g, z, n_blocks, model)


def fit_from_labels(g: Graph, z, n_blocks: int, model: str = "sbm") -> FitResult:
    z = np.asarray(z, dtype=np.int64)
    theta = profile_mle(count_stats(g, z, n_blocks))
    obj = labels_objective(g, z, n_blocks, model)
    return FitResult(n_blocks, theta, z, obj, f"plugin-{model}")
