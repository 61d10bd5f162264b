"""Penalized-likelihood choice of the number of blocks with entropy-tuned penalty."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .graph import Graph, seed_sequence
from .likelihood import FitResult, exhaustive_fit, plugin_fit, variational_em
from .likelihood.plugin import fit_from_labels

DEFAULT_LAMBDA_GRID = np.round(np.arange(1, 301) * 1e-3, 3)
ENTROPY_TIE_TOL = 1e-12
NORMALIZATIONS = ("shift", "ratio")


def penalty(Kp: int, n: int, lam: float) -> float:
    """lam * Kp(Kp+1)/2 * n log n."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return lam * Kp * (Kp + 1) / 2.0 * n * math.log(n)


def penalty_weights(K_range, n: int) -> np.ndarray:
    """Penalty per unit lambda for each K'."""
    return np.array([penalty(k, n, 1.0) for k in K_range])


def fit_backend(g: Graph, Kp: int, backend: str = "variational", model: str = "sbm", seed=None,
                **kw) -> FitResult:
    """Single fit at ``Kp`` blocks with the named backend."""
    if backend == "variational":
        if model != "sbm":
            raise ValueError("variational backend supports model='sbm' only")
        return variational_em(g, Kp, seed=seed, **kw)
    if backend == "plugin":
        return plugin_fit(g, Kp, model, seed=seed, **kw)
    if backend == "exhaustive":
        if model != "sbm":
            raise ValueError("exhaustive backend supports model='sbm' only")
        theta, lg, _ = exhaustive_fit(g, Kp, seed=seed, **kw)
        return FitResult(Kp, theta, np.zeros(g.n, dtype=np.int64), lg, "exhaustive")
    raise ValueError(f"unknown backend {backend!r}")


def _split_largest(g: Graph, z, Kp: int, model: str, seed) -> np.ndarray:
    """Split the largest block of a (Kp-1)-labeling in two by spectral clustering."""
    from .likelihood import spectral_init

    z = np.asarray(z).copy()
    sizes = np.bincount(z, minlength=Kp - 1)
    big = int(np.argmax(sizes))
    idx = np.flatnonzero(z == big)
    if len(idx) < 2:
        return z
    sub = g.adjacency[idx][:, idx].tocoo()
    mask = sub.row < sub.col
    sg = Graph.from_edges(len(idx), np.column_stack([sub.row[mask], sub.col[mask]]))
    half = spectral_init(sg, 2, seed, normalize_rows=model == "dcsbm")
    z[idx[half == 1]] = Kp - 1
    return z


def _nested_candidates(g: Graph, prev: FitResult, k: int, backend: str, model: str, seed,
                       **kw) -> list[FitResult]:
    """Fits at ``k`` blocks started from the ``k-1`` solution.

    One splits the largest previous block; the other keeps the previous
    solution with an empty extra block, which reproduces the previous
    objective and so keeps the profile nondecreasing in K'.
    """
    split = _split_largest(g, prev.labels, k, model, seed)
    if backend == "plugin":
        return [plugin_fit(g, k, model, seed=seed, init=split),
                fit_from_labels(g, prev.labels, k, model)]
    if backend == "variational":
        opts = {**kw, "restarts": 1}
        padded = np.hstack([prev.posterior, np.zeros((g.n, 1))])
        return [variational_em(g, k, init=split, seed=seed, **opts),
                variational_em(g, k, init=padded, seed=seed, **opts)]
    return []


def fit_profile(g: Graph, K_max: int, backend: str = "variational", model: str = "sbm", seed=None,
                nested: bool = True, **kw) -> list[FitResult]:
    """Fits for K' = 1..K_max; one seed substream per K'.

    With ``nested=True`` each K' > 1 also tries starts built from the K'-1 fit
    (see :func:`_nested_candidates`) and keeps the best objective, so a poor
    local optimum at one K' cannot fall below the K'-1 value.
    """
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    if backend in ("variational", "exhaustive") and model != "sbm":
        raise ValueError(f"{backend} backend supports model='sbm' only")
    seeds = seed_sequence(seed).spawn(K_max)
    fits: list[FitResult] = []
    for k in range(1, K_max + 1):
        fit = fit_backend(g, k, backend, model, seeds[k - 1], **kw)
        if nested and k > 1:
            cands = [fit] + _nested_candidates(g, fits[-1], k, backend, model, seeds[k - 1], **kw)
            # first maximum wins, so the fresh fit is kept on exact ties
            fit = cands[int(np.argmax([f.objective for f in cands]))]
        fits.append(fit)
    return fits


def beta_values(objectives, n: int, lam: float) -> np.ndarray:
    obj = np.asarray(objectives, dtype=float)
    K_range = np.arange(1, len(obj) + 1)
    return obj - lam * penalty_weights(K_range, n)


def profile_weights(beta, normalization: str = "shift") -> np.ndarray:
    """Turn a beta profile into a probability vector over K'.

    ``ratio`` divides ``-beta`` by its sum (needs all ``-beta`` of one sign).
    ``shift`` subtracts ``min(-beta)``, adds a floor of 1e-8 times the range,
    then divides by the sum.
    """
    v = -np.asarray(beta, dtype=float)
    if normalization == "ratio":
        if np.all(v > 0) or np.all(v < 0):
            return v / v.sum()
        normalization = "shift"
    if normalization != "shift":
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    rng = v.max() - v.min()
    if rng == 0:
        return np.full(len(v), 1.0 / len(v))
    w = v - v.min() + 1e-8 * rng
    return w / w.sum()


def entropy(w) -> float:
    return float(-xlogy(w, w).sum())


@dataclass
class LambdaChoice:
    lambda_star: float
    entropy_curve: np.ndarray
    degenerate: bool = False


def entropy_select_lambda(objectives, lambda_grid=None, n: int | None = None,
                          normalization: str = "shift") -> LambdaChoice:
    """Pick the lambda whose normalized ``-beta`` profile has maximal entropy.

    Ties (within 1e-12) go to the largest lambda. If every grid point gives a
    constant profile, the largest lambda is returned with ``degenerate=True``.
    """
    obj = np.asarray(objectives, dtype=float)
    if not np.all(np.isfinite(obj)):
        raise ValueError("objectives must be finite")
    grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if n is None:
        raise ValueError("n is required to evaluate the penalty")
    curve = np.empty(len(grid))
    flat = True
    for t, lam in enumerate(grid):
        beta = beta_values(obj, n, lam)
        flat &= bool(np.ptp(beta) == 0)
        curve[t] = entropy(profile_weights(beta, normalization))
    if flat:
        return LambdaChoice(float(grid.max()), curve, True)
    top = curve.max()
    ties = np.flatnonzero(curve >= top - ENTROPY_TIE_TOL)
    return LambdaChoice(float(grid[ties].max()), curve)


def argmax_K(beta) -> int:
    """1-based K' maximizing beta; smallest K' on ties."""
    return int(np.argmax(np.asarray(beta))) + 1


@dataclass
class SelectionResult:
    K_range: list[int]
    loglik: np.ndarray
    penalty: np.ndarray
    beta: np.ndarray
    lambda_star: float
    entropy_curve: np.ndarray
    K_hat: int
    backend: str
    model: str
    n: int
    seed: object = None
    lambda_grid: np.ndarray | None = None
    normalization: str = "shift"
    fits: list[FitResult] = field(default_factory=list, repr=False)
    degenerate: bool = False

    @property
    def labels(self) -> np.ndarray:
        return self.fits[self.K_hat - 1].labels

    def at_lambda(self, lam: float) -> int:
        """K_hat for another lambda, reusing the cached objectives."""
        return argmax_K(beta_values(self.loglik, self.n, lam))

    def to_dict(self) -> dict:
        return {
            "K_hat": self.K_hat,
            "lambda_star": self.lambda_star,
            "backend": self.backend,
            "model": self.model,
            "n": self.n,
            "seed": self.seed,
            "normalization": self.normalization,
            "degenerate": self.degenerate,
            "K_range": list(self.K_range),
            "loglik": [float(x) for x in self.loglik],
            "penalty": [float(x) for x in self.penalty],
            "beta": [float(x) for x in self.beta],
            "lambda_grid": None if self.lambda_grid is None else [float(x) for x in self.lambda_grid],
            "entropy_curve": [float(x) for x in self.entropy_curve],
        }


def beta_profile(g: Graph, K_max: int, lam: float, backend: str = "variational", model: str = "sbm",
                 seed=None, fits: list[FitResult] | None = None, **kw) -> SelectionResult:
    """beta(K') = objective(K') - penalty(K') at a fixed lambda."""
    if fits is None:
        fits = fit_profile(g, K_max, backend, model, seed, **kw)
    obj = np.array([f.objective for f in fits])
    K_range = list(range(1, len(fits) + 1))
    pen = lam * penalty_weights(K_range, g.n)
    beta = obj - pen
    return SelectionResult(K_range, obj, pen, beta, float(lam), np.array([]), argmax_K(beta),
                           backend, model, g.n, seed, None, "shift", fits)


def select_K(g: Graph, K_max: int = 10, backend: str = "variational", model: str = "sbm",
             lambda_grid=None, seed=None, normalization: str = "shift", fits=None,
             **kw) -> SelectionResult:
    """Fit K' = 1..K_max once, tune lambda by entropy, return the penalized argmax."""
    if fits is None:
        fits = fit_profile(g, K_max, backend, model, seed, **kw)
    obj = np.array([f.objective for f in fits])
    grid = DEFAULT_LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    choice = entropy_select_lambda(obj, grid, g.n, normalization)
    res = beta_profile(g, K_max, choice.lambda_star, backend, model, seed, fits)
    res.entropy_curve = choice.entropy_curve
    res.lambda_grid = grid
    res.normalization = normalization
    res.degenerate = choice.degenerate
    return res
