"""Block merging and the limiting law of the underfitting log-likelihood ratio.

Block ids are 0-based. Merging blocks ``a < b`` gives the pooled block id
``a``; blocks ``c > b`` move down to ``c - 1``.

The dense regime works with ``H`` and ``gamma_1``; the sparse regime works with
``S = H / rho`` and ``gamma_2``. The statistic ``L`` is
``sup log g`` at ``K - 1`` blocks minus ``sup log g`` at ``K`` blocks:

* dense:  ``L / n^{3/2} - sqrt(n) mu_1  ->  N(0, sigma_1^2)``
* sparse: ``L / (rho n^{3/2}) - sqrt(n) mu_2 / rho  ->  N(0, sigma_2^2)``
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .graph import BlockParams, Graph

REGIMES = ("dense", "sparse")
BACKENDS = ("variational", "plugin", "exhaustive")


class AssumptionViolation(ValueError):
    """The parameters break the uniqueness or identifiability premise of the limit law."""


def gamma(x, variant: int = 1):
    """gamma_1(x) = x log x + (1-x) log(1-x); gamma_2(x) = x log x - x."""
    x = np.asarray(x, dtype=float)
    if variant == 1:
        if np.any((x <= 0) | (x >= 1)):
            raise ValueError("gamma_1 needs x in (0, 1)")
        out = xlogy(x, x) + xlogy(1 - x, 1 - x)
    elif variant == 2:
        if np.any(x <= 0):
            raise ValueError("gamma_2 needs x > 0")
        out = xlogy(x, x) - x
    else:
        raise ValueError("variant must be 1 or 2")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MergeSpec:
    a: int
    b: int

    def __post_init__(self):
        if not 0 <= self.a < self.b:
            raise ValueError(f"merge needs 0 <= a < b, got ({self.a}, {self.b})")

    def check(self, K: int):
        if K < 2:
            raise ValueError("cannot merge a single block")
        if self.b >= K:
            raise ValueError(f"merge ({self.a}, {self.b}) out of range for K={K}")

    def mapping(self, K: int) -> np.ndarray:
        """u(c): new id of old block c."""
        self.check(K)
        u = np.arange(K)
        u[self.b] = self.a
        u[self.b + 1:] -= 1
        return u


def merge_params(H, p, spec: MergeSpec):
    """Pool blocks ``spec.a`` and ``spec.b`` of ``H`` with weights ``p``.

    Every merged entry is the ``p_c p_d``-weighted average of the original
    entries it covers, so ``sum p' p'^T H' == sum p p^T H``.
    """
    H = np.asarray(H, dtype=float)
    p = np.asarray(p, dtype=float)
    K = len(p)
    u = spec.mapping(K)
    M = np.zeros((K, K - 1))
    M[np.arange(K), u] = 1.0
    p_new = M.T @ p
    W = np.outer(p, p)
    H_new = (M.T @ (W * H) @ M) / np.outer(p_new, p_new)
    return 0.5 * (H_new + H_new.T), p_new


def merge_labels(Z, spec: MergeSpec) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.int64)
    out = Z.copy()
    out[Z == spec.b] = spec.a
    out[Z > spec.b] -= 1
    return out


def _variant_matrix(theta: BlockParams, variant: int):
    return theta.H if variant == 1 else theta.S


def D_value(theta: BlockParams, spec: MergeSpec, variant: int = 1, p=None) -> float:
    """Proportion-weighted gamma-sum retained after merging (larger = less loss)."""
    p = theta.pi if p is None else np.asarray(p, dtype=float)
    Hm, pm = merge_params(_variant_matrix(theta, variant), p, spec)
    return float(np.sum(np.outer(pm, pm) * gamma(Hm, variant)))


def grand_gamma(theta: BlockParams, variant: int = 1, p=None) -> float:
    p = theta.pi if p is None else np.asarray(p, dtype=float)
    return float(np.sum(np.outer(p, p) * gamma(_variant_matrix(theta, variant), variant)))


@dataclass(frozen=True)
class MergeChoice:
    spec: MergeSpec
    values: dict
    unique: bool
    identifiable: bool


def _has_identical_columns(M, tol):
    K = M.shape[0]
    for i in range(K):
        for j in range(i + 1, K):
            if np.max(np.abs(M[:, i] - M[:, j])) <= tol:
                return True
    return False


def optimal_merge(theta: BlockParams, variant: int = 1, tie_tol: float = 1e-10) -> MergeChoice:
    """Merge maximizing ``D_value``; flags ties and a non-identifiable merged model."""
    K = theta.K
    if K < 2:
        raise ValueError("need K >= 2")
    values = {(a, b): D_value(theta, MergeSpec(a, b), variant)
              for a in range(K) for b in range(a + 1, K)}
    ranked = sorted(values, key=lambda k: (-values[k], k))
    best = ranked[0]
    unique = len(ranked) == 1 or values[best] - values[ranked[1]] >= tie_tol
    spec = MergeSpec(*best)
    Sm, _ = merge_params(theta.S, theta.pi, spec)
    identifiable = not _has_identical_columns(Sm, tie_tol) if K > 2 else True
    return MergeChoice(spec, values, unique, identifiable)


def greedy_merges(theta: BlockParams, target_K: int, variant: int = 1) -> list[MergeSpec]:
    """Repeated single merges, each maximizing ``D_value``, down to ``target_K`` blocks."""
    if not 1 <= target_K <= theta.K:
        raise ValueError("target_K must lie in [1, K]")
    specs = []
    cur = theta
    while cur.K > target_K:
        if cur.K == 2:
            spec = MergeSpec(0, 1)
        else:
            spec = optimal_merge(cur, variant).spec
        specs.append(spec)
        Hm, pm = merge_params(cur.H, cur.pi, spec)
        cur = BlockParams(pm / pm.sum(), Hm, cur.rho)
    return specs


def kl_merge_leading(theta: BlockParams, n: int, spec: MergeSpec, variant: int = 1, p=None) -> float:
    """Leading-order information loss of a merge.

    ``(n^2/2)[sum p p gamma_1(H) - D_1]`` (dense) or
    ``(n^2 rho/2)[sum p p gamma_2(S) - D_2]`` (sparse).
    """
    gap = grand_gamma(theta, variant, p) - D_value(theta, spec, variant, p)
    scale = n * n / 2.0
    if variant == 2:
        scale *= theta.scale
    return scale * gap


def divergence_terms(theta: BlockParams, spec: MergeSpec, variant: int = 1) -> np.ndarray:
    """Per-pair expected log-likelihood ratio d(a, b) between merged and true models.

    variant 1: ``H log(H'/H) + (1-H) log((1-H')/(1-H))``
    variant 2: ``S log(S'/S) - (S' - S)``, the small-``rho`` limit of variant 1 over rho.
    """
    K = theta.K
    u = spec.mapping(K)
    if variant == 1:
        Hm, _ = merge_params(theta.H, theta.pi, spec)
        X, Xm = theta.H, Hm[np.ix_(u, u)]
        return X * np.log(Xm / X) + (1 - X) * np.log((1 - Xm) / (1 - X))
    Sm, _ = merge_params(theta.S, theta.pi, spec)
    X, Xm = theta.S, Sm[np.ix_(u, u)]
    return X * np.log(Xm / X) - (Xm - X)


def sensitivity_vector(theta: BlockParams, spec: MergeSpec, variant: int = 1) -> np.ndarray:
    """J_c = sum over d with (c, d) touching a merged block of pi_d d(c, d)."""
    d = divergence_terms(theta, spec, variant)
    K = theta.K
    merged = np.zeros(K, dtype=bool)
    merged[[spec.a, spec.b]] = True
    touch = merged[:, None] | merged[None, :]
    return (touch * d) @ theta.pi


def multinomial_cov(pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    return np.diag(pi) - np.outer(pi, pi)


def edge_noise_variance(theta: BlockParams, spec: MergeSpec, n: int, regime: str = "sparse") -> float:
    """Variance of the edge-noise part of the scaled statistic, of order 1/(n rho).

    The limit law keeps only the label-proportion fluctuations; the term
    ``sum_{i<j} (A_ij - H) c(z_i, z_j)`` with ``c = log[H'(1-H) / ((1-H')H)]``
    over pairs touching a merged block vanishes as ``n rho -> inf`` but is
    comparable to ``sigma^2`` at moderate ``n rho``.
    """
    K = theta.K
    u = spec.mapping(K)
    Hm, _ = merge_params(theta.H, theta.pi, spec)
    X, Xm = theta.H, Hm[np.ix_(u, u)]
    c = np.log(Xm * (1 - X) / ((1 - Xm) * X))
    merged = np.zeros(K, dtype=bool)
    merged[[spec.a, spec.b]] = True
    touch = merged[:, None] | merged[None, :]
    v = 0.5 * float(np.sum(np.outer(theta.pi, theta.pi) * touch * c ** 2 * X * (1 - X))) / n
    return v / theta.scale ** 2 if regime == "sparse" else v


def label_entropy_gain(pi, spec: MergeSpec) -> float:
    """(p_a + p_b) log(p_a + p_b) - p_a log p_a - p_b log p_b (>= 0)."""
    pa, pb = pi[spec.a], pi[spec.b]
    return float(xlogy(pa + pb, pa + pb) - xlogy(pa, pa) - xlogy(pb, pb))


@dataclass(frozen=True)
class LimitLaw:
    """Normal approximation for the underfitting statistic ``L_{K,K-1}``.

    ``mu`` and ``sigma2`` are the theorem's mean coefficient and variance;
    ``centering`` is the mean of :meth:`scale` applied to ``L``.
    """

    mu: float
    sigma2: float
    regime: str
    centering: float
    n: int
    rho: float
    spec: MergeSpec
    mu1: float
    entropy_gain: float
    J: np.ndarray
    edge_var: float = 0.0

    @property
    def sd(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def finite_sd(self) -> float:
        """sd including the O(1/(n rho)) edge-noise variance (diagnostic, not the limit)."""
        return math.sqrt(self.sigma2 + self.edge_var)

    def scale(self, L):
        """Limit-law scaling: L / n^{3/2}, divided by rho in the sparse regime."""
        L = np.asarray(L, dtype=float)
        out = L / self.n ** 1.5
        return out / self.rho if self.regime == "sparse" else out

    def raw(self, L):
        """Figure-style scaling L / n^{3/2} (no rho)."""
        return np.asarray(L, dtype=float) / self.n ** 1.5

    @property
    def raw_centering(self) -> float:
        return self.centering * self.rho if self.regime == "sparse" else self.centering

    @property
    def raw_sd(self) -> float:
        return self.sd * self.rho if self.regime == "sparse" else self.sd

    @property
    def expected_L(self) -> float:
        return self.raw_centering * self.n ** 1.5


def limit_law(theta: BlockParams, n: int, regime: str = "sparse", tie_tol: float = 1e-10) -> LimitLaw:
    """Mean and variance of the limiting normal law of ``L_{K,K-1}``."""
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}")
    if theta.K < 2:
        raise ValueError("underfitting needs K >= 2")
    variant = 1 if regime == "dense" else 2
    choice = optimal_merge(theta, variant, tie_tol)
    if not choice.unique:
        raise AssumptionViolation("optimal merge is not unique (Assumption 1)")
    if not choice.identifiable:
        raise AssumptionViolation("merged model has identical columns (Assumption 2)")
    spec = choice.spec
    mu1 = 0.5 * (D_value(theta, spec, 1) - grand_gamma(theta, 1))
    gain = label_entropy_gain(theta.pi, spec)
    J = sensitivity_vector(theta, spec, variant)
    Jbar = float(theta.pi @ J)
    # J^T Sigma(pi) J written as a weighted variance: exact zero when all J_c agree
    sigma2 = float(theta.pi @ (J - Jbar) ** 2)
    rho = theta.scale
    if regime == "dense":
        mu = mu1
        centering = math.sqrt(n) * mu1
    else:
        mu = mu1 + gain / n
        centering = math.sqrt(n) * mu / rho
    edge_var = edge_noise_variance(theta, spec, n, regime)
    return LimitLaw(mu, sigma2, regime, centering, n, rho, spec, mu1, gain, J, edge_var)


def log_lik_ratio(g: Graph, K: int, Kp: int, backend: str = "variational", seed=None,
                  model: str = "sbm", **fit_kw) -> float:
    """``sup log g`` at ``Kp`` blocks minus at ``K`` blocks, one backend for both sides."""
    from .selection import fit_backend

    if K < 1 or Kp < 1:
        raise ValueError("block counts must be >= 1")
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    if Kp == K:
        return 0.0
    obj_K = fit_backend(g, K, backend, model, seed, **fit_kw).objective
    obj_Kp = fit_backend(g, Kp, backend, model, seed, **fit_kw).objective
    return obj_Kp - obj_K
