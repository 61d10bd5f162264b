"""Closed-form likelihoods: complete, profile, exhaustive sum, mean-field bound, DCSBM."""
from __future__ import annotations

import itertools

import numpy as np
from scipy.special import logsumexp, xlogy

from ..graph import BlockParams, CountStats, Graph, count_stats

CLAMP = 1e-9
MAX_EXHAUSTIVE = 10**7


class ResourceLimitError(RuntimeError):
    """Raised when an exact computation would exceed its size budget."""


def complete_log_lik(cs: CountStats, theta: BlockParams) -> float:
    """log f(z, A; theta) from count statistics (ordered-pair convention)."""
    if cs.K != theta.K:
        raise ValueError(f"count stats have {cs.K} blocks, theta has {theta.K}")
    H = theta.H
    label_term = xlogy(cs.n_a, theta.pi).sum()
    edge_term = cs.O_ab * np.log(H) + (cs.n_ab - cs.O_ab) * np.log1p(-H)
    return float(label_term + 0.5 * edge_term.sum())


def profile_mle(cs: CountStats, clamp: float = CLAMP) -> BlockParams:
    """pi = n_a/n, H = O/n_ab, clamped into [clamp, 1-clamp].

    Empty blocks get ``clamp`` for their proportion and their rows of ``H``;
    proportions are renormalized after clamping.
    """
    n = cs.n
    if n < 1:
        raise ValueError("need at least one node")
    with np.errstate(divide="ignore", invalid="ignore"):
        H = np.where(cs.n_ab > 0, cs.O_ab / np.maximum(cs.n_ab, 1), clamp)
    H = np.clip(H, clamp, 1 - clamp)
    pi = np.clip(cs.n_a / n, clamp, 1 - clamp) if cs.K > 1 else np.ones(1)
    pi = pi / pi.sum()
    return BlockParams(pi, H)


def profile_log_lik(cs: CountStats, clamp: float = CLAMP) -> float:
    """sup_theta log f(z, A; theta) for fixed labels (0 log 0 := 0, no clamping)."""
    n = cs.n
    with np.errstate(divide="ignore", invalid="ignore"):
        p = cs.n_a / n
        h = np.where(cs.n_ab > 0, cs.O_ab / np.maximum(cs.n_ab, 1), 0.0)
    label_term = xlogy(cs.n_a, p).sum()
    edge_term = xlogy(cs.O_ab, h) + xlogy(cs.n_ab - cs.O_ab, 1 - h)
    return float(label_term + 0.5 * edge_term.sum())


def exhaustive_log_g(g: Graph, theta: BlockParams, n_blocks: int | None = None) -> float:
    """log g(A; theta): log-sum-exp of the complete likelihood over all labelings.

    Test-scale oracle only; raises :class:`ResourceLimitError` above 1e7 labelings.
    """
    K = theta.K if n_blocks is None else n_blocks
    if K != theta.K:
        raise ValueError("n_blocks must match theta")
    if K ** g.n > MAX_EXHAUSTIVE:
        raise ResourceLimitError(f"{K}^{g.n} labelings exceeds {MAX_EXHAUSTIVE}")
    terms = np.fromiter(
        (complete_log_lik(count_stats(g, z, K), theta)
         for z in itertools.product(range(K), repeat=g.n)),
        dtype=float,
    )
    return float(logsumexp(terms))


def _check_posterior(q, n, K):
    q = np.asarray(q, dtype=float)
    if q.shape != (n, K):
        raise ValueError(f"posterior must be {n}x{K}, got {q.shape}")
    return q


def elbo_from_parts(AQ: np.ndarray, q: np.ndarray, theta: BlockParams) -> float:
    """Mean-field lower bound given a precomputed ``A @ q``."""
    logH = np.log(theta.H)
    log1m = np.log1p(-theta.H)
    s = q.sum(axis=0)
    edge_w = q.T @ AQ                       # sum_{i!=j} q_ik q_jl A_ij
    pair_w = np.outer(s, s) - q.T @ q       # sum_{i!=j} q_ik q_jl
    pair_term = 0.5 * (np.sum(edge_w * (logH - log1m)) + np.sum(pair_w * log1m))
    entropy = -xlogy(q, q).sum()
    prior = q.sum(axis=0) @ np.log(theta.pi)
    return float(entropy + prior + pair_term)


def mean_field_elbo(g: Graph, q, theta: BlockParams) -> float:
    """Variational log-likelihood J(q, theta; A) for a product posterior ``q``."""
    q = _check_posterior(q, g.n, theta.K)
    return elbo_from_parts(g.adjacency @ q, q, theta)


def one_hot(z, K: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.int64)
    q = np.zeros((len(z), K))
    q[np.arange(len(z)), z] = 1.0
    return q


def dcsbm_degree_estimates(g: Graph, z, n_blocks: int | None = None) -> np.ndarray:
    """Plug-in degree parameters omega_i = n_{z_i} d_i / D_{z_i}."""
    z = np.asarray(z, dtype=np.int64)
    K = int(z.max()) + 1 if n_blocks is None else n_blocks
    d = g.degrees.astype(float)
    sizes = np.bincount(z, minlength=K)
    D = np.bincount(z, weights=d, minlength=K)
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = np.where(D[z] > 0, sizes[z] * d / np.where(D[z] > 0, D[z], 1.0), 0.0)
    return omega


def dcsbm_profile_log_lik(g: Graph, z, n_blocks: int | None = None, clamp: float = CLAMP) -> float:
    """Poisson DCSBM log-likelihood at plug-in omega and H (up to constants).

    sum_i d_i log omega_i + 1/2 sum_kl [O_kl log H_kl - n_k n_l H_kl] with
    H_kl = O_kl / (n_k n_l). Zero-count cells take H = ``clamp``.
    """
    cs = count_stats(g, z, n_blocks)
    omega = dcsbm_degree_estimates(g, z, cs.K)
    d = g.degrees
    degree_term = xlogy(d, omega).sum()
    nn = np.outer(cs.n_a, cs.n_a).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        H = np.where(nn > 0, cs.O_ab / np.where(nn > 0, nn, 1.0), 0.0)
    H = np.maximum(H, clamp)
    block_term = 0.5 * np.sum(cs.O_ab * np.log(H) - nn * H)
    return float(degree_term + block_term)


def _all_count_stats(g: Graph, K: int):
    """Stacked (n_a, n_ab, O_ab) over every labeling in [K]^n."""
    if K ** g.n > MAX_EXHAUSTIVE:
        raise ResourceLimitError(f"{K}^{g.n} labelings exceeds {MAX_EXHAUSTIVE}")
    Z = np.array(list(itertools.product(range(K), repeat=g.n)), dtype=np.int64).reshape(-1, g.n)
    n_a = np.stack([(Z == k).sum(axis=1) for k in range(K)], axis=1)
    n_ab = n_a[:, :, None] * n_a[:, None, :] - np.einsum("za,ab->zab", n_a, np.eye(K, dtype=np.int64))
    zi, zj = Z[:, g.edges[:, 0]], Z[:, g.edges[:, 1]]
    O = np.zeros((len(Z), K, K), dtype=np.int64)
    rows = np.repeat(np.arange(len(Z)), g.n_edges)
    np.add.at(O, (rows, zi.ravel(), zj.ravel()), 1)
    O = O + O.transpose(0, 2, 1)
    return Z, n_a, n_ab, O


def exhaustive_fit(g: Graph, n_blocks: int, restarts: int = 5, seed=None, tol: float = 1e-10,
                   max_iter: int = 2000, clamp: float = CLAMP):
    """Local maximum of log g(A; theta) by EM with the exact label posterior.

    Returns ``(theta, log_g, posterior_over_labelings)``. Oracle scale only.
    """
    K = n_blocks
    Z, n_a, n_ab, O = _all_count_stats(g, K)
    rng = np.random.default_rng(seed)
    best = None
    for r in range(max(1, restarts)):
        # start from the exact posterior under a random theta
        H0 = rng.uniform(0.05, 0.95, (K, K))
        H0 = np.triu(H0) + np.triu(H0, 1).T
        logf = n_a @ np.log(rng.dirichlet(np.ones(K))) + 0.5 * (
            np.einsum("zab,ab->z", O, np.log(H0)) + np.einsum("zab,ab->z", n_ab - O, np.log1p(-H0)))
        w = np.exp(logf - logsumexp(logf))
        prev = -np.inf
        for _ in range(max_iter):
            pi = np.maximum((w @ n_a) / g.n, clamp)
            pi /= pi.sum()
            num = np.einsum("z,zab->ab", w, O)
            den = np.einsum("z,zab->ab", w, n_ab)
            H = np.clip(np.where(den > 0, num / np.where(den > 0, den, 1), clamp), clamp, 1 - clamp)
            logf = n_a @ np.log(pi) + 0.5 * (
                np.einsum("zab,ab->z", O, np.log(H)) + np.einsum("zab,ab->z", n_ab - O, np.log1p(-H)))
            lg = float(logsumexp(logf))
            w = np.exp(logf - lg)
            if lg - prev < tol:
                break
            prev = lg
        if best is None or lg > best[1]:
            best = (BlockParams(pi, H), lg, w)
        if K == 1:
            break
    return best
