"""Mean-field variational EM for the Bernoulli SBM."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..graph import BlockParams, Graph, count_stats, seed_sequence
from .exact import CLAMP, elbo_from_parts, one_hot, profile_mle
from .labels import spectral_init


@dataclass
class FitResult:
    n_blocks: int
    theta: BlockParams
    labels: np.ndarray
    objective: float
    backend: str
    iterations: int = 0
    converged: bool = True
    posterior: np.ndarray | None = None
    trace: list[float] = field(default_factory=list)
    restart: int = 0


def _m_step(AQ, q, clamp=CLAMP):
    n, K = q.shape
    s = q.sum(axis=0)
    pi = np.maximum(s / n, clamp)
    pi /= pi.sum()
    edge_w = q.T @ AQ
    pair_w = np.outer(s, s) - q.T @ q
    with np.errstate(divide="ignore", invalid="ignore"):
        H = np.where(pair_w > 1e-12, edge_w / np.where(pair_w > 1e-12, pair_w, 1.0), clamp)
    H = np.clip(0.5 * (H + H.T), clamp, 1 - clamp)
    return BlockParams(pi, H)


def _log_normalize(x):
    """Rows of ``x`` shifted so each row of ``exp(x)`` sums to one."""
    m = x.max(axis=1, keepdims=True)
    return x - (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True)))


def _e_target(AQ, q, theta):
    """log of the per-node fixed-point update (each node given all others)."""
    logH = np.log(theta.H)
    log1m = np.log1p(-theta.H)
    s = q.sum(axis=0)
    others = s[None, :] - q
    ll = np.log(theta.pi)[None, :] + AQ @ (logH - log1m).T + others @ log1m.T
    return _log_normalize(ll)


def _smooth(q, eta=1e-3):
    K = q.shape[1]
    return (1 - eta) * q + eta / K


def _run(A, q, tol, max_iter, damping):
    K = q.shape[1]
    logq = np.log(q)
    AQ = A @ q
    theta = _m_step(AQ, q)
    elbo = elbo_from_parts(AQ, q, theta)
    trace = [elbo]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        target = _e_target(AQ, q, theta)
        step = damping
        # damped log-scale move toward the fixed point; shrink until ELBO does not drop
        while True:
            cand = (1 - step) * logq + step * target
            cand = _log_normalize(cand)
            q_new = np.exp(cand)
            AQ_new = A @ q_new
            e_new = elbo_from_parts(AQ_new, q_new, theta)
            if e_new >= elbo or step < 1e-6:
                break
            step /= 2
        if e_new >= elbo:
            logq, q, AQ = cand, q_new, AQ_new
        theta_new = _m_step(AQ, q)
        e_new = elbo_from_parts(AQ, q, theta_new)
        if e_new >= elbo - 1e-9 * abs(elbo):
            theta = theta_new
        else:
            e_new = elbo_from_parts(AQ, q, theta)
        gain = e_new - elbo
        elbo = max(elbo, e_new)
        trace.append(elbo)
        if gain < tol:
            converged = True
            break
    if K == 1:
        converged = True
    return q, theta, elbo, it, converged, trace


def _perturb(z, K, rng, frac=0.2):
    z = z.copy()
    flip = rng.random(len(z)) < frac
    z[flip] = rng.integers(0, K, flip.sum())
    return z


def variational_em(g: Graph, n_blocks: int, init=None, tol: float = 1e-6, max_iter: int = 500,
                   restarts: int = 5, seed=None, damping: float = 0.5) -> FitResult:
    """Fit a ``n_blocks``-block SBM by mean-field variational EM.

    ``init`` may be a labeling or an ``n x n_blocks`` posterior; by default it
    is the regularized spectral clustering. Restart 0 starts from ``init``; the
    others start from it with 20% of the labels redrawn. The fit with the
    largest ELBO wins, ties going to the lowest restart index.
    """
    K = int(n_blocks)
    if K < 1:
        raise ValueError("n_blocks must be >= 1")
    n = g.n
    A = g.adjacency
    if K == 1:
        z = np.zeros(n, dtype=np.int64)
        q = np.ones((n, 1))
        theta = profile_mle(count_stats(g, z, 1))
        obj = elbo_from_parts(A @ q, q, theta)
        return FitResult(1, theta, z, obj, "variational", 1, True, q, [obj])

    ss = seed_sequence(seed)
    init_seed, pert_seed = ss.spawn(2)
    if init is None:
        init = spectral_init(g, K, init_seed)
    init = np.asarray(init)
    if init.ndim == 1:
        z0 = init.astype(np.int64)
        q0 = _smooth(one_hot(z0, K))
    else:
        if init.shape != (n, K):
            raise ValueError(f"initial posterior must be {n}x{K}")
        q0 = _smooth(init / init.sum(axis=1, keepdims=True), 1e-6)
        z0 = q0.argmax(axis=1)
    rng = np.random.default_rng(pert_seed)

    best = None
    for r in range(max(1, restarts)):
        start = q0 if r == 0 else _smooth(one_hot(_perturb(z0, K, rng), K))
        q, theta, obj, it, conv, trace = _run(A, start, tol, max_iter, damping)
        if best is None or obj > best.objective:
            best = FitResult(K, theta, q.argmax(axis=1), obj, "variational", it, conv, q, trace, r)
    return best
