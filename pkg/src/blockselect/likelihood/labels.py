"""Label estimation: regularized spectral clustering and pseudo-likelihood refinement."""
from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackError, LinearOperator, eigsh
from scipy.special import logsumexp
from sklearn.cluster import KMeans

from ..graph import Graph, seed_sequence

log = logging.getLogger(__name__)

DENSE_EIGEN_LIMIT = 2000
RATE_FLOOR = 1e-9
REGULARIZATION = 0.25
MODELS = ("sbm", "dcsbm")


def _regularized_operator(g: Graph, tau: float):
    """A + (tau/n) 11^T as a dense matrix, or a matrix-free operator for large n."""
    n = g.n
    if n <= DENSE_EIGEN_LIMIT:
        return g.dense() + tau / n
    A = g.adjacency

    def matvec(x):
        x = np.asarray(x).reshape(n, -1)
        return (A @ x + (tau / n) * x.sum(axis=0, keepdims=True)).squeeze()

    return LinearOperator((n, n), matvec=matvec, matmat=matvec, dtype=float)


def _spectrum(g: Graph, k: int, reg: float = REGULARIZATION):
    """Leading eigenpairs by magnitude, cached on the graph instance."""
    cache = g.__dict__.setdefault("_spectral_cache", {}).setdefault(reg, {})
    if cache.get("k", 0) >= k:
        return cache["vals"][:k], cache["vecs"][:, :k]
    tau = reg * 2.0 * g.n_edges / g.n if g.n else 0.0
    op = _regularized_operator(g, tau)
    if isinstance(op, np.ndarray):
        vals, vecs = np.linalg.eigh(op)
        k_store = g.n
    else:
        k_store = min(max(k, 10), g.n - 1)
        rng = np.random.default_rng(0)
        vals, vecs = eigsh(op, k=k_store, which="LM", v0=rng.standard_normal(g.n))
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    # fix eigenvector signs so embeddings are reproducible
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    vecs = vecs * np.where(flip == 0, 1.0, flip)
    cache.update(k=k_store, vals=vals, vecs=vecs)
    return vals[:k], vecs[:, :k]


def spectral_embedding(g: Graph, k: int, normalize_rows: bool = False,
                       reg: float = REGULARIZATION) -> np.ndarray:
    """Top-``k`` eigenvectors (by |eigenvalue|) of the regularized adjacency, scaled by sqrt|eigenvalue|."""
    vals, vecs = _spectrum(g, k, reg)
    X = vecs * np.sqrt(np.abs(vals))[None, :]
    if normalize_rows:
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        X = X / np.where(norms > 0, norms, 1.0)
    return X


def spectral_init(g: Graph, n_blocks: int, seed=None, n_init: int = 10,
                  normalize_rows: bool = False, reg: float = REGULARIZATION) -> np.ndarray:
    """Regularized spectral clustering into ``n_blocks`` groups.

    Adds ``tau / n`` to every adjacency entry (tau = ``reg`` times the mean
    degree), embeds nodes with the ``n_blocks`` leading eigenvectors and runs
    k-means. ``normalize_rows`` projects the embedding onto the unit sphere,
    which removes degree heterogeneity (use it for the DCSBM). Falls back to a
    random labeling, with a warning, if the eigensolver fails.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if n_blocks == 1:
        return np.zeros(g.n, dtype=np.int64)
    if g.n <= n_blocks:
        return np.arange(g.n, dtype=np.int64)
    rs = seed_sequence(seed).generate_state(1)[0]
    try:
        X = spectral_embedding(g, n_blocks, normalize_rows, reg)
    except (np.linalg.LinAlgError, ArpackError) as exc:
        warnings.warn(f"eigensolver failed ({exc}); using random labels", RuntimeWarning)
        return np.random.default_rng(rs).integers(0, n_blocks, g.n)
    km = KMeans(n_clusters=n_blocks, n_init=n_init, random_state=int(rs))
    with warnings.catch_warnings():
        # duplicate points (e.g. cliques) trigger a harmless convergence warning
        warnings.simplefilter("ignore")
        z = km.fit_predict(X)
    return canonical_labels(z, n_blocks)


def canonical_labels(z, n_blocks: int | None = None) -> np.ndarray:
    """Relabel blocks in order of first appearance; unused ids go last."""
    z = np.asarray(z, dtype=np.int64)
    _, first = np.unique(z, return_index=True)
    order = z[np.sort(first)]
    mapping = np.empty(max(int(z.max()) + 1 if z.size else 0, n_blocks or 0), dtype=np.int64)
    mapping[:] = -1
    mapping[order] = np.arange(len(order))
    rest = np.flatnonzero(mapping < 0)
    mapping[rest] = np.arange(len(order), len(order) + len(rest))
    return mapping[z]


def _block_sums(g: Graph, z, K):
    onehot = sparse.csr_matrix((np.ones(g.n), (np.arange(g.n), z)), shape=(g.n, K))
    return np.asarray((g.adjacency @ onehot).todense())


def _row_loglik(B, d, params, model):
    pi, rate = params
    if model == "sbm":
        return np.log(pi)[None, :] + B @ np.log(rate).T - rate.sum(axis=1)[None, :]
    return np.log(pi)[None, :] + B @ np.log(rate).T


def _row_mstep(B, d, post, model):
    w = post.sum(axis=0)
    pi = np.maximum(w / w.sum(), RATE_FLOOR)
    pi /= pi.sum()
    num = post.T @ B
    den = w if model == "sbm" else post.T @ d
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.where(den[:, None] > 0, num / np.where(den > 0, den, 1.0)[:, None], RATE_FLOOR)
    return pi, np.maximum(rate, RATE_FLOOR)


def refine_labels(g: Graph, z, n_blocks: int, model: str = "sbm", inner_iter: int = 50,
                  inner_tol: float = 1e-8, move_frac: float = 1.0) -> np.ndarray:
    """One pseudo-likelihood pass: EM on block-compressed rows, then hard labels.

    Rows ``b_i = (sum_{j: z_j = l} A_ij)_l`` are modelled as independent Poisson
    vectors (sbm) or multinomials given the node degree (dcsbm) under a
    ``n_blocks``-component mixture initialized at the current labels.
    ``move_frac < 1`` lets only that fraction of the would-be movers (largest
    gains first) change label, which damps oscillation.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    z = np.asarray(z, dtype=np.int64)
    K = n_blocks
    B = _block_sums(g, z, K)
    d = g.degrees.astype(float)
    post = np.zeros((g.n, K))
    post[np.arange(g.n), z] = 1.0
    params = _row_mstep(B, d, post, model)
    prev = -np.inf
    for _ in range(inner_iter):
        ll = _row_loglik(B, d, params, model)
        norm = logsumexp(ll, axis=1, keepdims=True)
        post = np.exp(ll - norm)
        total = float(norm.sum())
        params = _row_mstep(B, d, post, model)
        if total - prev < inner_tol * max(1.0, abs(total)):
            break
        prev = total
    ll = _row_loglik(B, d, params, model)
    # ties keep the current label so fixed points are stable
    gain = ll.max(axis=1) - ll[np.arange(g.n), z]
    movers = np.flatnonzero(gain > 0)
    if move_frac < 1 and len(movers) > 1:
        k = max(1, int(len(movers) * move_frac))
        movers = movers[np.argsort(-gain[movers], kind="stable")[:k]]
    out = z.copy()
    out[movers] = ll[movers].argmax(axis=1)
    return out


def estimate_labels(g: Graph, n_blocks: int, model: str = "sbm", seed=None,
                    max_iter: int = 100, init=None) -> np.ndarray:
    """Spectral initialization followed by pseudo-likelihood refinement to a fixed point."""
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if n_blocks == 1:
        return np.zeros(g.n, dtype=np.int64)
    if init is None:
        z = spectral_init(g, n_blocks, seed, normalize_rows=model == "dcsbm")
    else:
        z = np.asarray(init, dtype=np.int64)
    from .plugin import labels_objective

    seen = {z.tobytes()}
    frac = 1.0
    best, best_obj = z, labels_objective(g, z, n_blocks, model)
    for _ in range(max_iter):
        new = refine_labels(g, z, n_blocks, model, move_frac=frac)
        if np.array_equal(new, z):
            if frac == 1.0:
                return z
            frac = 1.0          # damped pass stalled; retry a full pass
            continue
        key = new.tobytes()
        if key in seen:
            # simultaneous moves are cycling: let fewer nodes move at once
            frac /= 2
        seen.add(key)
        z = new
        obj = labels_objective(g, z, n_blocks, model)
        if obj > best_obj:
            best, best_obj = z, obj
    log.debug("pseudo-likelihood refinement hit the iteration cap (%d)", max_iter)
    return best
