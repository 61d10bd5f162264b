"""Graph and block-model parameter types, random generation, count statistics.

Labels are 0-based integer arrays throughout: a labeling into ``K`` blocks
takes values in ``0..K-1``. Empty blocks are allowed.

Count statistics use the ordered-pair convention: ``n_ab`` and ``O_ab`` count
ordered pairs ``(i, j)`` with ``i != j``, so ``O_aa`` is twice the number of
edges inside block ``a`` and ``sum(O) == 2 * n_edges``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on ``n`` nodes.

    ``edges`` is an ``(m, 2)`` array of unique pairs with ``i < j``, sorted
    lexicographically. Use :meth:`from_edges` to build one from arbitrary pairs.
    """

    n: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 0:
            raise ValueError("node count must be nonnegative")
        if e.size:
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("edge endpoint out of range [0, n)")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must satisfy i < j (no self-loops)")
            key = e[:, 0] * self.n + e[:, 1]
            if np.any(np.diff(key) <= 0):
                raise ValueError("edges must be unique and sorted")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @classmethod
    def from_edges(cls, n: int, pairs) -> "Graph":
        """Canonicalize arbitrary pairs: drop self-loops, orient i<j, dedupe, sort."""
        p = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        p = p[p[:, 0] != p[:, 1]]
        p = np.sort(p, axis=1)
        if p.size:
            key = np.unique(p[:, 0] * n + p[:, 1])
            p = np.column_stack([key // n, key % n])
        return cls(n, p)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 adjacency in CSR form (float64)."""
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        a = sparse.csr_matrix(
            (data, (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(self.n, self.n),
        )
        a.sort_indices()
        return a

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def neighbors(self, i: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def dense(self) -> np.ndarray:
        return self.adjacency.toarray()


@dataclass(frozen=True)
class BlockParams:
    """Block proportions ``pi`` and symmetric edge-probability matrix ``H``.

    ``rho`` is an optional density scale with ``S = H / rho``; when omitted
    the largest entry of ``H`` is used.
    """

    pi: np.ndarray
    H: np.ndarray
    rho: float | None = None

    def __post_init__(self):
        pi = np.atleast_1d(np.asarray(self.pi, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        k = len(pi)
        if H.shape != (k, k):
            raise ValueError(f"H must be {k}x{k}, got {H.shape}")
        if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("pi must be strictly positive and sum to 1")
        if not np.allclose(H, H.T, rtol=0, atol=1e-14):
            raise ValueError("H must be symmetric")
        if np.any(H <= 0) or np.any(H >= 1):
            raise ValueError("H entries must lie strictly inside (0, 1)")
        if self.rho is not None and self.rho <= 0:
            raise ValueError("rho must be positive")
        pi.setflags(write=False)
        H.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "H", H)

    @classmethod
    def from_density(cls, pi, S, rho: float) -> "BlockParams":
        return cls(pi, rho * np.asarray(S, dtype=float), rho)

    @property
    def K(self) -> int:
        return len(self.pi)

    @property
    def scale(self) -> float:
        return float(self.H.max()) if self.rho is None else float(self.rho)

    @property
    def S(self) -> np.ndarray:
        return self.H / self.scale

    def permuted(self, perm) -> "BlockParams":
        """Parameters with block ``perm[k]`` moved to position ``k``."""
        perm = np.asarray(perm)
        return BlockParams(self.pi[perm], self.H[np.ix_(perm, perm)], self.rho)


@dataclass(frozen=True)
class CountStats:
    """Block counts, ordered pair counts and ordered edge counts for a labeling."""

    n_a: np.ndarray
    n_ab: np.ndarray
    O_ab: np.ndarray

    @property
    def K(self) -> int:
        return len(self.n_a)

    @property
    def n(self) -> int:
        return int(self.n_a.sum())


def _check_rng_args(n: int):
    if n <= 0:
        raise ValueError("n must be a positive integer")


def sample_labels(pi, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` i.i.d. block labels with probabilities ``pi``."""
    _check_rng_args(n)
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-12:
        raise ValueError("pi must be strictly positive and sum to 1")
    rng = np.random.default_rng(seed)
    return rng.choice(len(pi), size=n, p=pi).astype(np.int64)


def _upper_pair(t: np.ndarray, m: int):
    """Decode row-major indices of the strict upper triangle of an m x m matrix."""
    # row i starts at offset i*(2m - i - 1)/2
    t = t.astype(np.int64)
    b = 2 * m - 1
    i = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * t, 0.0))) / 2).astype(np.int64)
    off = i * (2 * m - i - 1) // 2
    # float rounding can land one row off in either direction
    too_far = off > t
    i[too_far] -= 1
    off = i * (2 * m - i - 1) // 2
    nxt = (i + 1) * (2 * m - i - 2) // 2
    short = t >= nxt
    i[short] += 1
    off = i * (2 * m - i - 1) // 2
    j = t - off + i + 1
    return i, j


def _bernoulli_block(rng, members_a, members_b, p, same):
    if same:
        m = len(members_a)
        total = m * (m - 1) // 2
    else:
        total = len(members_a) * len(members_b)
    if total == 0:
        return np.empty((0, 2), dtype=np.int64)
    k = rng.binomial(total, p)
    if k == 0:
        return np.empty((0, 2), dtype=np.int64)
    t = rng.choice(total, size=k, replace=False)
    if same:
        i, j = _upper_pair(t, len(members_a))
        return np.column_stack([members_a[i], members_a[j]])
    nb = len(members_b)
    return np.column_stack([members_a[t // nb], members_b[t % nb]])


def sample_sbm(theta: BlockParams, n: int, seed=None):
    """Draw ``(graph, labels)`` from the Bernoulli SBM with parameters ``theta``.

    Labels come from the first draws of the stream so ``sample_labels`` with the
    same seed reproduces them.
    """
    _check_rng_args(n)
    rng = np.random.default_rng(seed)
    z = rng.choice(theta.K, size=n, p=theta.pi).astype(np.int64)
    members = [np.flatnonzero(z == k) for k in range(theta.K)]
    chunks = []
    for a in range(theta.K):
        for b in range(a, theta.K):
            chunks.append(_bernoulli_block(rng, members[a], members[b], theta.H[a, b], a == b))
    pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    return Graph.from_edges(n, pairs), z


DEGREE_PRIORS = ("uniform", "dirichlet", "ones")


@dataclass(frozen=True)
class DcsbmSample:
    graph: Graph
    labels: np.ndarray
    omega: np.ndarray
    # Poisson multiplicities aligned with graph.edges; None for binary draws
    counts: np.ndarray | None = field(default=None)


def sample_degree_params(z: np.ndarray, K: int, rng, prior: str = "uniform",
                         low: float = 0.2, high: float = 1.0) -> np.ndarray:
    """Per-node degree parameters normalized so each block sums to its size."""
    n = len(z)
    if prior == "uniform":
        raw = rng.uniform(low, high, size=n)
    elif prior == "dirichlet":
        # n_k * Dirichlet(1) is n_k times normalized Exp(1) draws
        raw = rng.exponential(1.0, size=n)
    elif prior == "ones":
        return np.ones(n)
    else:
        raise ValueError(f"unknown degree prior {prior!r}; expected one of {DEGREE_PRIORS}")
    sums = np.bincount(z, weights=raw, minlength=K)
    sizes = np.bincount(z, minlength=K)
    return raw * sizes[z] / sums[z]


def sample_dcsbm(theta: BlockParams, n: int, binary: bool = True, seed=None,
                 degree_prior: str = "uniform") -> DcsbmSample:
    """Draw from the Poisson degree-corrected SBM.

    ``A_ij ~ Poisson(omega_i omega_j H[z_i, z_j])`` for ``i < j``; self-pairs are
    never generated. With ``binary=True`` counts are thresholded at 1, otherwise
    the multiplicities are returned alongside the (collapsed) simple graph.
    """
    _check_rng_args(n)
    if degree_prior not in DEGREE_PRIORS:
        raise ValueError(f"unknown degree prior {degree_prior!r}; expected one of {DEGREE_PRIORS}")
    rng = np.random.default_rng(seed)
    K = theta.K
    z = rng.choice(K, size=n, p=theta.pi).astype(np.int64)
    omega = sample_degree_params(z, K, rng, degree_prior)
    members = [np.flatnonzero(z == k) for k in range(K)]
    ends = []
    for a in range(K):
        wa = omega[members[a]]
        if len(wa) == 0:
            continue
        for b in range(a, K):
            wb = omega[members[b]]
            if len(wb) == 0:
                continue
            # Poisson thinning: total count split multinomially over pairs ∝ omega_i omega_j
            mean = theta.H[a, b] * wa.sum() * wb.sum()
            if a == b:
                mean /= 2.0
            m = rng.poisson(mean)
            i = members[a][rng.choice(len(wa), size=m, p=wa / wa.sum())]
            j = members[b][rng.choice(len(wb), size=m, p=wb / wb.sum())]
            ends.append(np.column_stack([i, j]))
    pairs = np.concatenate(ends) if ends else np.empty((0, 2), dtype=np.int64)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.sort(pairs, axis=1)
    key, counts = np.unique(pairs[:, 0] * n + pairs[:, 1], return_counts=True)
    g = Graph(n, np.column_stack([key // n, key % n]))
    return DcsbmSample(g, z, omega, None if binary else counts)


def _as_labels(g_n: int, z, n_blocks: int | None):
    z = np.asarray(z, dtype=np.int64)
    if z.ndim != 1 or len(z) != g_n:
        raise ValueError(f"labeling length {len(z)} does not match n={g_n}")
    if z.size and z.min() < 0:
        raise ValueError("labels must be nonnegative")
    K = int(z.max()) + 1 if n_blocks is None else int(n_blocks)
    if z.size and z.max() >= K:
        raise ValueError("label exceeds number of blocks")
    return z, K


def count_stats(g: Graph, z, n_blocks: int | None = None) -> CountStats:
    """Exact block counts under the ordered-pair convention."""
    z, K = _as_labels(g.n, z, n_blocks)
    n_a = np.bincount(z, minlength=K).astype(np.int64)
    n_ab = np.outer(n_a, n_a) - np.diag(n_a)
    zi, zj = z[g.edges[:, 0]], z[g.edges[:, 1]]
    O = np.bincount(zi * K + zj, minlength=K * K).reshape(K, K)
    O = O + O.T
    return CountStats(n_a, n_ab, O.astype(np.int64))


def confusion(z, Z, n_blocks: int | None = None, n_ref_blocks: int | None = None) -> np.ndarray:
    """Confusion matrix ``R[k, a] = #{i: z_i = k, Z_i = a} / n``."""
    z = np.asarray(z, dtype=np.int64)
    Z = np.asarray(Z, dtype=np.int64)
    if z.shape != Z.shape:
        raise ValueError("labelings must have equal length")
    n = len(z)
    if n == 0:
        raise ValueError("empty labeling")
    K1 = int(z.max()) + 1 if n_blocks is None else n_blocks
    K2 = int(Z.max()) + 1 if n_ref_blocks is None else n_ref_blocks
    R = np.bincount(z * K2 + Z, minlength=K1 * K2).reshape(K1, K2)
    return R / n


def is_refinement(R) -> bool:
    """True when every row of ``R`` has at most one nonzero entry (z splits Z)."""
    return bool(np.all(np.count_nonzero(np.asarray(R), axis=1) <= 1))


def agreement(z, Z) -> float:
    """Fraction of matching labels after the best one-to-one block relabeling."""
    from scipy.optimize import linear_sum_assignment

    R = confusion(z, Z)
    rows, cols = linear_sum_assignment(-R)
    return float(R[rows, cols].sum())


def seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def spawn_seeds(seed, count: int) -> list[int]:
    """Derive ``count`` independent child seeds from one root seed.

    Children are ``SeedSequence(seed).spawn(count)`` reduced to 63-bit integers,
    so the same root always yields the same per-replication streams.
    """
    children = seed_sequence(seed).spawn(count)
    return [int(c.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]
