"""Seeded simulation experiments (limit-law goodness of fit and success-rate sweeps)
plus end-to-end analysis of an observed network.

Every replication owns a seed substream spawned from the root seed, and results
are assembled by index, so outputs do not depend on the number of workers.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .asymptotics import REGIMES, LimitLaw, limit_law, log_lik_ratio
from .graph import BlockParams, Graph, sample_dcsbm, sample_sbm, seed_sequence
from .io import read_edge_list
from .selection import DEFAULT_LAMBDA_GRID, NORMALIZATIONS, SelectionResult, select_K

DEFAULT_REPLICATIONS = 20


@dataclass(frozen=True)
class Scenario:
    name: str
    theta: BlockParams
    model: str = "sbm"
    n: int = 500
    degree_prior: str = "uniform"


def _homogeneous(pi, rho):
    K = len(pi)
    return BlockParams.from_density(pi, np.ones((K, K)) + np.eye(K), rho)


_GRID_PI = {2: (0.4, 0.6), 3: (0.3, 0.3, 0.4), 4: (0.25, 0.25, 0.25, 0.25)}
SBM_RHOS = (0.02, 0.04, 0.06, 0.08, 0.1)
DCSBM_RHOS = (0.02, 0.04, 0.08)


def _build_registry() -> dict[str, Scenario]:
    reg = {
        "a": Scenario("a", BlockParams([0.4, 0.6], [[0.15, 0.05], [0.05, 0.01]])),
        "b": Scenario("b", BlockParams([0.4, 0.3, 0.3],
                                       [[0.2, 0.1, 0.1], [0.1, 0.2, 0.03], [0.1, 0.03, 0.1]])),
        "er": Scenario("er", BlockParams([1.0], [[0.05]]), n=400),
        # equal proportions and equal diagonal: zero limiting variance
        "flat": Scenario("flat", BlockParams([0.5, 0.5], [[0.1, 0.04], [0.04, 0.1]])),
    }
    for K, pi in _GRID_PI.items():
        for rho in SBM_RHOS:
            name = f"sbm-k{K}-rho{rho:g}"
            reg[name] = Scenario(name, _homogeneous(pi, rho), "sbm", 500)
        for rho in DCSBM_RHOS:
            name = f"dcsbm-k{K}-rho{rho:g}"
            reg[name] = Scenario(name, _homogeneous(pi, rho), "dcsbm", 800)
    return reg


SCENARIOS = _build_registry()


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None


@dataclass
class ExperimentConfig:
    scenario: str | None = "a"
    pi: list | None = None
    H: list | None = None
    rho: float | None = None
    model: str | None = None
    n: int | None = None
    replications: int = DEFAULT_REPLICATIONS
    regime: str = "sparse"
    backend: str | None = None
    seed: int = 0
    lambda_grid: list | None = None
    K_max: int = 10
    normalization: str = "shift"
    cells: list | None = None
    output: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.K_max < 1:
            raise ValueError("K_max must be >= 1")
        if self.scenario is None and not self.cells and (self.pi is None or self.H is None):
            raise ValueError("config needs a scenario name or cells or explicit pi and H")
        if self.scenario is not None:
            get_scenario(self.scenario)
        for c in self.cells or []:
            get_scenario(c)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ValueError(f"config {path}: {e}") from None
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; ``output`` and ``workers`` excluded."""
        d = self.to_dict()
        d.pop("output")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def resolve(self, name: str | None = None) -> Scenario:
        """Scenario for ``name`` (or the configured one) with config overrides applied."""
        name = self.scenario if name is None else name
        if name is None:
            base = Scenario("custom", BlockParams(self.pi, self.H, self.rho))
        else:
            base = get_scenario(name)
            if self.pi is not None or self.H is not None:
                base = Scenario(name, BlockParams(self.pi or base.theta.pi, self.H or base.theta.H,
                                                  self.rho), base.model, base.n)
        return Scenario(base.name, base.theta, self.model or base.model, self.n or base.n,
                        base.degree_prior)

    def backend_for(self, model: str) -> str:
        if self.backend is not None:
            return self.backend
        return "variational" if model == "sbm" else "plugin"

    @property
    def grid(self) -> np.ndarray:
        return DEFAULT_LAMBDA_GRID if self.lambda_grid is None else np.asarray(self.lambda_grid, float)


def manifest(config: ExperimentConfig, command: str) -> dict:
    return {
        "version": __version__,
        "command": command,
        "seed": config.seed,
        "config_hash": config.digest(),
        "config": config.to_dict(),
        "replications": config.replications,
        "reference_replications": 200 if command == "gof" else 50,
    }


def generate(sc: Scenario, seed) -> tuple[Graph, np.ndarray]:
    if sc.model == "dcsbm":
        s = sample_dcsbm(sc.theta, sc.n, seed=seed, degree_prior=sc.degree_prior)
        return s.graph, s.labels
    return sample_sbm(sc.theta, sc.n, seed)


def _pool_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# -- goodness of fit --------------------------------------------------------

@dataclass
class GofReport:
    scenario: str
    n: int
    backend: str
    law: LimitLaw
    L: np.ndarray                 # raw log-likelihood ratios
    statistic: np.ndarray         # theorem-scaled values
    mean: float
    sd: float
    ks: float

    @property
    def replications(self) -> int:
        return len(self.statistic)

    @property
    def standard_error(self) -> float:
        return self.sd / math.sqrt(self.replications)

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "backend": self.backend,
            "replications": self.replications,
            "regime": self.law.regime,
            "rho": self.law.rho,
            "merge": [self.law.spec.a, self.law.spec.b],
            "mu": self.law.mu,
            "sigma2": self.law.sigma2,
            "centering": self.law.centering,
            "finite_sample_sd": self.law.finite_sd,
            "empirical_mean": self.mean,
            "empirical_sd": self.sd,
            "ks": self.ks,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["replication", "L", "statistic"])
            for r, (L, s) in enumerate(zip(self.L, self.statistic)):
                w.writerow([r, repr(float(L)), repr(float(s))])


def _gof_rep(args):
    sc, backend, ss = args
    g_seed, fit_seed = ss.spawn(2)
    g, _ = generate(sc, g_seed)
    K = sc.theta.K
    return log_lik_ratio(g, K, K - 1, backend, seed=fit_seed, model=sc.model)


def run_gof(config: ExperimentConfig) -> GofReport:
    """Simulate ``L_{K,K-1}`` and compare with the predicted normal law."""
    sc = config.resolve()
    if sc.theta.K < 2:
        raise ValueError("goodness of fit needs a scenario with K >= 2")
    law = limit_law(sc.theta, sc.n, config.regime)
    backend = config.backend_for(sc.model)
    subs = seed_sequence(config.seed).spawn(config.replications)
    L = np.array(_pool_map(_gof_rep, [(sc, backend, s) for s in subs], config.workers))
    stat = law.scale(L)
    sd = float(stat.std(ddof=1)) if len(stat) > 1 else 0.0
    ks = (float(stats.kstest(stat, "norm", args=(law.centering, law.sd)).statistic)
          if law.sigma2 > 0 else float("nan"))
    return GofReport(sc.name, sc.n, backend, law, L, stat, float(stat.mean()), sd, ks)


# -- success-rate sweeps ----------------------------------------------------

@dataclass
class SweepCell:
    name: str
    model: str
    K: int
    rho: float
    n: int
    k_hat: list[int] = field(default_factory=list)

    @property
    def successes(self) -> int:
        return sum(k == self.K for k in self.k_hat)

    @property
    def rate(self) -> float:
        return self.successes / len(self.k_hat)


SWEEP_COLUMNS = ["cell", "model", "K", "rho", "n", "replications", "successes", "success_rate"]


@dataclass
class SweepReport:
    cells: list[SweepCell]

    def rate(self, name: str) -> float:
        return next(c.rate for c in self.cells if c.name == name)

    def rows(self) -> list[list]:
        return [[c.name, c.model, c.K, repr(c.rho), c.n, len(c.k_hat), c.successes, repr(c.rate)]
                for c in self.cells]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            w.writerows(self.rows())


def _sweep_rep(args):
    sc, config, backend, ss = args
    g_seed, fit_seed = ss.spawn(2)
    g, _ = generate(sc, g_seed)
    res = select_K(g, config.K_max, backend, sc.model, config.grid, fit_seed, config.normalization)
    return res.K_hat


def run_sweep(config: ExperimentConfig) -> SweepReport:
    """Success rate of :func:`select_K` per cell; cell ``i`` uses substream ``i`` of the seed."""
    names = config.cells or ([config.scenario] if config.scenario else [])
    if not names:
        raise ValueError("sweep grid is empty")
    cell_seeds = seed_sequence(config.seed).spawn(len(names))
    out = []
    for name, cs in zip(names, cell_seeds):
        sc = config.resolve(name)
        backend = config.backend_for(sc.model)
        subs = cs.spawn(config.replications)
        k_hat = _pool_map(_sweep_rep, [(sc, config, backend, s) for s in subs], config.workers)
        out.append(SweepCell(name, sc.model, sc.theta.K, sc.theta.scale, sc.n, list(k_hat)))
    return SweepReport(out)


# -- observed networks ------------------------------------------------------

def analyze_network(path, model: str = "sbm", K_max: int = 10, backend: str | None = None,
                    lambda_grid=None, seed=0, out_dir=None,
                    normalization: str = "shift") -> tuple[SelectionResult, np.ndarray]:
    """Select K for an edge-list file.

    Returns the selection and the original node ids. With ``out_dir`` it also
    writes ``result.json``, ``labels.csv`` and ``manifest.json``.
    """
    read = read_edge_list(path)
    backend = backend or ("variational" if model == "sbm" else "plugin")
    res = select_K(read.graph, K_max, backend, model, lambda_grid, seed, normalization)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        info = res.to_dict()
        info.update({"n_edges": read.graph.n_edges, "self_loops_dropped": read.self_loops})
        dump_json(info, out / "result.json")
        write_labels(out / "labels.csv", read.node_ids, res.labels)
        cfg = {"input": str(path), "model": model, "K_max": K_max, "backend": backend,
               "lambda_grid": None if lambda_grid is None else [float(x) for x in lambda_grid],
               "normalization": normalization, "seed": seed}
        dump_json({"version": __version__, "command": "analyze", "seed": seed,
                   "config_hash": hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest(),
                   "config": cfg}, out / "manifest.json")
    return res, read.node_ids


def write_labels(path, node_ids, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "label"])
        w.writerows(zip((int(i) for i in node_ids), (int(z) for z in labels)))


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)}")


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
