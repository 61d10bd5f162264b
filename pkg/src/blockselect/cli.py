"""Command-line interface: generate, fit, select, gof, sweep, analyze.

Exit codes: 0 success, 2 invalid input, 3 resource limit, 4 assumption violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .asymptotics import AssumptionViolation
from .harness import (
    SCENARIOS,
    ExperimentConfig,
    analyze_network,
    dump_json,
    generate,
    manifest,
    run_gof,
    run_sweep,
    write_labels,
)
from .io import read_edge_list, write_edge_list
from .likelihood import ResourceLimitError
from .selection import fit_backend, select_K

EXIT_OK, EXIT_INVALID, EXIT_RESOURCE, EXIT_ASSUMPTION = 0, 2, 3, 4

# flags that override config-file keys
_OVERRIDES = ("scenario", "n", "replications", "regime", "backend", "model", "seed", "K_max",
              "normalization", "workers")


def _config(args) -> ExperimentConfig:
    d = {}
    if getattr(args, "config", None):
        d = ExperimentConfig.from_file(args.config).to_dict()
    for key in _OVERRIDES:
        v = getattr(args, key, None)
        if v is not None:
            d[key] = v
    if getattr(args, "cells", None):
        d["cells"] = args.cells
    return ExperimentConfig.from_dict(d)


def _add_common(p, *, config=True):
    if config:
        p.add_argument("--config", help="JSON experiment config; flags override its keys")
    p.add_argument("--seed", type=int, help="root seed for all randomness (default 0)")


def _lambda_grid(text):
    if text is None:
        return None
    return [float(x) for x in text.split(",")]


def cmd_generate(args) -> int:
    cfg = _config(args)
    sc = cfg.resolve()
    g, z = generate(sc, np.random.SeedSequence(cfg.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(g, out / "edges.txt", header=f"scenario {sc.name} n={sc.n} seed={cfg.seed}")
    write_labels(out / "labels.csv", np.arange(g.n), z)
    dump_json(manifest(cfg, "generate"), out / "manifest.json")
    return EXIT_OK


def cmd_fit(args) -> int:
    read = read_edge_list(args.edges)
    seed = 0 if args.seed is None else args.seed
    fit = fit_backend(read.graph, args.blocks, args.backend or "variational", args.model, seed)
    result = {
        "n_blocks": fit.n_blocks,
        "backend": fit.backend,
        "objective": fit.objective,
        "pi": fit.theta.pi,
        "H": fit.theta.H,
        "seed": seed,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(result, out / "fit.json")
    write_labels(out / "labels.csv", read.node_ids, fit.labels)
    return EXIT_OK


def cmd_select(args) -> int:
    read = read_edge_list(args.edges)
    seed = 0 if args.seed is None else args.seed
    backend = args.backend or ("variational" if args.model == "sbm" else "plugin")
    res = select_K(read.graph, args.K_max, backend, args.model, _lambda_grid(args.lambda_grid), seed,
                   args.normalization)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(res.to_dict(), out / "selection.json")
    write_labels(out / "labels.csv", read.node_ids, res.labels)
    return EXIT_OK


def cmd_gof(args) -> int:
    cfg = _config(args)
    rep = run_gof(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep.write_csv(out / "gof.csv")
    dump_json(rep.summary(), out / "gof.json")
    dump_json(manifest(cfg, "gof"), out / "manifest.json")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rep = run_sweep(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep.write_csv(out / "sweep.csv")
    dump_json(manifest(cfg, "sweep"), out / "manifest.json")
    return EXIT_OK


def cmd_analyze(args) -> int:
    seed = 0 if args.seed is None else args.seed
    analyze_network(args.edges, args.model, args.K_max, args.backend, _lambda_grid(args.lambda_grid),
                    seed, args.out, args.normalization)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blockselect", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    scen_help = "built-in scenario: " + ", ".join(sorted(SCENARIOS))

    g = sub.add_parser("generate", help="sample a graph from a scenario")
    _add_common(g)
    g.add_argument("--scenario", help=scen_help)
    g.add_argument("--n", type=int)
    g.add_argument("--model", choices=["sbm", "dcsbm"])
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    for name, func, hlp in (("fit", cmd_fit, "fit a fixed number of blocks"),
                            ("select", cmd_select, "select the number of blocks"),
                            ("analyze", cmd_analyze, "select K and export labels and manifest")):
        s = sub.add_parser(name, help=hlp)
        _add_common(s, config=False)
        s.add_argument("edges", help="edge-list file")
        s.add_argument("--model", choices=["sbm", "dcsbm"], default="sbm")
        s.add_argument("--backend", choices=["variational", "plugin", "exhaustive"])
        s.add_argument("--out", required=True)
        if name == "fit":
            s.add_argument("--blocks", type=int, required=True)
        else:
            s.add_argument("--K-max", dest="K_max", type=int, default=10)
            s.add_argument("--lambda-grid", help="comma-separated lambda values")
            s.add_argument("--normalization", choices=["shift", "ratio"], default="shift")
        s.set_defaults(func=func)

    for name, func, hlp in (("gof", cmd_gof, "simulate the underfitting statistic"),
                            ("sweep", cmd_sweep, "success rates of K selection")):
        s = sub.add_parser(name, help=hlp)
        _add_common(s)
        s.add_argument("--scenario", help=scen_help)
        s.add_argument("--n", type=int)
        s.add_argument("--replications", type=int)
        s.add_argument("--backend", choices=["variational", "plugin", "exhaustive"])
        s.add_argument("--workers", type=int)
        s.add_argument("--out", required=True)
        if name == "gof":
            s.add_argument("--regime", choices=["dense", "sparse"])
        else:
            s.add_argument("--cells", nargs="+", help="scenario names forming the grid")
            s.add_argument("--K-max", dest="K_max", type=int)
            s.add_argument("--normalization", choices=["shift", "ratio"])
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AssumptionViolation as e:
        print(f"assumption violation: {e}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except ResourceLimitError as e:
        print(f"resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
