import csv
import itertools
import json
import time

import numpy as np
import pytest

from blockselect import BlockParams, sample_sbm
from blockselect.harness import (
    SCENARIOS,
    SWEEP_COLUMNS,
    ExperimentConfig,
    analyze_network,
    generate,
    get_scenario,
    manifest,
    run_gof,
    run_sweep,
)
from blockselect.io import write_edge_list


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.scenario == "a" and cfg.replications == 20 and cfg.seed == 0

    @pytest.mark.parametrize("bad", [
        {"replications": 0}, {"regime": "medium"}, {"normalization": "x"}, {"K_max": 0},
        {"scenario": "nope"}, {"scenario": None}, {"cells": ["a", "zzz"]},
    ])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            ExperimentConfig.from_dict({"scenario": "a", "replicas": 3})

    def test_cells_alone_valid(self):
        cfg = ExperimentConfig(scenario=None, cells=["sbm-k2-rho0.1"])
        assert cfg.resolve("sbm-k2-rho0.1").theta.K == 2

    def test_file_round_trip(self, tmp_path):
        cfg = ExperimentConfig(scenario="b", n=300, seed=9, lambda_grid=[0.01, 0.1])
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg.to_dict()))
        back = ExperimentConfig.from_file(p)
        assert back == cfg and back.digest() == cfg.digest()

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ValueError):
            ExperimentConfig.from_file(p)
        p.write_text("[1, 2]")
        with pytest.raises(ValueError):
            ExperimentConfig.from_file(p)

    def test_digest_ignores_output_and_workers(self):
        a = ExperimentConfig(seed=3)
        assert a.digest() == ExperimentConfig(seed=3, output="x", workers=4).digest()
        assert a.digest() != ExperimentConfig(seed=4).digest()

    def test_explicit_theta(self):
        cfg = ExperimentConfig(scenario=None, pi=[0.5, 0.5], H=[[0.2, 0.05], [0.05, 0.1]], n=100)
        sc = cfg.resolve()
        assert sc.n == 100 and sc.theta.K == 2 and sc.model == "sbm"

    def test_overrides(self):
        sc = ExperimentConfig(scenario="a", n=123, model="dcsbm").resolve()
        assert sc.n == 123 and sc.model == "dcsbm"
        assert ExperimentConfig().backend_for("dcsbm") == "plugin"
        assert ExperimentConfig(backend="plugin").backend_for("sbm") == "plugin"

    def test_manifest(self):
        cfg = ExperimentConfig(seed=5)
        m = manifest(cfg, "gof")
        assert m["seed"] == 5 and m["config_hash"] == cfg.digest()
        assert m["replications"] == 20 and m["reference_replications"] == 200
        assert "version" in m


class TestRegistry:
    def test_names(self):
        for name in ("a", "b", "er", "flat", "sbm-k2-rho0.1", "sbm-k4-rho0.02", "dcsbm-k3-rho0.08"):
            assert name in SCENARIOS
        with pytest.raises(ValueError):
            get_scenario("missing")

    def test_grid_cells(self):
        sc = get_scenario("dcsbm-k3-rho0.02")
        assert sc.model == "dcsbm" and sc.n == 800 and sc.theta.K == 3
        assert sc.theta.scale == pytest.approx(0.02)
        # diagonal of the shape matrix is 2
        np.testing.assert_allclose(sc.theta.H.max(), 0.04)

    def test_generate(self):
        g, z = generate(get_scenario("dcsbm-k2-rho0.08"), np.random.SeedSequence(1))
        assert g.n == 800 and set(np.unique(z)) == {0, 1}


class TestGof:
    def test_small_run(self):
        rep = run_gof(ExperimentConfig(scenario="a", n=200, replications=6, seed=1))
        assert rep.replications == 6 and len(rep.L) == 6
        assert np.all(rep.L < 0)
        np.testing.assert_allclose(rep.statistic, rep.law.scale(rep.L))
        s = rep.summary()
        assert s["merge"] == [0, 1] and s["regime"] == "sparse"
        assert 0 <= s["ks"] <= 1

    def test_csv_deterministic_and_worker_independent(self, tmp_path):
        cfg = ExperimentConfig(scenario="a", n=150, replications=4, seed=3)
        run_gof(cfg).write_csv(tmp_path / "one.csv")
        run_gof(cfg).write_csv(tmp_path / "two.csv")
        cfg2 = ExperimentConfig(scenario="a", n=150, replications=4, seed=3, workers=2)
        run_gof(cfg2).write_csv(tmp_path / "pool.csv")
        one = (tmp_path / "one.csv").read_bytes()
        assert one == (tmp_path / "two.csv").read_bytes() == (tmp_path / "pool.csv").read_bytes()
        rows = list(csv.reader(one.decode().splitlines()))
        assert rows[0] == ["replication", "L", "statistic"] and len(rows) == 5

    def test_needs_two_blocks(self):
        with pytest.raises(ValueError):
            run_gof(ExperimentConfig(scenario="er", replications=2))

    def test_flat_scenario_sd_shrinks(self):
        # both sizes are above the size at which the planted split is recovered
        sds = []
        for n in (400, 1600):
            rep = run_gof(ExperimentConfig(scenario="flat", n=n, replications=20, seed=4))
            assert rep.law.sigma2 == 0 and np.isnan(rep.ks)
            sds.append(rep.sd)
        assert sds[1] < sds[0]


class TestSweep:
    def test_small_sweep(self, tmp_path):
        cfg = ExperimentConfig(scenario=None, cells=["sbm-k2-rho0.1", "er"], n=150, replications=2,
                               K_max=3, seed=0)
        rep = run_sweep(cfg)
        assert [c.name for c in rep.cells] == ["sbm-k2-rho0.1", "er"]
        for c in rep.cells:
            assert len(c.k_hat) == 2 and 0 <= c.rate <= 1
            assert c.rate == c.successes / 2
        rep.write_csv(tmp_path / "s.csv")
        rows = list(csv.reader((tmp_path / "s.csv").read_text().splitlines()))
        assert rows[0] == SWEEP_COLUMNS and len(rows) == 3
        again = run_sweep(cfg)
        assert again.rows() == rep.rows()

    @pytest.mark.slow
    def test_sbm_densest_cell(self):
        rep = run_sweep(ExperimentConfig(scenario="sbm-k2-rho0.1", replications=20, seed=0))
        assert rep.rate("sbm-k2-rho0.1") >= 0.9


class TestAnalyze:
    def test_two_cliques(self, tmp_path):
        lines = [f"{i} {j}" for i, j in itertools.combinations(range(20), 2)]
        lines += [f"{20 + i} {20 + j}" for i, j in itertools.combinations(range(20), 2)]
        path = tmp_path / "cliques.txt"
        path.write_text("\n".join(lines) + "\n")
        res, ids = analyze_network(path, K_max=5, seed=0, out_dir=tmp_path / "out")
        assert res.K_hat == 2
        z = res.labels
        assert len(set(z[:20])) == 1 and len(set(z[20:])) == 1 and z[0] != z[20]
        for f in ("result.json", "labels.csv", "manifest.json"):
            assert (tmp_path / "out" / f).exists()
        info = json.loads((tmp_path / "out" / "result.json").read_text())
        assert info["K_hat"] == 2 and info["n_edges"] == 380

    def test_erdos_renyi_majority(self, tmp_path):
        er = BlockParams([1.0], [[0.05]])
        hits = 0
        for s in range(5):
            g, _ = sample_sbm(er, 300, s)
            write_edge_list(g, tmp_path / f"er{s}.txt")
            res, _ = analyze_network(tmp_path / f"er{s}.txt", K_max=6, seed=s)
            hits += res.K_hat == 1
        assert hits >= 3

    def test_book_sized_runtime(self, tmp_path):
        th = BlockParams([0.4, 0.4, 0.2], [[0.16, 0.01, 0.04], [0.01, 0.16, 0.04], [0.04, 0.04, 0.1]])
        g, _ = sample_sbm(th, 105, 0)
        write_edge_list(g, tmp_path / "books.txt")
        t = time.perf_counter()
        res, _ = analyze_network(tmp_path / "books.txt", K_max=15, seed=0)
        assert time.perf_counter() - t < 60
        assert len(res.K_range) == 15
