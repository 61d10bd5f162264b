import csv
import json
import subprocess
import sys

import pytest

from blockselect.cli import main


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def edges(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--scenario", "a", "--n", "120", "--seed", "3", "--out", str(out)]) == 0
    return out / "edges.txt"


def test_generate_outputs(edges):
    d = edges.parent
    assert set(_files(d)) == {"edges.txt", "labels.csv", "manifest.json"}
    m = json.loads((d / "manifest.json").read_text())
    assert m["seed"] == 3 and m["command"] == "generate"
    rows = list(csv.reader((d / "labels.csv").read_text().splitlines()))
    assert rows[0] == ["node", "label"] and len(rows) == 121
    assert edges.read_text().startswith("# scenario a")


def test_generate_from_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": None, "pi": [0.5, 0.5], "H": [[0.3, 0.05], [0.05, 0.3]],
                               "n": 40, "seed": 1}))
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    # flag overrides the file
    assert main(["generate", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "o" / "edges.txt").read_bytes() != (tmp_path / "p" / "edges.txt").read_bytes()


def test_fit(edges, tmp_path):
    assert main(["fit", str(edges), "--blocks", "2", "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["n_blocks"] == 2 and len(fit["pi"]) == 2 and fit["backend"] == "variational"


def test_select(edges, tmp_path):
    argv = ["select", str(edges), "--K-max", "3", "--lambda-grid", "0.01,0.1,0.2", "--out", str(tmp_path)]
    assert main(argv) == 0
    sel = json.loads((tmp_path / "selection.json").read_text())
    assert sel["lambda_grid"] == [0.01, 0.1, 0.2] and 1 <= sel["K_hat"] <= 3


def test_gof_and_sweep(tmp_path):
    assert main(["gof", "--scenario", "a", "--n", "100", "--replications", "3", "--out", str(tmp_path / "g")]) == 0
    assert set(_files(tmp_path / "g")) == {"gof.csv", "gof.json", "manifest.json"}
    argv = ["sweep", "--cells", "sbm-k2-rho0.1", "--n", "100", "--replications", "2", "--K-max", "2",
            "--out", str(tmp_path / "s")]
    assert main(argv) == 0
    assert set(_files(tmp_path / "s")) == {"sweep.csv", "manifest.json"}


def test_exit_invalid(tmp_path, capsys):
    assert main(["select", str(tmp_path / "missing.txt"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("0 1\nfoo bar\n")
    assert main(["fit", str(bad), "--blocks", "2", "--out", str(tmp_path)]) == 2
    assert "line 2" in capsys.readouterr().err
    cfg = tmp_path / "c.json"
    cfg.write_text('{"scenario": "a", "bogus": 1}')
    assert main(["gof", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["fit", str(bad.parent / "missing"), "--blocks", "0", "--out", str(tmp_path)]) == 2


def test_exit_resource_limit(edges, tmp_path):
    assert main(["fit", str(edges), "--blocks", "2", "--backend", "exhaustive", "--out", str(tmp_path)]) == 3


def test_exit_assumption(tmp_path):
    # four equal blocks: every merge ties
    assert main(["gof", "--scenario", "sbm-k4-rho0.1", "--replications", "2", "--out", str(tmp_path)]) == 4


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "blockselect.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "generate" in r.stdout


def test_rerun_byte_identical(edges, tmp_path):
    runs = {
        "gen": ["generate", "--scenario", "b", "--n", "90", "--seed", "8"],
        "fit": ["fit", str(edges), "--blocks", "3", "--seed", "8"],
        "sel": ["select", str(edges), "--K-max", "3", "--seed", "8"],
        "ana": ["analyze", str(edges), "--K-max", "3", "--seed", "8"],
        "gof": ["gof", "--scenario", "a", "--n", "100", "--replications", "3", "--seed", "8"],
        "swp": ["sweep", "--cells", "er", "--n", "100", "--replications", "2", "--K-max", "2", "--seed", "8"],
    }
    for key, argv in runs.items():
        a, b = tmp_path / f"{key}1", tmp_path / f"{key}2"
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert _files(a) == _files(b), key
