"""CLI commands, config precedence, exit codes, and artifact determinism."""

import json

import numpy as np
import pytest

from bsclust.cli import EXIT_NO_RESULT, EXIT_OK, EXIT_USAGE, main, scatter_svg
from bsclust.data import gen_synthetic, read_csv, write_csv


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def moons_csv(tmp_path):
    path = tmp_path / "moons.csv"
    write_csv(path, gen_synthetic("moons", 200, seed=0))
    return path


# ---------------------------------------------------------------------------
# gen


def test_gen_writes_rows(tmp_path):
    out = tmp_path / "moons.csv"
    assert run("gen", "--kind", "moons", "--n", 1500, "--seed", 7, "-o", out) == EXIT_OK
    ds = read_csv(out)
    assert ds.n == 1500
    assert ds.truth is not None


def test_gen_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("gen", "--kind", "circles", "--n", 300, "--seed", 3, "-o", a)
    run("gen", "--kind", "circles", "--n", 300, "--seed", 3, "-o", b)
    assert a.read_bytes() == b.read_bytes()


def test_gen_unknown_kind(tmp_path, capsys):
    code = run("gen", "--kind", "bogus", "-o", tmp_path / "x.csv")
    assert code == EXIT_USAGE
    assert "circles" in capsys.readouterr().err


def test_gen_seed_env_var(tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    monkeypatch.setenv("BSC_SEED", "11")
    run("gen", "--kind", "moons", "--n", 100, "-o", a)
    monkeypatch.delenv("BSC_SEED")
    run("gen", "--kind", "moons", "--n", 100, "--seed", 11, "-o", b)
    assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------------------
# cluster


def test_cluster_outputs(tmp_path, moons_csv):
    labels = tmp_path / "labels.csv"
    meta = tmp_path / "meta.json"
    svg = tmp_path / "plot.svg"
    code = run("cluster", "--in", moons_csv, "--m", 10, "--k-c", 2,
               "--out-labels", labels, "--out-meta", meta, "--out-svg", svg)
    assert code == EXIT_OK
    assert labels.read_text().startswith("index,label\n")
    doc = json.loads(meta.read_text())
    assert "rho_out" in doc and "scan_log" in doc
    assert 0.0 <= abs(doc["ari_vs_truth"]) <= 1.0
    assert svg.read_text().startswith("<svg")


def test_cluster_missing_input(tmp_path, capsys):
    code = run("cluster", "--in", tmp_path / "absent.csv",
               "--out-labels", tmp_path / "l.csv", "--out-meta", tmp_path / "m.json")
    assert code == EXIT_USAGE
    assert "absent.csv" in capsys.readouterr().err


def test_cluster_no_valid_level_exit_2(tmp_path, moons_csv, capsys):
    code = run("cluster", "--in", moons_csv, "--m", 5, "--k-c", 150,
               "--out-labels", tmp_path / "l.csv", "--out-meta", tmp_path / "m.json")
    assert code == EXIT_NO_RESULT
    assert "scan log" in capsys.readouterr().err


def test_cluster_config_precedence(tmp_path, moons_csv):
    # file overrides defaults; flags override the file
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"m": 5, "k_c": 2, "seed": 1}))
    l1, m1 = tmp_path / "l1.csv", tmp_path / "m1.json"
    l2, m2 = tmp_path / "l2.csv", tmp_path / "m2.json"
    run("cluster", "--in", moons_csv, "--config", config,
        "--out-labels", l1, "--out-meta", m1)
    run("cluster", "--in", moons_csv, "--m", 5, "--k-c", 2, "--seed", 2,
        "--config", config, "--out-labels", l2, "--out-meta", m2)
    assert json.loads(m1.read_text())["params"]["seed"] == 1
    assert json.loads(m2.read_text())["params"]["seed"] == 2


def test_cluster_rerun_byte_identical(tmp_path, moons_csv):
    outs = []
    for tag in ("x", "y"):
        labels = tmp_path / f"{tag}.csv"
        meta = tmp_path / f"{tag}.json"
        svg = tmp_path / f"{tag}.svg"
        run("cluster", "--in", moons_csv, "--m", 10, "--seed", 5,
            "--out-labels", labels, "--out-meta", meta, "--out-svg", svg)
        outs.append((labels.read_bytes(), meta.read_bytes(), svg.read_bytes()))
    assert outs[0] == outs[1]


# ---------------------------------------------------------------------------
# benchmark


def test_benchmark_csv_list(tmp_path, moons_csv):
    prefix = tmp_path / "report"
    code = run("benchmark", "--suite", "csv-list", "--datasets", moons_csv,
               "--methods", "kmeans", "--repeats", 2, "-o", prefix)
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "report.json").read_text())
    assert len(doc) == 1
    assert doc[0]["method"] == "kmeans"
    rows = (tmp_path / "report.csv").read_text().strip().split("\n")
    assert len(rows) == 10  # header + 9 grid cells


def test_benchmark_requires_methods(tmp_path, capsys):
    code = run("benchmark", "-o", tmp_path / "r")
    assert code == EXIT_USAGE
    assert "method" in capsys.readouterr().err


def test_benchmark_unknown_method(tmp_path, capsys):
    code = run("benchmark", "--methods", "agnes", "-o", tmp_path / "r")
    assert code == EXIT_USAGE


def test_benchmark_rerun_byte_identical(tmp_path, moons_csv):
    for tag in ("p", "q"):
        run("benchmark", "--suite", "csv-list", "--datasets", moons_csv,
            "--methods", "kmeans", "--repeats", 2, "--seed", 1,
            "-o", tmp_path / tag)
    assert (tmp_path / "p.json").read_bytes() == (tmp_path / "q.json").read_bytes()
    assert (tmp_path / "p.csv").read_bytes() == (tmp_path / "q.csv").read_bytes()


# ---------------------------------------------------------------------------
# validate


def validate_args(tmp_path, tag):
    return ("validate", "--n", 400, "--m", 3, "--p", 150, "--resolution", 64,
            "--rho-rel", 0.5, "--seed", 0, "-o", tmp_path / f"{tag}.json")


def test_validate_report(tmp_path):
    assert run(*validate_args(tmp_path, "v")) == EXIT_OK
    doc = json.loads((tmp_path / "v.json").read_text())
    assert doc["resolution"] == 64
    assert len(doc["reports"]) == 1
    report = doc["reports"][0]
    assert 0.0 <= report["total_violation"] <= 1.0


def test_validate_rejects_3d(tmp_path, capsys):
    spec = json.dumps({"means": [[0, 0, 0]], "stds": [0.2]})
    code = run("validate", "--density", spec, "-o", tmp_path / "x.json")
    assert code == EXIT_USAGE
    assert "2 dimensions" in capsys.readouterr().err


def test_validate_rerun_byte_identical(tmp_path):
    run(*validate_args(tmp_path, "a"))
    run(*validate_args(tmp_path, "b"))
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


# ---------------------------------------------------------------------------
# svg emitter


def test_scatter_svg_deterministic():
    pts = np.random.default_rng(0).uniform(size=(40, 2))
    labels = np.random.default_rng(1).integers(-1, 3, 40)
    assert scatter_svg(pts, labels) == scatter_svg(pts, labels)
    assert "#000000" in scatter_svg(pts, labels)  # background colour present
