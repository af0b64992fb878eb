import csv
import json

import numpy as np
import pytest

from csaqs.cli import main
from csaqs.config import RunConfig
from csaqs.io import load_solution, read_record_csv, read_scan_csv


def _optimize(out, *extra):
    return main(["optimize", "--model", "qkt", "--p", "1", "--kappa", "7", "--method", "evo", "--nphi", "6", "--out", str(out), "--workers", "1", *extra])


def test_optimize_report_lists_every_seed(tmp_path):
    code = _optimize(tmp_path / "o", "--seeds", "100", "--max-iters", "3", "--threshold", "0.9999")
    assert code == 1  # threshold unmet, artifacts still written
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["n_seeds"] == 100 and len(report["fidelities"]) == 100
    assert report["best_fidelity"] == max(report["fidelities"])
    assert len(list((tmp_path / "o" / "solutions").glob("seed_*.json"))) == 100
    assert (tmp_path / "o" / "solutions" / "best_waveform.txt").exists()
    cfg = RunConfig.load(tmp_path / "o" / "config.json")
    assert cfg.blocks["optimizer"]["n_seeds"] == 100


def test_optimize_success_exit_code(tmp_path):
    assert _optimize(tmp_path, "--seeds", "2", "--max-iters", "20", "--threshold", "0.1") == 0


def test_optimize_rerun_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert _optimize(tmp_path / name, "--seeds", "3", "--max-iters", "10", "--master-seed", "5") == 1
    for rel in ("report.json", "solutions/best.json", "solutions/seed_0002.json", "solutions/best_waveform.txt"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    _optimize(tmp_path / "c", "--seeds", "3", "--max-iters", "10", "--master-seed", "6")
    assert (tmp_path / "c" / "report.json").read_bytes() != (tmp_path / "a" / "report.json").read_bytes()


def test_optimize_invalid_config(tmp_path, capsys):
    assert main(["optimize", "--model", "ti", "--h", "1", "--out", str(tmp_path)]) == 2
    assert "--s" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"command": "scan"}))
    assert main(["optimize", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text("{not json")
    assert main(["optimize", "--config", str(bad)]) == 2
    assert main(["optimize", "--seeds", "0", "--out", str(tmp_path)]) == 2


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    RunConfig("optimize", 3, {"optimizer": {"n_seeds": 2, "max_iters": 4, "n_phi": 5}, "output": {"dir": str(tmp_path / "x")}}).save(cfg)
    main(["optimize", "--config", str(cfg), "--nphi", "4", "--workers", "1"])
    eff = RunConfig.load(tmp_path / "x" / "config.json")
    assert eff.master_seed == 3
    assert eff.blocks["optimizer"]["n_phi"] == 4 and eff.blocks["optimizer"]["n_seeds"] == 2
    assert eff.blocks["model"]["family"] == "qkt"
    # the echoed effective config reproduces the run
    main(["optimize", "--config", str(tmp_path / "x" / "config.json"), "--out", str(tmp_path / "y"), "--workers", "1"])
    assert (tmp_path / "x" / "report.json").read_bytes() == (tmp_path / "y" / "report.json").read_bytes()


def test_simulate_oracle(tmp_path):
    out = tmp_path / "sim"
    code = main(["simulate", "--mode", "oracle", "--model", "ti", "--h", "0.8", "--s", "1", "--dt", "0.4", "--K", "50", "--out", str(out)])
    assert code == 0
    cols = read_record_csv(out / "record.csv")
    assert np.abs(cols["F_AQS"] - 1).max() < 1e-10
    assert len(cols["k"]) == 51
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config"]["command"] == "simulate"


@pytest.fixture(scope="module")
def solution_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("opt")
    main(["optimize", "--model", "ti", "--h", "0.8", "--s", "1", "--dt", "0.4", "--nphi", "8", "--seeds", "2", "--max-iters", "30", "--out", str(out), "--workers", "1"])
    return out / "solutions"


def test_simulate_observable(tmp_path, solution_file):
    out = tmp_path / "sim"
    code = main(["simulate", "--mode", "observable", "--solution", str(solution_file / "best.json"), "--observable", "sigma2z", "--K", "10", "--ensemble", "5", "--out", str(out)])
    assert code == 0
    with open(out / "record.csv") as fh:
        head = next(csv.reader(fh))
    assert head == ["k", "F_AQS", "F_measured", "sigma2z"]
    cols = read_record_csv(out / "record.csv")
    assert np.all(np.abs(cols["sigma2z"]) <= 1 + 1e-12)


def test_simulate_unknown_observable(tmp_path, solution_file, capsys):
    code = main(["simulate", "--solution", str(solution_file / "best.json"), "--observable", "Jz", "--K", "3", "--out", str(tmp_path)])
    assert code == 2
    assert "sigma2z" in capsys.readouterr().err


def test_simulate_randomized_needs_two(tmp_path, solution_file, capsys):
    code = main(["simulate", "--mode", "randomized", "--solution", str(solution_file / "best.json"), "--K", "3", "--out", str(tmp_path)])
    assert code == 2
    assert "at least two" in capsys.readouterr().err
    code = main(["simulate", "--mode", "randomized", "--solution", str(solution_file / "seed_0000.json"), "--solution", str(solution_file / "seed_0001.json"), "--K", "3", "--ensemble", "3", "--out", str(tmp_path / "r")])
    assert code == 0
    meta = json.loads((tmp_path / "r" / "metadata.json").read_text())
    assert len(meta["sequence"]) == 3


def test_simulate_rejects_model_mismatch(tmp_path, solution_file, capsys):
    code = main(["simulate", "--solution", str(solution_file / "best.json"), "--model", "ti", "--h", "0.9", "--s", "1", "--dt", "0.4", "--K", "3", "--out", str(tmp_path)])
    assert code == 2
    assert "does not match" in capsys.readouterr().err


def test_simulate_initial_state_parsing(tmp_path):
    base = ["simulate", "--mode", "oracle", "--model", "qkt", "--p", "1", "--kappa", "7", "--K", "2", "--out", str(tmp_path)]
    assert main(base + ["--initial", "coherent:1.0,0.5"]) == 0
    assert main(base + ["--initial", "basis:3"]) == 0
    assert main(base + ["--initial", "basis:99"]) == 2
    assert main(base + ["--initial", "gauss:1"]) == 2


def test_verify(tmp_path, solution_file, capsys):
    assert main(["verify", str(solution_file / "best.json")]) == 0
    assert capsys.readouterr().out.startswith("OK")
    d = json.loads((solution_file / "best.json").read_text())
    d["achieved_fidelity"] += 1e-6
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert main(["verify", str(bad)]) == 1
    assert "FAILED" in capsys.readouterr().out
    assert main(["verify", str(tmp_path / "missing.json")]) == 2
    load_solution(solution_file / "best.json")


def test_scan_single_cell_and_resume(tmp_path, capsys):
    args = ["scan", "--family", "lmg", "--values", "0.4", "--dts", "0.8", "--nphi", "4", "--seeds", "2", "--max-iters", "10", "--out", str(tmp_path), "--workers", "1"]
    assert main(args) == 0
    rows = read_scan_csv(tmp_path / "scan.csv")
    assert len(rows) == 1 and rows[0]["distance_norm"] == 1.0 and rows[0]["n_seeds"] == 2
    assert "[1/1]" in capsys.readouterr().err
    first = (tmp_path / "scan.csv").read_bytes()
    stamp = [p.stat().st_mtime_ns for p in (tmp_path / "checkpoints").iterdir()]
    assert main(args) == 0
    assert (tmp_path / "scan.csv").read_bytes() == first
    assert [p.stat().st_mtime_ns for p in (tmp_path / "checkpoints").iterdir()] == stamp
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert "desk-scale" in meta["note"]


def test_scan_rejects_empty_grid(tmp_path):
    assert main(["scan", "--values", "", "--out", str(tmp_path)]) == 2


def test_phase_portrait(tmp_path):
    assert main(["phase-portrait", "--p", "1", "--kappa", "7", "--points", "50", "--steps", "500", "--out", str(tmp_path)]) == 0
    data = np.loadtxt(tmp_path / "trajectories.csv", delimiter=",", skiprows=1)
    assert data.shape == (50 * 501, 5)
    assert np.abs(np.linalg.norm(data[:, :3], axis=1) - 1).max() < 1e-12
    assert sorted(set(data[:, 4].astype(int))) == list(range(50))
    assert main(["phase-portrait", "--points", "0", "--out", str(tmp_path)]) == 2
