import csv
import json
import os
import subprocess
import sys
import types

import pytest

from minedispatch import cli
from minedispatch.config import homogeneous_config


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def body(path):
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture(scope="module")
def model(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert cli.main(["train", "--config", "desk", "--episodes", "50", "--seed", "4", "--out", str(out)]) == 0
    return out


def test_simulate_is_repeatable(tmp_path):
    for name in "ab":
        assert cli.main(["simulate", "--policy", "ssq", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    assert body(tmp_path / "a" / "metrics.csv") == body(tmp_path / "b" / "metrics.csv")
    assert len(rows(tmp_path / "a" / "metrics.csv")) == 1


def test_policies_run_independently(tmp_path):
    for policy in ("sq", "ssq"):
        assert cli.main(["simulate", "--policy", policy, "--seed", "7", "--out", str(tmp_path / policy)]) == 0
    assert rows(tmp_path / "sq" / "metrics.csv")[0]["policy"] == "sq"
    assert rows(tmp_path / "ssq" / "metrics.csv")[0]["policy"] == "ssq"


def test_simulate_options(tmp_path):
    out = tmp_path / "o"
    argv = ["simulate", "--config", "full", "--seed", "1..2", "--episodes", "2", "--trucks", "45",
            "--shift-minutes", "120", "--trace", "--out", str(out)]
    assert cli.main(argv) == 0
    table = rows(out / "metrics.csv")
    assert len(table) == 4 and {r["trucks"] for r in table} == {"45"}
    assert {float(r["elapsed_min"]) for r in table} == {120.0}
    traces = [p for p in os.listdir(out) if p.startswith("trace_")]
    assert len(traces) == 4


@pytest.mark.parametrize("argv", [
    ["simulate", "--policy", "fastest"],
    ["simulate", "--config", "/no/such/file.ini"],
    ["sweep", "--policy", "sq,nope"],
])
def test_configuration_errors_exit_2(argv, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--trucks", "9..11"])
    assert exc.value.code == 2


def test_runtime_failure_exits_3(tmp_path):
    bad = tmp_path / "bad.emdq"
    bad.write_bytes(b"EMDQ garbage")
    assert cli.main(["evaluate", "--model", str(bad), "--out", str(tmp_path / "e")]) == 3


def test_default_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "root"))
    assert cli.main(["simulate", "--seed", "1"]) == 0
    assert (tmp_path / "root" / "simulate" / "metrics.csv").exists()


def test_train_outputs(model):
    curve = rows(model / "curve.csv")
    assert len(curve) == 50 and [int(r["episode"]) for r in curve] == list(range(50))
    for name in ("model.emdq", "manifest.json", "config.ini", "train.ini", "checkpoint/state.npz"):
        assert (model / name).exists()


def test_no_tailoring_trains_edqn(tmp_path):
    out = tmp_path / "edqn"
    assert cli.main(["train", "--episodes", "3", "--no-tailoring", "--out", str(out)]) == 0
    assert "tailoring = False" in (out / "train.ini").read_text()
    assert all(r["corrupted_dropped"] == "0" for r in rows(out / "curve.csv"))


def test_resume_continues_numbering(tmp_path):
    first = tmp_path / "first"
    assert cli.main(["train", "--episodes", "3", "--out", str(first)]) == 0
    second = tmp_path / "second"
    assert cli.main(["train", "--episodes", "5", "--resume", str(first / "checkpoint"), "--out", str(second)]) == 0
    assert [int(r["episode"]) for r in rows(second / "curve.csv")] == list(range(5))
    whole = tmp_path / "whole"
    assert cli.main(["train", "--episodes", "5", "--out", str(whole)]) == 0
    assert body(whole / "curve.csv") == body(second / "curve.csv")


def test_evaluate_medians_per_truck_count(model, tmp_path):
    out = tmp_path / "eval"
    argv = ["evaluate", "--model", str(model / "model.emdq"), "--trucks", "9..11", "--seed", "1..5",
            "--out", str(out)]
    assert cli.main(argv) == 0
    summary = rows(out / "summary.csv")
    assert [r["trucks"] for r in summary] == ["9", "10", "11"]
    assert all(r["runs"] == "5" for r in summary)
    assert len(rows(out / "metrics.csv")) == 15


def test_evaluate_rejects_mismatched_sites(model, tmp_path):
    cfg = homogeneous_config(n_shovels=4, n_dumps=3, n_trucks=10)
    path = tmp_path / "n4.ini"
    path.write_text(cfg.to_ini())
    argv = ["evaluate", "--model", str(model / "model.emdq"), "--config", str(path), "--out", str(tmp_path / "e")]
    assert cli.main(argv) == 2


def test_sweep_factorial_and_identity_improvement(tmp_path):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--policy", "ssq,ssq", "--seed", "1..3", "--out", str(out)]) == 0
    table = rows(out / "sweep.csv")
    assert len(table) == 6
    assert {r["improvement_vs_ssq"] for r in table} == {"0.0"}
    assert {r["extra_cycles_vs_ssq"] for r in table} == {"0.0"}
    assert len(rows(out / "summary.csv")) == 1


def test_sweep_rows_and_summary(tmp_path):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--policy", "sq,ssq", "--seed", "1,2,3", "--jobs", "2", "--out", str(out)]) == 0
    assert len(rows(out / "sweep.csv")) == 6
    assert [r["policy"] for r in rows(out / "summary.csv")] == ["sq", "ssq"]
    assert json.loads((out / "errors.json").read_text()) == []


def test_extra_cycles_counts_largest_truck_loads():
    cell = ("desk", "sq", 1, None, None)
    base = types.SimpleNamespace(production_tons=1000.0)
    better = types.SimpleNamespace(production_tons=1800.0)
    rows = [(cell, base), (("desk", "dqn:m", 1, None, None), better)]
    assert cli.extra_cycles_column(rows, "sq", {"desk": 400.0}) == [0.0, 2.0]


def failing_cell(cell):
    if cell[1] == "ssq" and cell[2] == 2:
        return None, "RuntimeError: injected"
    return cli._sweep_cell(cell)


def test_sweep_records_failed_cell_and_continues():
    ok, errors = cli.run_sweep(["desk"], ["sq", "ssq"], [1, 2, 3], cell_fn=failing_cell)
    assert len(ok) == 5
    assert errors == [{"config": "desk", "policy": "ssq", "seed": 2, "trucks": None, "error": "RuntimeError: injected"}]


@pytest.mark.parametrize("argv,outputs", [
    (["simulate", "--policy", "sq", "--seed", "3,4", "--trucks", "8"], ["metrics.csv"]),
    (["sweep", "--policy", "random,ssq", "--seed", "1..2", "--trucks", "9..10"], ["sweep.csv", "summary.csv"]),
    (["train", "--episodes", "4", "--seed", "9"], ["curve.csv"]),
])
def test_rerun_from_manifest_is_byte_identical(argv, outputs, tmp_path):
    first, again = tmp_path / "first", tmp_path / "again"
    assert cli.main(argv + ["--out", str(first)]) == 0
    assert cli.main(["rerun", str(first), "--out", str(again)]) == 0
    for name in outputs:
        assert body(first / name) == body(again / name)
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["command"] == argv[0] and manifest["kernel_backend"] in ("cython", "python")


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "minedispatch.cli", "simulate", "--seed", "2", "--out",
                          str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "seed 2" in out.stdout
