import csv
import json
import subprocess
import sys

import pytest

from pclmp import cli
from pclmp.config import RunConfig
from pclmp.data import load_csv, load_xpcl


@pytest.fixture
def cfg_file(small_cfg, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(small_cfg.replace(epochs=2).to_json())
    return path


def test_generate_counts_and_sidecar(tmp_path):
    out = tmp_path / "data.xpcl"
    assert cli.main(["generate", "--identities", "50", "--seed", "7", "-o", str(out)]) == 0
    fs = load_xpcl(out)
    assert len(fs) == 50 * 2 * 16
    side = load_csv(tmp_path / "data.csv")
    assert len(side) == len(fs)


def test_generate_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["generate", "--identities", "5", "--seed", "3", "-o", str(tmp_path / f"{name}.xpcl")]) == 0
    assert (tmp_path / "a.xpcl").read_bytes() == (tmp_path / "b.xpcl").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_generate_without_output_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["generate", "--identities", "5"])
    assert exc.value.code == 2


def test_train_writes_fixed_files(cfg_file, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg_file), "--out", str(out)]) == 0
    for name in ("config.resolved.json", "metrics.csv", "report.json", "embeddings.xpcl", "matches.csv",
                 "checkpoint.xpck", "run.log"):
        assert (out / name).exists(), name
    rows = list(csv.DictReader(open(out / "metrics.csv")))
    assert [r["epoch"] for r in rows] == ["0", "1", "2"]


def test_train_phase_switch_visible_in_metrics(small_cfg, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(small_cfg.replace(epochs=4, e_cpcl=2).to_json())
    assert cli.main(["train", "--config", str(path), "--out", str(tmp_path / "r")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "r" / "metrics.csv")))
    assert rows[2]["loss_hpcl"] == "" and rows[2]["loss_cpcl"] != ""
    assert rows[3]["loss_hpcl"] != "" and rows[3]["loss_cpcl"] == ""


def test_train_ablate_baseline(cfg_file, tmp_path):
    out = tmp_path / "b"
    assert cli.main(["train", "--config", str(cfg_file), "--ablate", "baseline", "--out", str(out)]) == 0
    cfg = RunConfig.load(out / "config.resolved.json")
    assert (cfg.enable_hpcl, cfg.enable_dpcl, cfg.enable_pcl_schedule) == (False, False, False)


def test_invalid_lambda_exit_code(small_cfg, tmp_path, capsys):
    raw = small_cfg.to_dict()
    raw["hyper"]["lam"] = 1.5
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(raw))
    assert cli.main(["train", "--config", str(path), "--out", str(tmp_path / "x")]) == 2
    assert "lam" in capsys.readouterr().err


def test_missing_data_file_is_runtime_error(tmp_path):
    code = cli.main(["train", "--data", str(tmp_path / "missing.xpcl"), "--epochs", "0", "--out", str(tmp_path / "o")])
    assert code == 3


def test_train_on_generated_file_and_eval(small_cfg, tmp_path):
    data = tmp_path / "d.xpcl"
    assert cli.main(["generate", "--identities", "20", "--dim", "16", "--samples", "8", "--shift", "0.3",
                     "--seed", "3", "-o", str(data)]) == 0
    path = tmp_path / "run.json"
    path.write_text(small_cfg.replace(epochs=1).to_json())
    run = tmp_path / "run"
    assert cli.main(["train", "--config", str(path), "--data", str(data), "--out", str(run)]) == 0
    ev = tmp_path / "ev"
    assert cli.main(["eval", "--config", str(path), "--data", str(data), "--checkpoint",
                     str(run / "checkpoint.xpck"), "--out", str(ev)]) == 0
    trained = json.loads((run / "report.json").read_text())["final"]
    evaluated = json.loads((ev / "report.json").read_text())["final"]
    assert evaluated == {**trained, "loss_cpcl": None, "loss_hpcl": None, "loss_dpcl": None, "loss_total": None}


def test_resume_flag(cfg_file, tmp_path):
    first = tmp_path / "first"
    assert cli.main(["train", "--config", str(cfg_file), "--epochs", "1", "--out", str(first)]) == 0
    second = tmp_path / "second"
    assert cli.main(["train", "--config", str(cfg_file), "--resume", str(first / "checkpoint.xpck"),
                     "--out", str(second)]) == 0
    rows = list(csv.DictReader(open(second / "metrics.csv")))
    assert [r["epoch"] for r in rows] == ["1", "2"]


@pytest.mark.parametrize("param,values,n", [("lambda", "0,0.5,1", 3), ("k", "1,2", 2)])
def test_sweep_one_row_per_value(cfg_file, tmp_path, param, values, n):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--param", param, "--values", values, "--config", str(cfg_file),
                     "--epochs", "1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert len(rows) == n
    assert [r[param] for r in rows] == [str(type(v)(v)) for v in cli.parse_values(param, values)]
    assert all(r["epoch"] == "1" for r in rows)


def test_sweep_parallel_matches_sequential(cfg_file, tmp_path):
    args = ["sweep", "--param", "lambda", "--values", "0.25,0.75", "--config", str(cfg_file), "--epochs", "1"]
    assert cli.main(args + ["--out", str(tmp_path / "s")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "p"), "--parallel", "2"]) == 0
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()


@pytest.mark.parametrize("values", ["", " , "])
def test_sweep_empty_values_is_usage_error(cfg_file, tmp_path, values):
    code = cli.main(["sweep", "--param", "k", "--values", values, "--config", str(cfg_file), "--out", str(tmp_path / "s")])
    assert code == 2


def test_sweep_invalid_value_is_config_error(cfg_file, tmp_path):
    assert cli.main(["sweep", "--param", "lambda", "--values", "0.5,2", "--config", str(cfg_file),
                     "--out", str(tmp_path / "s")]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pclmp", "generate", "--identities", "3", "-o",
                           str(tmp_path / "m.xpcl")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "m.xpcl").exists()


def test_log_level_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("XPCL_LOG", "error")
    assert cli.main(["generate", "--identities", "3", "-o", str(tmp_path / "q.xpcl")]) == 0
    assert "wrote" not in capsys.readouterr().err
