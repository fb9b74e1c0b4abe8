import json
import subprocess
import sys

import numpy as np
import pytest

from flowembed.cli import run_command
from flowembed.data import load_csv


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run_command(["generate", "--shape", "branch", "--n", "60", "--out", str(root / "d")]) == 0
    return root, root / "d" / "dataset.csv"


@pytest.fixture(scope="module")
def embedded(dataset):
    root, csv_path = dataset
    out = root / "run"
    argv = ["embed", "--in", str(csv_path), "--epochs", "4", "--seed", "7", "--out", str(out)]
    assert run_command(argv) == 0
    return out


def test_generate_contract(tmp_path):
    assert run_command(["generate", "--shape", "circle", "--n", "500", "--out", str(tmp_path / "d")]) == 0
    text = (tmp_path / "d" / "dataset.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "x0,x1,v0,v1,pseudotime" and len(lines) == 501
    assert load_csv(tmp_path / "d" / "dataset.csv").n_points == 500
    run = json.loads((tmp_path / "d" / "run.json").read_text())
    assert run["command"] == "generate" and run["config"]["generate"]["n"] == 500


def test_embed_twice_is_byte_identical(dataset, embedded):
    root, csv_path = dataset
    again = root / "again"
    argv = ["embed", "--in", str(csv_path), "--epochs", "4", "--seed", "7", "--out", str(again)]
    assert run_command(argv) == 0
    assert (embedded / "embedding.csv").read_bytes() == (again / "embedding.csv").read_bytes()


def test_replay_from_run_json(dataset, embedded):
    root, _ = dataset
    replay = root / "replay"
    assert run_command(["embed", "--config", str(embedded / "run.json"), "--out", str(replay)]) == 0
    assert (embedded / "embedding.csv").read_bytes() == (replay / "embedding.csv").read_bytes()
    assert json.loads((replay / "run.json").read_text())["config"]["trainer"]["epochs"] == 4


def test_cli_flag_beats_config(dataset, embedded, tmp_path):
    _, csv_path = dataset
    out = tmp_path / "r"
    assert run_command(["embed", "--config", str(embedded / "run.json"), "--epochs", "2", "--out", str(out)]) == 0
    assert json.loads((out / "run.json").read_text())["config"]["trainer"]["epochs"] == 2


def test_eval_and_plot(embedded, capsys):
    assert run_command(["eval", "--run", str(embedded)]) == 0
    report = json.loads((embedded / "eval" / "metrics.json").read_text())
    assert np.isfinite(report["stress"]) and -1 <= report["flow_cosine"] <= 1
    assert "stress" in capsys.readouterr().out
    for mode in ("scatter", "quiver", "streamlines"):
        assert run_command(["plot", "--run", str(embedded), "--mode", mode, "--grid", "5"]) == 0
        assert (embedded / "plot" / f"plot_{mode}.svg").read_text().startswith("<svg")


def test_build_graph_and_diffuse(dataset, tmp_path):
    _, csv_path = dataset
    assert run_command(["build-graph", "--in", str(csv_path), "--k", "5", "--m", "6", "--out", str(tmp_path / "g")]) == 0
    A = np.loadtxt(tmp_path / "g" / "affinity.csv", delimiter=",")
    assert A.shape == (60, 60) and np.all(np.diag(A) == 0)
    assert run_command(["diffuse", "--in", str(csv_path), "--steps", "0", "5", "--out", str(tmp_path / "f")]) == 0
    p = np.loadtxt(tmp_path / "f" / "diffusion_t5.csv", delimiter=",", skiprows=1)
    assert abs(p[:, 1].sum() - 1) < 1e-9
    assert (tmp_path / "f" / "diffusion_t0.svg").exists()


def test_eval_without_embed(tmp_path, capsys):
    assert run_command(["eval", "--run", str(tmp_path)]) == 2
    assert "embedding.csv" in capsys.readouterr().err


def test_usage_errors(dataset, tmp_path, capsys):
    _, csv_path = dataset
    assert run_command(["generate", "--bogus", "1"]) == 2
    assert run_command(["embed", "--in", str(csv_path), "--epochs", "0", "--out", str(tmp_path)]) == 2
    assert "epochs" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"trainer": {"epoch": 3}}))
    assert run_command(["embed", "--in", str(csv_path), "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "trainer.epoch" in capsys.readouterr().err
    assert run_command(["embed", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "flowembed.cli", "generate", "--n", "10", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "dataset.csv").exists()
