import csv
import json
import subprocess
import sys

import pytest

from sfgru.cli import run

TRAIN = ["--hidden", "2", "--epochs", "1", "--mode", "synth"]


@pytest.fixture(scope="module")
def tracks_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "tracks.jsonl"
    assert run(["synth", "--n", "16", "--track-len", "136", "--seed", "7",
                "--out", str(out)]) == 0
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    args = ["synth", "--n", "14", "--ratio", "2.5", "--snr", "8", "--seed", "7", "--track-len", "5"]
    assert run(args + ["--out", str(a)]) == 0
    assert run(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    labels = [json.loads(line)["label"] for line in a.read_text().splitlines()]
    assert labels.count("crossing") == 4 and labels.count("non_crossing") == 10
    manifest = json.loads((tmp_path / "a.jsonl.manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["config"]["seed"] == 7


def test_gradcheck_passes(capsys, tmp_path):
    out = tmp_path / "g.json"
    assert run(["gradcheck", "--model", "sf-gru", "--hidden", "4", "--m", "3", "--seed", "1",
                "--out", str(out)]) == 0
    assert "PASS" in capsys.readouterr().out
    report = json.loads(out.read_text())
    assert report["passed"] and report["max_rel_error"] < 1e-4


def test_train_then_eval(tracks_file, tmp_path, capsys):
    ckpt = tmp_path / "m.npz"
    assert run(["train", "--tracks", str(tracks_file), "--out", str(ckpt)] + TRAIN) == 0
    manifest = json.loads((tmp_path / "m.npz.manifest.json").read_text())
    assert len(manifest["loss_curve"]) == 1
    assert str(tracks_file) in manifest["inputs"]
    report = tmp_path / "e.csv"
    assert run(["eval", "--tracks", str(tracks_file), "--checkpoint", str(ckpt),
                "--out", str(report)]) == 0
    rows = _rows(report)
    assert len(rows) == 1 and rows[0]["model"] == "SF-GRU" and rows[0]["tte_s"] == "2.0000"
    assert "acc" in capsys.readouterr().out


@pytest.mark.parametrize("command, n_rows", [("fusion-order", 6), ("ablate", 7)])
def test_table_commands(tracks_file, tmp_path, command, n_rows):
    out = tmp_path / "t.csv"
    assert run([command, "--tracks", str(tracks_file), "--out", str(out)] + TRAIN) == 0
    assert len(_rows(out)) == n_rows


def test_sweep_commands(tracks_file, tmp_path):
    tte = tmp_path / "tte.csv"
    assert run(["sweep-tte", "--tracks", str(tracks_file), "--out", str(tte),
                "--model", "sf-gru,static"] + TRAIN) == 0
    assert len(_rows(tte)) == 38
    obs = tmp_path / "obs.csv"
    assert run(["sweep-obs", "--tracks", str(tracks_file), "--out", str(obs)] + TRAIN) == 0
    assert len(_rows(obs)) == 16


@pytest.mark.parametrize("argv", [
    ["train"],
    ["train", "--tracks", "x", "--out", "y", "--bogus"],
    ["train", "--tracks", "x", "--out", "y", "--epochs", "-1"],
    ["train", "--tracks", "x", "--out", "y", "--model", "lstm"],
    ["synth", "--out", "y", "--snr", "-2"],
    ["gradcheck", "--features", "Cp,Q"],
    ["nonsense"],
])
def test_usage_errors(argv):
    assert run(argv) == 2


def test_missing_file_and_schema_errors(tmp_path, capsys):
    assert run(["train", "--tracks", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")]) == 3
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a"}\n')
    assert run(["train", "--tracks", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert "line 1" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path):
    assert run(["gradcheck", "--hidden", "2", "--m", "2", "--tol", "1e-30"]) == 4


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sfgru", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
