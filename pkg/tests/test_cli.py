import csv
import json
import subprocess
import sys

import pytest

from etpp.cli import main
from etpp.model import load_checkpoint

FAST = ["--epochs", "3", "--bins", "4", "--grid-rows", "2", "--grid-cols", "2", "--hidden", "4", "--gamma", "3"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth", "--seed", "3", "--events", "44", "--rows", "4", "--cols", "4", "--out", str(d)]) == 0
    return d


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_synth_writes_files_and_is_repeatable(data, tmp_path):
    names = {p.name for p in data.iterdir()}
    assert {"transactions.csv", "events.csv", "seatmap.csv", "synth_config.json"} <= names
    assert main(["synth", "--seed", "3", "--events", "44", "--rows", "4", "--cols", "4", "--out", str(tmp_path)]) == 0
    for n in ("transactions.csv", "events.csv", "seatmap.csv", "synth_config.json"):
        assert (tmp_path / n).read_bytes() == (data / n).read_bytes()
    assert json.loads((data / "synth_config.json").read_text())["n_events"] == 44


def test_synth_rejects_zero_events(tmp_path, capsys):
    assert main(["synth", "--events", "0", "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("etpp: error:") and "n_events" in err and "\n" not in err


def test_global_flags_work_before_the_command(tmp_path):
    assert main(["--seed", "3", "--out", str(tmp_path), "synth", "--events", "2", "--rows", "2", "--cols", "2"]) == 0
    assert json.loads((tmp_path / "synth_config.json").read_text())["seed"] == 3


def test_train_writes_checkpoint_and_history(data, tmp_path):
    assert main(["train", "--data", str(data), "--out", str(tmp_path), "--patience", "0", *FAST]) == 0
    hist = rows(tmp_path / "history.csv")
    assert hist[0] == ["epoch", "train_loss", "val_loss"] and len(hist) == 1 + 3
    ckpt = load_checkpoint(tmp_path / "checkpoint.npz")
    assert (ckpt.config.L, ckpt.config.h, ckpt.config.variant) == (4, 4, "etpp")


def test_train_defaults_and_variant_flag(data, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": {"epochs": 2, "L": 4, "grid_rows": 2, "grid_cols": 2}}))
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path), "--variant", "etpp3"]) == 0
    c = load_checkpoint(tmp_path / "checkpoint.npz").config
    assert (c.alpha, c.beta, c.variant, c.h, c.gamma, c.epochs) == (0.0, 1.0, "etpp3", 30, 7, 2)


def test_flags_override_config_file(data, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"data": str(data), "model": {"epochs": 5, "L": 6, "grid_rows": 2, "grid_cols": 2}}))
    assert main(["train", "--config", str(cfg), "--epochs", "2", "--out", str(tmp_path)]) == 0
    c = load_checkpoint(tmp_path / "checkpoint.npz").config
    assert (c.epochs, c.L) == (2, 6)


@pytest.fixture(scope="module")
def checkpoint(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    assert main(["train", "--data", str(data), "--out", str(out), *FAST]) == 0
    return out / "checkpoint.npz"


def write_queries(path, items):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "dte"])
        w.writerows(items)


def test_predict_rows_and_repeatability(data, checkpoint, tmp_path):
    q = tmp_path / "q.csv"
    write_queries(q, [(1, 1, 2.0), (2, 3, 10.5), (4, 4, 0.0)])
    args = ["predict", "--checkpoint", str(checkpoint), "--queries", str(q), "--events", str(data / "events.csv"),
            "--event-id", "E044", "--partial", str(data / "transactions.csv")]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    out = rows(tmp_path / "a" / "predictions.csv")
    assert out[0] == ["row", "col", "dte", "predicted_price"] and len(out) == 4
    assert (tmp_path / "a" / "predictions.csv").read_bytes() == (tmp_path / "b" / "predictions.csv").read_bytes()


def test_predict_empty_queries(data, checkpoint, tmp_path):
    q = tmp_path / "q.csv"
    write_queries(q, [])
    assert main(["predict", "--checkpoint", str(checkpoint), "--queries", str(q), "--events", str(data / "events.csv"),
                 "--event-id", "E044", "--out", str(tmp_path)]) == 0
    assert rows(tmp_path / "predictions.csv") == [["row", "col", "dte", "predicted_price"]]


def test_predict_unknown_seat_names_it(data, checkpoint, tmp_path, capsys):
    q = tmp_path / "q.csv"
    write_queries(q, [(1, 1, 1.0), (9, 7, 1.0)])
    assert main(["predict", "--checkpoint", str(checkpoint), "--queries", str(q), "--events", str(data / "events.csv"),
                 "--event-id", "E044", "--out", str(tmp_path)]) == 1
    assert "row=9, col=7" in capsys.readouterr().err


def test_predict_missing_checkpoint(data, tmp_path, capsys):
    q = tmp_path / "q.csv"
    write_queries(q, [])
    assert main(["predict", "--checkpoint", str(tmp_path / "nope.npz"), "--queries", str(q),
                 "--events", str(data / "events.csv"), "--event-id", "E001"]) == 1
    assert "nope.npz does not exist" in capsys.readouterr().err


def test_backtest_reports(data, tmp_path, capsys):
    assert main(["backtest", "--data", str(data), "--out", str(tmp_path), "--methods",
                 "etpp,game_median,section_median,linear", "--reps", "1", "--splits", "1", "--workers", "1", *FAST]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert [r["method"] for r in doc["summary"]] == ["etpp", "game_median", "section_median", "linear"]
    assert doc["metadata"]["reduced"] is True
    assert "reduced repetitions" in capsys.readouterr().out
    for n in ("report.csv", "loss_curves.csv", "dte_histogram.csv"):
        assert (tmp_path / n).exists()


def test_backtest_rejects_unknown_method(data, tmp_path, capsys):
    assert main(["backtest", "--data", str(data), "--out", str(tmp_path), "--methods", "xgb"]) == 1
    assert "unknown methods" in capsys.readouterr().err


def test_sweep_table(data, tmp_path):
    assert main(["sweep", "--data", str(data), "--out", str(tmp_path), "--bins", "2,3,4", "--reps", "1",
                 "--splits", "1", "--epochs", "2", "--grid-rows", "2", "--grid-cols", "2", "--hidden", "3"]) == 0
    table = rows(tmp_path / "sweep.csv")
    assert [r[0] for r in table[1:]] == ["2", "3", "4"]


def test_missing_data_dir(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1
    assert "does not exist" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "etpp", "synth", "--events", "0", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.startswith("etpp: error:")
