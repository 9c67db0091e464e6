import csv

import numpy as np
import pytest

from momentprop.bench import TOY_COLUMNS
from momentprop.cli import main


def write_cfg(tmp_path, **extra):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 2))
    y = X[:, 0] - X[:, 1] + rng.normal(0, 0.3, size=60)
    np.savetxt(tmp_path / "d.csv", np.c_[X, y], delimiter=",", header="a,b,y", comments="")
    lines = {"dataset": "tiny", "path": "d.csv", "n_splits": 2, "hidden_width": 4, "dropout_grid": "0.05",
             "tau_grid": "1, 4", "T_mc": 10, "epochs_base": 2, "epochs_multiplier": 1}
    lines.update(extra)
    path = tmp_path / "tiny.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return path


def test_uci(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["uci", "--config", str(cfg), "--out", str(tmp_path / "res"), "--splits", "1"]) == 0
    assert "RMSE" in capsys.readouterr().out
    with open(tmp_path / "res" / "tiny_splits.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 1


def test_uci_exit_code_on_failed_split(tmp_path, monkeypatch):
    from momentprop import bench
    from momentprop.trainer import TrainingError

    def fail(*a, **k):
        raise TrainingError("non-finite loss")
    monkeypatch.setattr(bench, "train", fail)
    cfg = write_cfg(tmp_path)
    assert main(["uci", "--config", str(cfg), "--out", str(tmp_path / "res")]) == 1


def test_toy_and_network_reuse(tmp_path, capsys):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("n_train = 50\nhidden_width = 8\nepochs = 2\nn_grid = 11\n")
    out = tmp_path / "toy"
    assert main(["toy", "--config", str(cfg), "--out", str(out), "--T", "5",
                 "--save-net", str(tmp_path / "net.txt")]) == 0
    first = (out / "toy.csv").read_text()
    with open(out / "toy.csv") as fh:
        assert next(csv.reader(fh)) == TOY_COLUMNS
    assert main(["toy", "--config", str(cfg), "--out", str(out), "--T", "5", "--net", str(tmp_path / "net.txt")]) == 0
    assert (out / "toy.csv").read_text() == first
    assert "in-range" in capsys.readouterr().out


def test_oracle_subset(capsys):
    assert main(["oracle", "--which", "nll"]) == 0
    assert capsys.readouterr().out.startswith("[PASS]")


def test_gradcheck(capsys):
    assert main(["gradcheck", "--n-arch", "3"]) == 0
    assert "[PASS]" in capsys.readouterr().out


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
