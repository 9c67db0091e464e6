import csv

import numpy as np
import pytest

from momentprop import bench
from momentprop.bench import (RESULT_COLUMNS, SPLIT_COLUMNS, TOY_COLUMNS, TOY_RANGE, BenchConfig, ResultRow,
                              ToyConfig, generate_toy, grid_scores, grid_search, run_toy_experiment,
                              run_uci_benchmark, split_indices, time_inference)
from momentprop.network import build_network, mlp_specs
from momentprop.predictive import mean_and_se
from momentprop.trainer import Dataset, TrainingError


def tiny_cfg(**kw):
    base = dict(dataset="synth", n_splits=3, hidden_width=8, dropout_grid=[0.01, 0.1], tau_grid=[0.5, 2.0],
                T_mc=20, epochs_base=2, epochs_multiplier=1, batch_size=32)
    base.update(kw)
    return BenchConfig(**base)


def synth(n=120, q=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, q))
    return Dataset(X, X @ rng.normal(size=q) + rng.normal(0, 0.5, size=n))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"dropout_grid": []}, {"tau_grid": []}, {"n_splits": 0}, {"T_mc": 1},
                                    {"tau_grid": [0.0]}, {"dropout_grid": [1.5]}])
    def test_invariants(self, kw):
        with pytest.raises(ValueError):
            tiny_cfg(**kw)

    def test_epochs(self):
        assert BenchConfig().epochs == 400

    def test_from_file_resolves_path(self, tmp_path):
        (tmp_path / "d").mkdir()
        cfg_file = tmp_path / "d" / "x.cfg"
        cfg_file.write_text("dataset = x\npath = ../data.csv\ndropout_grid = 0.1, 0.2\nT_mc = 50\n")
        cfg = BenchConfig.from_file(cfg_file, T_mc=7)
        assert cfg.path == str((tmp_path / "data.csv").resolve())
        assert cfg.dropout_grid == [0.1, 0.2] and cfg.T_mc == 7


class TestGridSearch:
    def test_singleton_grid_skips_training(self, monkeypatch):
        def boom(*a, **k):
            raise AssertionError("trained")
        monkeypatch.setattr(bench, "train", boom)
        assert grid_search(synth(), tiny_cfg(dropout_grid=[0.05], tau_grid=[3.0])) == (0.05, 3.0)

    def test_ties_go_to_first_pair(self):
        cfg = tiny_cfg(dropout_grid=[0.01, 0.05, 0.1], tau_grid=[0.5, 1.0])
        assert bench._argmin_pair(np.zeros((3, 2)), cfg) == (0.01, 0.5)

    def test_identical_grid_points_tie(self):
        cfg = tiny_cfg(dropout_grid=[0.1, 0.1], tau_grid=[1.0, 1.0])
        mc, mp = grid_scores(synth(), cfg)
        assert np.all(mc == mc[0, 0]) and np.all(mp == mp[0, 0])
        assert grid_search(synth(), cfg) == (0.1, 1.0)

    @pytest.mark.parametrize("arm", ["mc", "mp"])
    def test_recovers_noise_precision(self, arm):
        # y = 0.6 x + N(0, 0.8^2) has unit variance, so the standardized noise precision is 1 / 0.64
        rng = np.random.default_rng(3)
        x = rng.normal(size=600)
        data = Dataset(x[:, None], 0.6 * x + rng.normal(0, 0.8, size=600))
        tau0 = data.y.var() / 0.64
        grid = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
        cfg = tiny_cfg(dropout_grid=[0.005], tau_grid=grid, T_mc=100, epochs_base=30, hidden_width=16)
        _, tau = grid_search(data, cfg, arm=arm)
        lo = max(g for g in grid if g <= tau0)
        hi = min(g for g in grid if g >= tau0)
        assert tau in (lo, hi)

    def test_grid_search_is_deterministic(self):
        cfg = tiny_cfg()
        assert grid_search(synth(), cfg, seed=4) == grid_search(synth(), cfg, seed=4)


class TestTiming:
    def test_empty_test_set(self):
        net = build_network(mlp_specs(3, [8], 1, 0.1), 0)
        with pytest.raises(ValueError):
            time_inference(net, np.empty((0, 3)), 10)

    def test_single_pass_costs_about_the_same(self):
        net = build_network(mlp_specs(13, [50], 1, 0.1), 0)
        X = np.random.default_rng(0).normal(size=(51, 13))
        runs = np.array([time_inference(net, X, 1) for _ in range(15)])
        rt_mc, rt_mp = np.median(runs, axis=0)
        assert rt_mp / 3 <= rt_mc <= 3 * rt_mp

    def test_many_passes_cost_more(self):
        net = build_network(mlp_specs(13, [50], 1, 0.1), 0)
        X = np.random.default_rng(0).normal(size=(51, 13))
        rt_mc, rt_mp = time_inference(net, X, 1000)
        assert rt_mc > 10 * rt_mp


class TestSplits:
    def test_disjoint_and_complete(self):
        cfg = tiny_cfg()
        for s in range(5):
            tr, te = split_indices(506, cfg, s)
            assert np.intersect1d(tr, te).size == 0
            assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(506))
            assert te.size == 51

    def test_splits_differ(self):
        cfg = tiny_cfg()
        assert not np.array_equal(split_indices(100, cfg, 0)[1], split_indices(100, cfg, 1)[1])


class TestBenchmark:
    def test_audit_trail_aggregates(self, tmp_path):
        res = run_uci_benchmark(tiny_cfg(), out_dir=tmp_path, data=synth())
        assert (res.N, res.Q, res.n_ok, res.n_failed) == (120, 3, 3, 0)
        with open(tmp_path / "synth_splits.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == SPLIT_COLUMNS and len(rows) == 3
        with open(tmp_path / "synth_result.csv") as fh:
            summary = list(csv.DictReader(fh))
        assert list(summary[0]) == RESULT_COLUMNS
        for key in ("rmse_mc", "rmse_mp", "nll_mc", "nll_mp", "rt_mc", "rt_mp"):
            m, se = mean_and_se([float(r[key]) for r in rows])
            assert float(summary[0][key]) == pytest.approx(m, rel=1e-12)
            assert float(summary[0][key + "_se"]) == pytest.approx(se, rel=1e-12, abs=1e-15)
            assert getattr(res, key + "_se") >= 0

    def test_reproducible(self):
        a = run_uci_benchmark(tiny_cfg(n_splits=2), data=synth())
        b = run_uci_benchmark(tiny_cfg(n_splits=2), data=synth())
        strip = lambda rows: [{k: v for k, v in r.items() if not k.startswith("rt")} for r in rows]  # noqa: E731
        assert strip(a.splits) == strip(b.splits)

    def test_failed_split_is_flagged(self, monkeypatch):
        real = bench.train

        def flaky(net, data, cfg):
            if cfg.seed == 1:
                raise TrainingError("non-finite loss")
            return real(net, data, cfg)
        monkeypatch.setattr(bench, "train", flaky)
        res = run_uci_benchmark(tiny_cfg(), data=synth())
        assert (res.n_ok, res.n_failed) == (2, 1)
        assert res.splits[1]["status"].startswith("failed")
        assert "failed 1" in res.table()

    def test_missing_dataset_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            run_uci_benchmark(tiny_cfg(path=str(tmp_path / "nope.csv")))

    def test_nll_reported_in_original_units(self):
        """Scaling the target by c shifts both NLLs by log(c) and RMSEs by a factor c."""
        d = synth()
        a = run_uci_benchmark(tiny_cfg(n_splits=1), data=d)
        b = run_uci_benchmark(tiny_cfg(n_splits=1), data=Dataset(d.X, 10.0 * d.y))
        assert b.nll_mp == pytest.approx(a.nll_mp + np.log(10.0), abs=1e-9)
        assert b.nll_mc == pytest.approx(a.nll_mc + np.log(10.0), abs=1e-9)
        assert b.rmse_mp == pytest.approx(10.0 * a.rmse_mp, rel=1e-9)


def test_result_row_single_split_has_zero_se():
    row = ResultRow.aggregate("d", 10, 2, [dict(status="ok", rmse_mc=1.0, rmse_mp=2.0, nll_mc=3.0, nll_mp=4.0,
                                                rt_mc=5.0, rt_mp=6.0)])
    assert row.rmse_mc_se == 0.0 and row.nll_mp == 4.0


class TestToy:
    def test_range(self):
        d = generate_toy(1000, seed=1)
        assert d.X.min() >= TOY_RANGE[0] and d.X.max() <= TOY_RANGE[1]

    def test_deterministic(self):
        a, b = generate_toy(50, seed=2), generate_toy(50, seed=2)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            generate_toy(0)

    def test_noise_level(self):
        d = generate_toy(20_000, seed=0, noise_sd=1.0)
        resid = d.y - d.X[:, 0] * np.sin(d.X[:, 0])
        assert resid.std() == pytest.approx(1.0, abs=0.03)

    def test_plot_data(self, tmp_path):
        cfg = ToyConfig(n_train=100, hidden_width=16, epochs=3, T_mc=10, n_grid=21)
        cols = run_toy_experiment(cfg, tmp_path / "toy.csv")
        assert list(cols) == TOY_COLUMNS
        assert "sd_dnn" not in cols
        assert all(len(v) == 21 for v in cols.values())
        assert np.all(cols["sd_mc"] >= 0) and np.all(cols["sd_mp"] >= 0)
        with open(tmp_path / "toy.csv") as fh:
            assert next(csv.reader(fh)) == TOY_COLUMNS
