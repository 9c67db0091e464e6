"""UCI benchmark protocol, inference timing and the 1-D toy experiment."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .mc import mc_ensemble
from .moments import mp_forward
from .network import Network, build_network, forward_deterministic, mlp_specs
from .predictive import PredictiveGaussian, mc_nll, mean_and_se, mp_nll, rmse
from .trainer import (Dataset, Scaler, TrainConfig, TrainingError, coerce_fields, load_csv, read_kv,
                      standardize, train)

log = logging.getLogger(__name__)

PAPER_DROPOUT_GRID = [0.005, 0.01, 0.05, 0.1]
# Precision of the standardized target. The upper end reaches noise sd ~0.06,
# which low-noise sets such as Energy and Yacht need.
DEFAULT_TAU_GRID = [0.025, 0.05, 0.075, 0.1, 0.25, 0.5, 0.75, 1.0, 2.5, 5.0, 10.0,
                    25.0, 50.0, 100.0, 250.0]


@dataclass
class BenchConfig:
    dataset: str = "dataset"
    path: str = ""
    delimiter: str = ","
    target_col: int = -1
    drop_cols: list = field(default_factory=list)
    n_splits: int = 20
    test_fraction: float = 0.1
    val_fraction: float = 0.2
    hidden_width: int = 50
    n_hidden: int = 1
    input_dropout: bool = False
    dropout_grid: list = field(default_factory=lambda: list(PAPER_DROPOUT_GRID))
    tau_grid: list = field(default_factory=lambda: list(DEFAULT_TAU_GRID))
    T_mc: int = 10_000
    epochs_base: int = 40
    epochs_multiplier: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.dropout_grid or not self.tau_grid:
            raise ValueError("dropout and tau grids must be non-empty")
        if any(not 0 <= p <= 1 for p in self.dropout_grid) or any(t <= 0 for t in self.tau_grid):
            raise ValueError("dropout grid must lie in [0, 1] and tau grid must be positive")
        if self.n_splits < 1:
            raise ValueError(f"n_splits must be >= 1, got {self.n_splits}")
        if self.T_mc < 2:
            raise ValueError(f"T_mc must be >= 2, got {self.T_mc}")
        if not 0 < self.test_fraction < 1 or not 0 < self.val_fraction < 1:
            raise ValueError("split fractions must lie in (0, 1)")

    @property
    def epochs(self) -> int:
        return self.epochs_base * self.epochs_multiplier

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           weight_decay=self.weight_decay, seed=seed)

    def specs(self, Q: int, p_star: float):
        return mlp_specs(Q, [self.hidden_width] * self.n_hidden, 1, p_star, self.input_dropout)

    @classmethod
    def from_file(cls, path, **overrides) -> "BenchConfig":
        raw = coerce_fields(cls, read_kv(path))
        if raw.get("path") and not Path(raw["path"]).is_absolute():
            raw["path"] = str((Path(path).parent / raw["path"]).resolve())
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)

    def load(self) -> Dataset:
        delim = None if self.delimiter in ("whitespace", "space", "") else self.delimiter
        return load_csv(self.path, delimiter=delim, target_col=self.target_col, drop_cols=self.drop_cols)


RESULT_COLUMNS = ["dataset", "N", "Q", "n_ok", "n_failed",
                  "rmse_mc", "rmse_mc_se", "rmse_mp", "rmse_mp_se",
                  "nll_mc", "nll_mc_se", "nll_mp", "nll_mp_se",
                  "rt_mc", "rt_mc_se", "rt_mp", "rt_mp_se"]

SPLIT_COLUMNS = ["split", "status", "p_mc", "tau_mc", "p_mp", "tau_mp",
                 "rmse_mc", "rmse_mp", "nll_mc", "nll_mp", "rt_mc", "rt_mp"]


@dataclass
class ResultRow:
    dataset: str
    N: int
    Q: int
    n_ok: int
    n_failed: int
    rmse_mc: float
    rmse_mc_se: float
    rmse_mp: float
    rmse_mp_se: float
    nll_mc: float
    nll_mc_se: float
    nll_mp: float
    nll_mp_se: float
    rt_mc: float
    rt_mc_se: float
    rt_mp: float
    rt_mp_se: float
    splits: list = field(default_factory=list, repr=False)

    @classmethod
    def aggregate(cls, dataset: str, N: int, Q: int, splits: list[dict]) -> "ResultRow":
        ok = [s for s in splits if s["status"] == "ok"]
        stats = {}
        for key in ("rmse_mc", "rmse_mp", "nll_mc", "nll_mp", "rt_mc", "rt_mp"):
            stats[key], stats[key + "_se"] = mean_and_se([s[key] for s in ok])
        return cls(dataset, N, Q, len(ok), len(splits) - len(ok), splits=splits, **stats)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("splits")
        return d

    def table(self) -> str:
        def pm(k, fmt="{:.2f}"):
            return f"{fmt.format(getattr(self, k))} +- {fmt.format(getattr(self, k + '_se'))}"
        return (f"{self.dataset:10s} N={self.N:<6d} Q={self.Q:<3d} splits={self.n_ok}"
                + (f" (failed {self.n_failed})" if self.n_failed else "") + "\n"
                f"  RMSE  MC {pm('rmse_mc')}   MP {pm('rmse_mp')}\n"
                f"  NLL   MC {pm('nll_mc')}   MP {pm('nll_mp')}\n"
                f"  RT[s] MC {pm('rt_mc', '{:.3f}')}   MP {pm('rt_mp', '{:.4f}')}")


def write_csv(path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def _arm_scores(net: Network, val: Dataset, taus, T: int, seed: int, threads: int = 1):
    """Validation NLL (standardized scale) for each tau, for the MC and MP arms."""
    ens = mc_ensemble(net, val.X, T, seed, threads=threads).samples[..., 0]
    m = mp_forward(net, val.X)
    mc = [float(np.mean(mc_nll(ens, val.y, t))) for t in taus]
    mp = [float(np.mean(mp_nll(PredictiveGaussian(m.E[:, 0], m.V[:, 0], t), val.y))) for t in taus]
    return np.array(mc), np.array(mp)


def grid_scores(train_set: Dataset, cfg: BenchConfig, seed: int = 0):
    """Validation NLL tables of shape ``(len(dropout_grid), len(tau_grid))`` for both arms.

    ``train_set`` is split once into inner train/validation parts; one network is
    trained per dropout rate and reused across the whole tau grid.
    """
    rng = np.random.default_rng([seed, 1])
    order = rng.permutation(train_set.N)
    n_val = max(1, int(round(cfg.val_fraction * train_set.N)))
    val_idx, fit_idx = order[:n_val], order[n_val:]
    inner, val, _ = standardize(train_set.subset(fit_idx), train_set.subset(val_idx))
    mc = np.empty((len(cfg.dropout_grid), len(cfg.tau_grid)))
    mp = np.empty_like(mc)
    for i, p in enumerate(cfg.dropout_grid):
        net = train(build_network(cfg.specs(train_set.Q, p), seed), inner, cfg.train_config(seed))
        mc[i], mp[i] = _arm_scores(net, val, cfg.tau_grid, cfg.T_mc, seed, cfg.threads)
    return mc, mp


def _argmin_pair(scores: np.ndarray, cfg: BenchConfig) -> tuple[float, float]:
    i, j = np.unravel_index(int(np.argmin(scores)), scores.shape)
    return cfg.dropout_grid[i], cfg.tau_grid[j]


def grid_search(train_set: Dataset, cfg: BenchConfig, seed: int = 0, arm: str = "mc") -> tuple[float, float]:
    """``(p_star, tau)`` minimising validation NLL; ties go to the first pair in grid order."""
    if len(cfg.dropout_grid) == 1 and len(cfg.tau_grid) == 1:
        return cfg.dropout_grid[0], cfg.tau_grid[0]
    mc, mp = grid_scores(train_set, cfg, seed)
    return _argmin_pair({"mc": mc, "mp": mp}[arm], cfg)


def time_inference(net: Network, X, T_mc: int, seed: int = 0) -> tuple[float, float]:
    """Wall-clock seconds to predict the whole of ``X`` with MC (``T_mc`` passes) and MP (one pass).

    Each arm gets one untimed warm-up call; BLAS is pinned to one thread.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("time_inference needs a non-empty 2-D test set")
    with threadpool_limits(limits=1):
        mc_ensemble(net, X, T_mc, seed)
        t0 = time.perf_counter()
        mc_ensemble(net, X, T_mc, seed)
        rt_mc = time.perf_counter() - t0
        mp_forward(net, X)
        t0 = time.perf_counter()
        mp_forward(net, X)
        rt_mp = time.perf_counter() - t0
    return rt_mc, rt_mp


def split_indices(N: int, cfg: BenchConfig, split: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.random.default_rng([cfg.seed, split]).permutation(N)
    n_test = max(1, int(round(cfg.test_fraction * N)))
    return order[n_test:], order[:n_test]


def _run_split(data: Dataset, cfg: BenchConfig, split: int) -> dict:
    train_idx, test_idx = split_indices(data.N, cfg, split)
    if np.intersect1d(train_idx, test_idx).size:
        raise AssertionError("test rows leaked into the training split")
    seed = cfg.seed * 1000 + split
    train_raw = data.subset(train_idx)
    mc_scores, mp_scores = grid_scores(train_raw, cfg, seed)
    p_mc, tau_mc = _argmin_pair(mc_scores, cfg)
    p_mp, tau_mp = _argmin_pair(mp_scores, cfg)

    tr, te, sc = standardize(train_raw, data.subset(test_idx))
    nets = {}
    for p in {p_mc, p_mp}:
        nets[p] = train(build_network(cfg.specs(data.Q, p), seed), tr, cfg.train_config(seed))

    y_true = data.y[test_idx]
    log_sy = np.log(sc.y_std)
    ens = mc_ensemble(nets[p_mc], te.X, cfg.T_mc, seed, threads=cfg.threads).samples[..., 0]
    m = mp_forward(nets[p_mp], te.X)
    rt_mc, _ = time_inference(nets[p_mc], te.X, cfg.T_mc, seed)
    _, rt_mp = time_inference(nets[p_mp], te.X, 2, seed)
    return {
        "split": split, "status": "ok",
        "p_mc": p_mc, "tau_mc": tau_mc, "p_mp": p_mp, "tau_mp": tau_mp,
        "rmse_mc": rmse(sc.inverse_y(ens.mean(axis=0)), y_true),
        "rmse_mp": rmse(sc.inverse_y(m.E[:, 0]), y_true),
        "nll_mc": float(np.mean(mc_nll(ens, te.y, tau_mc)) + log_sy),
        "nll_mp": float(np.mean(mp_nll(PredictiveGaussian(m.E[:, 0], m.V[:, 0], tau_mp), te.y)) + log_sy),
        "rt_mc": rt_mc, "rt_mp": rt_mp,
    }


def run_uci_benchmark(cfg: BenchConfig, out_dir=None, data: Dataset | None = None) -> ResultRow:
    """Full protocol over ``cfg.n_splits`` random splits.

    Per split: standardize on the training part, grid-search ``(p_star, tau)``
    on an inner validation split (separately for each arm), retrain on the full
    training part and score the held-out part. With ``out_dir`` a per-split
    audit CSV and a one-row summary CSV are written there.
    """
    data = cfg.load() if data is None else data
    splits = []
    for s in range(cfg.n_splits):
        try:
            row = _run_split(data, cfg, s)
        except TrainingError as exc:
            log.warning("%s split %d failed: %s", cfg.dataset, s, exc)
            row = {"split": s, "status": f"failed: {exc}"}
        log.info("%s split %d: %s", cfg.dataset, s, row)
        splits.append(row)
    result = ResultRow.aggregate(cfg.dataset, data.N, data.Q, splits)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"{cfg.dataset}_splits.csv", splits, SPLIT_COLUMNS)
        write_csv(out / f"{cfg.dataset}_result.csv", [result.as_dict()], RESULT_COLUMNS)
    return result


# -- toy experiment -----------------------------------------------------------

TOY_RANGE = (-3.0, 19.0)


def toy_function(x):
    return x * np.sin(x)


def generate_toy(n: int, seed: int = 0, noise_sd: float = 1.0, lo: float = TOY_RANGE[0],
                 hi: float = TOY_RANGE[1]) -> Dataset:
    """``x ~ U[lo, hi]``, ``y = x sin(x) + N(0, noise_sd^2)``."""
    if n < 1:
        raise ValueError("toy dataset needs n >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=n)
    return Dataset(x[:, None], toy_function(x) + rng.normal(0.0, noise_sd, size=n))


@dataclass
class ToyConfig:
    n_train: int = 1000
    noise_sd: float = 1.0
    hidden_width: int = 256
    n_hidden: int = 3
    p_star: float = 0.3
    epochs: int = 400
    batch_size: int = 128
    learning_rate: float = 1e-3
    T_mc: int = 30
    x_min: float = -10.0
    x_max: float = 30.0
    n_grid: int = 401
    seed: int = 0

    @classmethod
    def from_file(cls, path, **overrides) -> "ToyConfig":
        raw = coerce_fields(cls, read_kv(path))
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)


TOY_COLUMNS = ["x", "E_mc", "sd_mc", "E_mp", "sd_mp", "dnn_mu"]


def fit_toy(cfg: ToyConfig) -> tuple[Network, Scaler]:
    data = generate_toy(cfg.n_train, cfg.seed, cfg.noise_sd)
    tr, _, sc = standardize(data)
    specs = mlp_specs(1, [cfg.hidden_width] * cfg.n_hidden, 1, cfg.p_star)
    tcfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
                       seed=cfg.seed)
    return train(build_network(specs, cfg.seed), tr, tcfg), sc


def run_toy_experiment(cfg: ToyConfig, out_path=None, fitted=None) -> dict[str, np.ndarray]:
    """Columns of plot data over an x-grid reaching beyond the training range."""
    net, sc = fit_toy(cfg) if fitted is None else fitted
    x = np.linspace(cfg.x_min, cfg.x_max, cfg.n_grid)
    xs = sc.transform_X(x[:, None])
    ens = mc_ensemble(net, xs, cfg.T_mc, cfg.seed).samples[..., 0]
    m = mp_forward(net, xs)
    cols = {
        "x": x,
        "E_mc": sc.inverse_y(ens.mean(axis=0)),
        "sd_mc": np.sqrt(sc.inverse_var(ens.var(axis=0, ddof=1))),
        "E_mp": sc.inverse_y(m.E[:, 0]),
        "sd_mp": np.sqrt(sc.inverse_var(m.V[:, 0])),
        "dnn_mu": sc.inverse_y(forward_deterministic(net, xs)[:, 0]),
    }
    if out_path is not None:
        rows = [dict(zip(TOY_COLUMNS, vals)) for vals in zip(*(cols[c] for c in TOY_COLUMNS))]
        write_csv(out_path, rows, TOY_COLUMNS)
    return cols
