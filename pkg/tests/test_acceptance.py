"""Acceptance gates A1 to A8. Each test reports exactly one PASS/FAIL line.

A4 to A6 train real networks and take a few minutes in total; they carry the
``slow`` marker but are part of the default run.
"""

from pathlib import Path

import numpy as np
import pytest

from momentprop import oracle
from momentprop.bench import TOY_RANGE, BenchConfig, ToyConfig, run_toy_experiment, run_uci_benchmark, \
    split_indices, time_inference, toy_function
from momentprop.network import build_network
from momentprop.trainer import standardize, train

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# Published mean and standard error per metric: (rmse_mc, rmse_mp, nll_mc, nll_mp)
PUBLISHED = {
    "boston": {"rmse_mc": (3.14, 0.20), "rmse_mp": (3.10, 0.20), "nll_mc": (2.57, 0.07), "nll_mp": (2.56, 0.08)},
    "energy": {"rmse_mc": (1.65, 0.05), "rmse_mp": (1.61, 0.05), "nll_mc": (1.95, 0.04), "nll_mp": (2.01, 0.04)},
    "yacht": {"rmse_mc": (2.93, 0.22), "rmse_mp": (2.91, 0.26), "nll_mc": (2.35, 0.07), "nll_mp": (2.11, 0.07)},
}


def _gate(passed, summary):
    if not passed:
        pytest.fail(summary, pytrace=False)


def test_a1_linear_exactness(report):
    res = oracle.check_linear_exactness(n_nets=50, T=100_000, seed=0)
    report("A1", res.passed, res.summary)
    _gate(res.passed, res.summary)


def test_a2_relu_moments(report):
    res = oracle.check_relu_moments(n=1_000_000, seed=0)
    report("A2", res.passed, res.summary)
    _gate(res.passed, res.summary)


@pytest.mark.slow
def test_a3_network_approximation(report):
    res = oracle.check_network_approximation(n_nets=20, n_inputs=100, T=10_000, seed=0)
    report("A3", res.passed, res.summary)
    _gate(res.passed, res.summary)


@pytest.mark.slow
def test_a4_uci_reproduction(report, tmp_path):
    lines, missing, passed = [], [], True
    for name, published in PUBLISHED.items():
        cfg = BenchConfig.from_file(CONFIGS / f"{name}.cfg")
        if not Path(cfg.path).exists():
            missing.append(name)
            passed = False
            continue
        res = run_uci_benchmark(cfg, out_dir=tmp_path)
        print(res.table())
        for metric, (mean, se) in published.items():
            got = getattr(res, metric)
            ok = abs(got - mean) <= 3 * se and res.n_failed == 0
            passed &= ok
            lines.append(f"{name}.{metric}={got:.2f}{'' if ok else '!'} in [{mean - 3 * se:.2f}, {mean + 3 * se:.2f}]")
    if missing:
        lines.append(f"dataset file missing: {', '.join(missing)} (see data/uci/README.md)")
    summary = "; ".join(lines)
    report("A4", passed, summary)
    _gate(passed, summary)


@pytest.fixture(scope="module")
def toy_columns():
    return run_toy_experiment(ToyConfig(T_mc=1000))


@pytest.mark.slow
def test_a5_toy_experiment(report, toy_columns):
    c = toy_columns
    x = c["x"]
    inside = (x >= TOY_RANGE[0]) & (x <= TOY_RANGE[1])
    target_range = np.ptp(toy_function(x[inside]))
    mean_gap = np.max(np.abs(c["E_mc"] - c["E_mp"])[inside]) / target_range
    band_gap = np.mean(np.abs(c["sd_mp"] - c["sd_mc"])[inside] / c["sd_mc"][inside])
    grows, sides = True, []
    for arm in ("mc", "mp"):
        sd = c[f"sd_{arm}"]
        median_in = np.median(sd[inside])
        grows &= sd[~inside].mean() > median_in
        left, right = sd[x < TOY_RANGE[0]].mean(), sd[x > TOY_RANGE[1]].mean()
        sides.append(f"{arm} in-median {median_in:.2f} left {left:.2f} right {right:.2f}")
    ok_mean, ok_band = mean_gap <= 0.02, band_gap <= 0.15
    passed = bool(ok_mean and ok_band and grows)
    summary = (f"max mean gap {mean_gap:.2%} of range (<= 2%: {ok_mean}); "
               f"mean band-width gap {band_gap:.1%} (<= 15%: {ok_band}); "
               f"out-of-range sd above in-range median: {grows} ({'; '.join(sides)})")
    report("A5", passed, summary)
    _gate(passed, summary)


@pytest.mark.slow
def test_a6_speed(report):
    cfg = BenchConfig.from_file(CONFIGS / "boston.cfg")
    if not Path(cfg.path).exists():
        report("A6", False, "dataset file missing: boston")
        pytest.fail("boston dataset missing")
    data = cfg.load()
    tr_idx, te_idx = split_indices(data.N, cfg, 0)
    tr, te, _ = standardize(data.subset(tr_idx), data.subset(te_idx))
    net = train(build_network(cfg.specs(data.Q, 0.05), 0), tr, cfg.train_config(0))
    runs = np.array([time_inference(net, te.X, 10_000, seed=s) for s in range(5)])
    rt_mc, rt_mp = np.median(runs, axis=0)
    ratio = rt_mc / rt_mp
    passed = ratio >= 100
    summary = f"rt_mc {rt_mc:.3f}s, rt_mp {rt_mp * 1e3:.3f}ms on {te.N} test rows, ratio {ratio:.0f} (>= 100)"
    report("A6", passed, summary)
    _gate(passed, summary)


def test_a7_nll_consistency(report):
    res = oracle.check_nll_consistency(T=100_000, n_targets=100, seed=0)
    report("A7", res.passed, res.summary)
    _gate(res.passed, res.summary)


def test_a8_gradients(report):
    res = oracle.check_gradients(n_arch=20, seed=0)
    report("A8", res.passed, res.summary)
    _gate(res.passed, res.summary)
