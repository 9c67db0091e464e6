"""Command line entry point: ``momentprop {uci,toy,oracle,gradcheck}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .bench import (TOY_RANGE, BenchConfig, ToyConfig, fit_toy, generate_toy, run_toy_experiment,
                    run_uci_benchmark)
from .network import load_network, save_network
from .trainer import standardize


def _uci(args) -> int:
    status = 0
    for path in args.config:
        cfg = BenchConfig.from_file(path, seed=args.seed, T_mc=args.T, n_splits=args.splits,
                                    threads=args.threads)
        result = run_uci_benchmark(cfg, out_dir=args.out)
        print(result.table())
        if result.n_failed:
            status = 1
    return status


def _toy(args) -> int:
    cfg = ToyConfig.from_file(args.config) if args.config else ToyConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.T is not None:
        cfg.T_mc = args.T
    if args.net:
        _, _, sc = standardize(generate_toy(cfg.n_train, cfg.seed, cfg.noise_sd))
        fitted = (load_network(args.net), sc)
    else:
        fitted = fit_toy(cfg)
    if args.save_net:
        save_network(fitted[0], args.save_net)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = run_toy_experiment(cfg, out / "toy.csv", fitted=fitted)
    inside = (cols["x"] >= TOY_RANGE[0]) & (cols["x"] <= TOY_RANGE[1])
    print(f"wrote {out / 'toy.csv'} ({cols['x'].size} rows, T={cfg.T_mc})")
    print(f"in-range max |E_MC - E_MP| = {np.max(np.abs(cols['E_mc'] - cols['E_mp'])[inside]):.4f}")
    print(f"in-range median sd: MC {np.median(cols['sd_mc'][inside]):.4f}  MP {np.median(cols['sd_mp'][inside]):.4f}")
    return 0


def _oracle(args) -> int:
    names = args.which.split(",") if args.which else list(oracle.ORACLE_CHECKS)
    failed = 0
    for name in names:
        res = oracle.ORACLE_CHECKS[name](seed=args.seed)
        print(res.line(), flush=True)
        failed += not res.passed
    return 1 if failed else 0


def _gradcheck(args) -> int:
    res = oracle.check_gradients(n_arch=args.n_arch, seed=args.seed)
    print(res.line())
    return 0 if res.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="momentprop", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("uci", help="UCI regression benchmark (MC vs MP)")
    p.add_argument("--config", nargs="+", required=True, help="dataset config file(s)")
    p.add_argument("--out", default="results", help="directory for result CSVs")
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int, help="MC runs (default from config)")
    p.add_argument("--splits", type=int, help="override number of random splits")
    p.add_argument("--threads", type=int, help="worker threads for MC ensembles")
    p.set_defaults(func=_uci)

    p = sub.add_parser("toy", help="1-D toy experiment, writes plot data")
    p.add_argument("--config")
    p.add_argument("--out", default="results")
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--net", help="use this trained network file instead of training")
    p.add_argument("--save-net", help="write the trained network here")
    p.set_defaults(func=_toy)

    p = sub.add_parser("oracle", help="MC-vs-MP sampling checks")
    p.add_argument("--which", help=f"comma list from {','.join(oracle.ORACLE_CHECKS)}")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_oracle)

    p = sub.add_parser("gradcheck", help="backprop vs finite differences")
    p.add_argument("--n-arch", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
