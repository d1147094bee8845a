"""Command-line entry point: ``poolal run|sweep|ratecheck|gen-pool``."""

from __future__ import annotations

import argparse
import sys

from .experiment import (ConfigError, load_config, ratecheck, read_csv, run_experiment,
                         single_cell, write_csv)
from .logistic import SolverError
from .synth import LINEAR, LOGISTIC, THRESHOLD, gen_pool_linear, gen_pool_logistic, \
    gen_pool_threshold, save_pool

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _run(args, sweep: bool) -> int:
    cfg = load_config(args.config)
    if not sweep:
        single_cell(cfg)
    rows = run_experiment(cfg)
    if args.output:
        out = args.output
    else:
        out = cfg.output if cfg.output == "-" else cfg.resolve(cfg.output)
    write_csv(rows, out)
    return EXIT_OK


def _ratecheck(args) -> int:
    try:
        rows = read_csv(args.csv)
    except (OSError, ValueError) as err:
        raise ConfigError(str(err)) from None
    try:
        rep = ratecheck(rows, args.alpha, algorithm=args.algorithm)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    print(f"alpha={rep.alpha!r} cells={rep.n_points} slope={rep.slope:.6f} "
          f"intercept={rep.intercept:.6f} r2={rep.r2:.6f}")
    for T, n, e in rep.medians:
        print(f"  T={T} median_N_T={n!r} median_excess_risk={e!r}")
    return EXIT_OK


def _gen_pool(args) -> int:
    try:
        if args.model == LINEAR:
            pool, _ = gen_pool_linear(args.T, args.d, args.alpha, args.seed,
                                      truncation=args.truncation)
        elif args.model == LOGISTIC:
            pool, _ = gen_pool_logistic(args.T, args.d, args.alpha, args.seed, R=args.R,
                                        truncation=args.truncation)
        else:
            pool, gt = gen_pool_threshold(args.T, n_functions=args.n_functions, seed=args.seed)
            if args.fclass_output is None:
                raise ConfigError("threshold pools need --fclass-output")
            gt.fclass.save(args.fclass_output)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    save_pool(args.output, pool)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poolal", description="Pool-based batch active learning runs.")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run a single (seed, T) cell"), ("sweep", "run every cell of a grid")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="flat key = value config file")
        sp.add_argument("-o", "--output", help="CSV path (overrides the config; '-' for stdout)")

    rp = sub.add_parser("ratecheck", help="log-log slope of median risk against median labels")
    rp.add_argument("csv")
    rp.add_argument("--alpha", type=float, required=True)
    rp.add_argument("--algorithm", default=None, help="restrict to one algorithm")

    gp = sub.add_parser("gen-pool", help="write a synthetic pool file")
    gp.add_argument("--model", choices=(LINEAR, LOGISTIC, THRESHOLD), default=LINEAR)
    gp.add_argument("--T", type=int, required=True)
    gp.add_argument("--d", type=int, default=5)
    gp.add_argument("--alpha", type=float, default=1.0)
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--R", type=float, default=None, help="logistic radius bound")
    gp.add_argument("--truncation", type=float, default=1.0)
    gp.add_argument("--n-functions", type=int, default=20)
    gp.add_argument("--fclass-output", default=None, help="function-class file (threshold model)")
    gp.add_argument("-o", "--output", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        if args.command == "run":
            return _run(args, sweep=False)
        if args.command == "sweep":
            return _run(args, sweep=True)
        if args.command == "ratecheck":
            return _ratecheck(args)
        return _gen_pool(args)
    except ConfigError as err:
        print(f"poolal: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"poolal: solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as err:
        print(f"poolal: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
