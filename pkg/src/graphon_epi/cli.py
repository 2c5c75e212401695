"""Command-line interface: simulate | limit | converge | stats | validate.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ConfigError, NumericalError
from .harness import (ExperimentPlan, cmd_limit, cmd_simulate, cmd_stats,
                      default_workers, run_convergence, write_report)
from .limit import SolverConfig
from .model import load_scenario, validate_scenario


def _add_common(p):
    p.add_argument("--scenario", required=True,
                   help="preset name or scenario JSON file")
    p.add_argument("--config", help="JSON file with extra keyword options")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker count (default: GRAPHON_EPI_THREADS or cpu count)")


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid config JSON in {path}: {e}")


def build_parser():
    ap = argparse.ArgumentParser(prog="graphon-epi",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one stochastic trajectory")
    _add_common(p)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--snapshots", type=int, default=11)

    p = sub.add_parser("limit", help="solve the limiting system")
    _add_common(p)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--cells", type=int, default=32)
    p.add_argument("--picard", action="store_true",
                   help="use the whole-interval Picard solver")
    p.add_argument("--age-dump", action="store_true")

    p = sub.add_parser("converge", help="N-sweep against the limit solution")
    _add_common(p)
    p.add_argument("--N", type=int, nargs="+", required=True)
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--cells", type=int, default=32)
    p.add_argument("--coupled", action="store_true",
                   help="also run the shared-noise mean-field coupling")

    p = sub.add_parser("stats", help="graph statistics for one sampled graph")
    _add_common(p)
    p.add_argument("--N", type=int, required=True)

    p = sub.add_parser("validate", help="check a scenario's invariants")
    _add_common(p)
    return ap


def _dispatch(args) -> int:
    extra = _load_config(args.config)
    if args.command == "validate":
        scenario = load_scenario(args.scenario)
        report = validate_scenario(scenario)
        print(report)
        return 0 if report.ok else 2
    if args.command == "simulate":
        if args.N < 1:
            raise ConfigError("--N must be >= 1")
        res = cmd_simulate(args.scenario, args.N, args.T, seed=args.seed,
                           out_dir=args.out, n_snapshots=args.snapshots)
        s, i, r = res.trajectory.counts_at(args.T)
        print(f"events={len(res.log)} final S={s} I={i} R={r}")
        return 0
    if args.command == "limit":
        solver = SolverConfig(dt=args.dt, cells_per_dim=args.cells,
                              **extra.get("solver", {}))
        sol = cmd_limit(args.scenario, args.T, solver=solver,
                        picard=args.picard, out_dir=args.out,
                        age_dump=args.age_dump)
        s_bar, i_bar, r_bar = sol.totals()
        print(f"T={args.T} S={s_bar[-1]:.6f} I={i_bar[-1]:.6f} R={r_bar[-1]:.6f}")
        return 0
    if args.command == "stats":
        gs = cmd_stats(args.scenario, args.N, seed=args.seed, out_dir=args.out)
        print(f"gamma_bar={gs.gamma_bar:.10g} upsilon={gs.upsilon:.10g} "
              f"kernel_gap={gs.kernel_gap:.10g} edges={gs.edge_count} "
              f"mean_degree={gs.mean_degree:.6g}")
        return 0
    if args.command == "converge":
        solver = SolverConfig(dt=args.dt, cells_per_dim=args.cells,
                              **extra.get("solver", {}))
        plan = ExperimentPlan(scenario=args.scenario, n_list=args.N,
                              replicas=args.replicas, horizon=args.T,
                              solver=solver, master_seed=args.seed,
                              workers=args.threads or default_workers(),
                              coupled=args.coupled,
                              **extra.get("plan", {}))
        report = run_convergence(plan)
        if args.out:
            write_report(report, args.out)
        for comp, slope in report.slopes.items():
            print(f"slope[{comp}]=" + (f"{slope:.4f}" if slope is not None else "n/a"))
        print(f"runtime={report.runtime_seconds:.1f}s")
        return 0
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
