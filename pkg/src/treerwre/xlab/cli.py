"""Command line entry point: ``treerwre <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .. import __version__, brw, oracle, quenched, walker
from ..env import EnvSpec, classify_regime, make_critical_two_point
from ..errors import TreeRWREError
from .acceptance import AcceptanceParams, CRITERIA, report_json, run_acceptance
from .config import ExperimentConfig
from .experiments import run_barrier_scan, run_rho_scan, run_walk_experiment, xstar_csv


def _config(args, default_schedule=()) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig(spec=make_critical_two_point(2), schedule=list(default_schedule))
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out:
        cfg.output = dict(cfg.output, dir=args.out)
    if args.threads:
        cfg.threads = args.threads
    if args.budget_nodes:
        cfg.budgets["nodes"] = args.budget_nodes
    if args.budget_steps:
        cfg.budgets["steps"] = args.budget_steps
    return cfg


def _spec(args) -> EnvSpec:
    if args.config:
        return ExperimentConfig.load(args.config).spec
    return make_critical_two_point(2)


def _emit(args, name: str, text: str):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(text)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_classify(args):
    spec = _spec(args)
    reg = classify_regime(spec)
    _emit(args, "regime.json", json.dumps({"spec_hash": spec.spec_hash, **reg.to_dict()}, indent=2))


def cmd_rho_scan(args):
    cfg = _config(args, default_schedule=[8, 16, 32, 64])
    scan = run_rho_scan(cfg)
    sys.stdout.write(scan.csv)
    for seed, fit in scan.quenched_fits.items():
        print(f"# quenched fit seed={seed}: {None if fit is None else fit.to_dict()}")
    print(f"# annealed fit: {None if scan.annealed_fit is None else scan.annealed_fit.to_dict()}")


def cmd_barrier_scan(args):
    cfg = _config(args, default_schedule=[16, 32, 64, 128])
    scan = run_barrier_scan(cfg)
    sys.stdout.write(scan.csv)
    print(f"# fit: {None if scan.fit is None else scan.fit.to_dict()} incomplete={scan.missing}")


def cmd_walk(args):
    cfg = _config(args)
    res = run_walk_experiment(cfg)
    sys.stdout.write(res.json)
    for r, (band, ratio) in enumerate(zip(res.bands, res.ratios)):
        print(f"# replica {r}: band=[{band[0]:.4g}, {band[1]:.4g}] max/min={ratio:.3f}")


def cmd_xstar(args):
    cfg = _config(args)
    rec = walker.track_xstar(cfg.spec, (cfg.seeds[0], cfg.sample("seed_walk", 0)), args.steps)
    _emit(args, "xstar.csv", xstar_csv(cfg, rec))


def cmd_oracle_check(args):
    spec = _spec(args)
    seed = args.seed or 0
    rows = []
    for n in range(1, args.depth + 1):
        env = quenched.truncate(spec, seed, n)
        env_rho, or_rho = quenched.rho(env), oracle.rho(env)
        env_tau, or_tau = quenched.expected_tau(env), oracle.expected_tau(env)
        rows.append({"n": n, "rho": env_rho, "rho_oracle": or_rho, "tau": env_tau, "tau_oracle": or_tau,
                     "rho_diff": abs(env_rho - or_rho), "tau_rel": abs(env_tau - or_tau) / or_tau})
    _emit(args, "oracle_check.json", json.dumps(rows, indent=2))


def cmd_phi_star(args):
    spec = _spec(args)
    phi = brw.solve_phi_star(spec, t_max=args.t_max, grid_size=args.grid_size)
    _emit(args, "phi_star.csv", phi.to_csv())


def cmd_accept(args):
    params = AcceptanceParams(threads=args.threads or 1)
    if args.budget_nodes:
        params.barrier_budget = args.budget_nodes
    only = [int(k) for k in args.only.split(",")] if args.only else None
    echo = (lambda s: print(s, file=sys.stderr, flush=True))
    results = run_acceptance(params, only=only, echo=echo)
    _emit(args, "acceptance.json", report_json(results))
    return 0 if all(r.verdict for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="environment seed (overrides the config)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=0, help="worker threads")
    common.add_argument("--budget-nodes", type=lambda s: int(float(s)), help="tree-search node budget")
    common.add_argument("--budget-steps", type=lambda s: int(float(s)), help="walk step budget")

    ap = argparse.ArgumentParser(prog="treerwre", description=__doc__)
    ap.add_argument("--version", action="version", version=f"treerwre {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("classify", parents=[common], help="regime of the configured law").set_defaults(fn=cmd_classify)
    sub.add_parser("rho-scan", parents=[common], help="escape probability over depth").set_defaults(fn=cmd_rho_scan)
    sub.add_parser("barrier-scan", parents=[common], help="minimal barrier over depth").set_defaults(
        fn=cmd_barrier_scan)
    sub.add_parser("walk", parents=[common], help="long walks and X* bands").set_defaults(fn=cmd_walk)
    p = sub.add_parser("xstar", parents=[common], help="X* checkpoints of one walk")
    p.add_argument("--steps", type=lambda s: int(float(s)), default=10**6)
    p.set_defaults(fn=cmd_xstar)
    p = sub.add_parser("oracle-check", parents=[common], help="recursions against dense linear solves")
    p.add_argument("--depth", type=int, default=5)
    p.set_defaults(fn=cmd_oracle_check)
    p = sub.add_parser("phi-star", parents=[common], help="solve the cascade fixed point")
    p.add_argument("--t-max", type=float, default=1e5)
    p.add_argument("--grid-size", type=int, default=1024)
    p.set_defaults(fn=cmd_phi_star)
    p = sub.add_parser("accept", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", help=f"comma-separated criterion numbers out of {sorted(CRITERIA)}")
    p.set_defaults(fn=cmd_accept)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.fn(args) or 0)
    except TreeRWREError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
