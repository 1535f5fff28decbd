"""Command-line front end.

Five subcommands, each driven by a YAML config (see ``config.py``) plus
override flags:

  * ``dse``        — run the beam search, emit the best design as YAML.
  * ``simulate``   — simulate a design (from ``--design`` or a fresh search),
                     emit the event trace and per-task response stats.
  * ``sweep``      — period-ratio feasibility sweep across design methods.
  * ``compare``    — response-time comparison across scheduling policies.
  * ``beam-study`` — solution quality vs. beam width, oracle column included.

Every run writes a ``manifest.json`` (config hash, tool version, resolved
parameters, seeds — never timestamps) next to its artifacts, so any output
can be reproduced byte for byte from the manifest plus the config file.

Exit codes are a stable contract:

  0  success
  1  internal error (defect or resource limit; message on stderr)
  2  config error (diagnostics on stderr)
  3  no feasible design found
  4  divergence detected in simulation
"""

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from .analysis import (
    DEFAULT_POLICY_RUNS,
    PolicyRun,
    beam_quality_study,
    compare_policies,
    period_sweep,
    winners_by_max_response,
    write_beam_csv,
    write_response_csv,
    write_sweep_csv,
)
from .config import (
    POLICY_BY_NAME,
    ConfigError,
    load_config,
    load_design,
    write_design_yaml,
)
from .dse import beam_search
from .model import Policy
from .sim import detect_divergence, simulate, verify_trace

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_NO_FEASIBLE = 3
EXIT_DIVERGENCE = 4

#: Documented exit-code table (kept in one place for --help and the README).
EXIT_CODES = {
    EXIT_OK: "success",
    EXIT_INTERNAL: "internal error",
    EXIT_CONFIG: "config error",
    EXIT_NO_FEASIBLE: "no feasible design",
    EXIT_DIVERGENCE: "divergence detected",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH",
                        help="experiment config (YAML)")
    common.add_argument("--out", metavar="DIR",
                        help="output directory (default: config's output)")
    common.add_argument("--seed", type=int, metavar="N",
                        help="override the config's seed list with one seed")
    common.add_argument("--policy", choices=sorted(POLICY_BY_NAME),
                        help="override the scheduling policy")
    common.add_argument("--beam-width", type=int, metavar="N",
                        help="override the beam width (>= 1)")
    common.add_argument("--max-m", type=int, metavar="N",
                        help="override the maximum accelerator count")
    common.add_argument("--grid", type=int, metavar="N",
                        help="override the resource-split granularity")
    common.add_argument("--horizon-mult", type=int, metavar="N",
                        help="override the simulation horizon multiplier")
    common.add_argument("--overhead", choices=("on", "off"), default="on",
                        help="charge preemption overhead in simulations "
                             "(default: on)")

    parser = argparse.ArgumentParser(
        prog="pipesched",
        description="Design and validate pipelined accelerator chains for "
                    "soft real-time workloads.",
        epilog="exit codes: " + "; ".join(
            f"{code} = {meaning}" for code, meaning in sorted(EXIT_CODES.items())))
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("dse", parents=[common],
                   help="search for the best design and emit it as YAML")
    sim_p = sub.add_parser("simulate", parents=[common],
                           help="simulate a design; trace + response stats")
    sim_p.add_argument("--design", metavar="PATH",
                       help="design YAML to simulate (default: run the "
                            "search and take its best)")
    sub.add_parser("sweep", parents=[common],
                   help="period-ratio feasibility sweep across methods")
    cmp_p = sub.add_parser("compare", parents=[common],
                           help="compare scheduling policies on one design")
    cmp_p.add_argument("--design", metavar="PATH",
                       help="design YAML to compare (default: run the "
                            "search and take its best)")
    sub.add_parser("beam-study", parents=[common],
                   help="solution quality vs. beam width (with oracle)")
    return parser


class _Run:
    """Resolved settings for one command invocation."""

    def __init__(self, cfg, args):
        self.cfg = cfg
        self.args = args
        self.policy = (POLICY_BY_NAME[args.policy] if args.policy
                       else cfg.dse.policy)
        self.beam_width = (args.beam_width if args.beam_width is not None
                           else cfg.dse.beam_width)
        if self.beam_width is not None and self.beam_width < 1:
            raise ConfigError([_diag("--beam-width must be >= 1")])
        self.max_m = args.max_m if args.max_m is not None else cfg.dse.max_m
        if self.max_m < 2:
            raise ConfigError([_diag("--max-m must be >= 2")])
        self.grid = args.grid if args.grid is not None else cfg.dse.grid
        if self.grid < 2:
            raise ConfigError([_diag("--grid must be >= 2")])
        self.horizon_mult = (args.horizon_mult if args.horizon_mult is not None
                             else cfg.sim.horizon_mult)
        if self.horizon_mult < 1:
            raise ConfigError([_diag("--horizon-mult must be >= 1")])
        self.seeds = (args.seed,) if args.seed is not None else cfg.sim.seeds
        self.overhead = args.overhead != "off"
        self.out_dir = args.out if args.out else cfg.output
        self.ts = cfg.taskset()
        self.budget = cfg.budget()

    def params(self) -> dict:
        return {
            "policy": self.policy.value,
            "beam_width": self.beam_width,
            "max_m": self.max_m,
            "grid": self.grid,
            "horizon_mult": self.horizon_mult,
            "overhead": self.overhead,
            "node_budget": self.cfg.dse.node_budget,
        }


def _diag(message):
    from .config import Diagnostic
    return Diagnostic("", None, message)


def _write_manifest(run: _Run, command: str, artifacts, extra=None) -> None:
    with open(run.args.config, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "tool": "pipesched",
        "version": __version__,
        "command": command,
        "config_file": os.path.basename(run.args.config),
        "config_sha256": digest,
        "parameters": run.params(),
        "seeds": list(run.seeds),
        "artifacts": sorted(artifacts),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(run.out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_design(run: _Run, design_path):
    """The design to operate on: an explicit file, or the search's best."""
    if design_path:
        return load_design(design_path, run.ts), os.path.basename(design_path)
    result = beam_search(run.ts, run.budget, run.max_m, run.beam_width,
                         run.grid, run.policy)
    if result.best is None:
        return None, None
    return result.best, "search-best"


def _cmd_dse(run: _Run) -> int:
    result = beam_search(run.ts, run.budget, run.max_m, run.beam_width,
                         run.grid, run.policy)
    c = result.explored
    print(f"explored {c.children_generated} children from "
          f"{c.parents_expanded} parents; {len(result.feasible)} feasible "
          f"designs")
    if result.best is None:
        _write_manifest(run, "dse", [], extra={"feasible": 0})
        print("no feasible design within the budget")
        return EXIT_NO_FEASIBLE
    best = result.best
    design_path = os.path.join(run.out_dir, "design.yaml")
    write_design_yaml(best, design_path)
    _write_manifest(run, "dse", ["design.yaml"],
                    extra={"feasible": len(result.feasible),
                           "best_max_util": str(best.max_util)})
    print(f"best design: {best.num_accs} accelerator(s), "
          f"max utilization {best.max_util} (~{float(best.max_util):.4f})")
    print(f"wrote {design_path}")
    return EXIT_OK


def _cmd_simulate(run: _Run) -> int:
    design, design_name = _resolve_design(run, run.args.design)
    if design is None:
        print("no feasible design to simulate; pass --design or relax the "
              "config")
        return EXIT_NO_FEASIBLE
    policy = (POLICY_BY_NAME[run.args.policy] if run.args.policy
              else design.policy)
    horizon = run.horizon_mult * run.ts.max_period
    seed = run.seeds[0]
    trace = simulate(design, run.ts, policy=policy, horizon=horizon,
                     seed=seed, preemption_overhead=run.overhead)
    problems = verify_trace(trace)
    if problems:
        for p in problems:
            print(f"trace inconsistency: {p}", file=sys.stderr)
        return EXIT_INTERNAL

    trace_path = os.path.join(run.out_dir, "trace.jsonl")
    trace.write_jsonl(trace_path)
    rows = compare_policies(design, run.ts,
                            runs=[PolicyRun(policy.value, policy, run.overhead)],
                            horizon=horizon, seeds=[seed])
    responses_path = os.path.join(run.out_dir, "responses.csv")
    write_response_csv(rows, responses_path)
    _write_manifest(run, "simulate", ["trace.jsonl", "responses.csv"],
                    extra={"design": design_name, "policy": policy.value,
                           "horizon": horizon})
    for row in rows:
        if row.count:
            print(f"task {row.task}: {row.count} jobs, max response "
                  f"{row.max_response}, mean {row.mean_response:.1f}")
        else:
            print(f"task {row.task}: no jobs completed")
    print(f"wrote {trace_path} and {responses_path}")

    if horizon >= 100 * run.ts.max_period:
        report = detect_divergence(trace, run.ts)
        if report:
            for reason in report.reasons:
                print(f"divergence: {reason}")
            return EXIT_DIVERGENCE
        print("bounded: no divergence detected")
    else:
        print("horizon below 100x the largest period; divergence not checked")
    return EXIT_OK


def _cmd_sweep(run: _Run) -> int:
    axes = run.cfg.sweep.resolve_axes(len(run.ts))
    grid = period_sweep(run.ts, run.budget, axes=axes,
                        methods=run.cfg.sweep.methods, max_m=run.max_m,
                        beam_width=run.beam_width, grid=run.grid,
                        policy=run.policy, horizon_mult=run.horizon_mult,
                        seed=run.seeds[0])
    sweep_path = os.path.join(run.out_dir, "sweep.csv")
    write_sweep_csv(grid, sweep_path)
    counts = grid.feasible_counts()
    total = len(grid.cells)
    for method in grid.methods:
        print(f"{method}: {counts[method]}/{total} feasible cells")
    exclusive = grid.exclusive_cells(grid.methods[0])
    if exclusive:
        cells = ", ".join("(" + ", ".join(f"{r:.4g}" for r in c) + ")"
                          for c in exclusive)
        print(f"only {grid.methods[0]} feasible at: {cells}")
    _write_manifest(run, "sweep", ["sweep.csv"],
                    extra={"methods": list(grid.methods),
                           "cells": total,
                           "feasible_counts": counts})
    print(f"wrote {sweep_path}")
    return EXIT_OK


def _cmd_compare(run: _Run) -> int:
    design, design_name = _resolve_design(run, run.args.design)
    if design is None:
        print("no feasible design to compare; pass --design or relax the "
              "config")
        return EXIT_NO_FEASIBLE
    horizon = run.horizon_mult * run.ts.max_period
    rows = compare_policies(design, run.ts, runs=DEFAULT_POLICY_RUNS,
                            horizon=horizon, seeds=run.seeds)
    responses_path = os.path.join(run.out_dir, "responses.csv")
    write_response_csv(rows, responses_path)
    winners = winners_by_max_response(rows)
    for task_id in sorted(winners):
        print(f"task {task_id}: lowest worst-case response under "
              f"'{winners[task_id]}'")
    unreliable = sorted({r.label for r in rows if not r.reliable})
    if unreliable:
        print(f"warning: divergence detected under {', '.join(unreliable)}; "
              f"those rows are marked unreliable")
    _write_manifest(run, "compare", ["responses.csv"],
                    extra={"design": design_name, "horizon": horizon})
    print(f"wrote {responses_path}")
    return EXIT_OK


def _cmd_beam_study(run: _Run) -> int:
    rows = beam_quality_study(run.ts, run.budget, widths=(1, 2, 4, 8, None),
                              max_m=run.max_m, grid=run.grid,
                              policy=run.policy,
                              node_budget=run.cfg.dse.node_budget)
    path = os.path.join(run.out_dir, "beam_quality.csv")
    write_beam_csv(rows, path)
    for row in rows:
        if row.exceeded:
            print(f"B={row.label}: node budget exceeded")
        elif row.best_max_util is None:
            print(f"B={row.label}: no feasible design "
                  f"({row.children} children)")
        else:
            print(f"B={row.label}: best max utilization {row.best_max_util} "
                  f"(~{float(row.best_max_util):.4f}), "
                  f"{row.children} children")
    _write_manifest(run, "beam-study", ["beam_quality.csv"])
    print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "dse": _cmd_dse,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "beam-study": _cmd_beam_study,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        run = _Run(cfg, args)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        os.makedirs(run.out_dir, exist_ok=True)
        return _COMMANDS[args.command](run)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 — the CLI boundary maps to exit 1
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
