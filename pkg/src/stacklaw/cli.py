"""Command line interface: validate, dry-run, run.

Exit codes: 0 all checks pass, 2 invalid configuration, 3 budget exhausted
(partial artifacts are still written with a "partial" marker), 4 at least
one enforced bound check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from fractions import Fraction

from .builder import plan_schedule, verify_schedule
from .castle import Castle
from .config import ExperimentConfig, validate_config
from .errors import BudgetExceeded, ConfigError, StacklawError
from .report import show
from .runner import run_all
from .verifier import cdf_table, counts_to_law


def _load(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def castle_to_dict(castle: Castle) -> dict:
    return {
        "main_height": castle.main_height,
        "delta": show(castle.delta),
        "mass": show(castle.mass),
        "junk_measure": show(castle.junk_measure()),
        "columns": [
            {"id": c.id, "height": c.height,
             "cells": [{"id": cid, "width": show(w)} for cid, w in c.cells]}
            for c in castle.columns
        ],
        "stacking": [
            {"src_col": e.src_col, "src_lo": show(e.src_lo),
             "width": show(e.width), "dst_col": e.dst_col,
             "dst_lo": show(e.dst_lo)}
            for e in castle.edges
        ],
        "junk_columns": [c.id for c in castle.junk_columns()],
    }


def _plan(cfg: ExperimentConfig):
    return plan_schedule(cfg.targets, cfg.eps, cfg.seq, cfg.budgets, cfg.mode,
                         eps_overrides=cfg.eps_overrides,
                         alpha_overrides=cfg.alpha_overrides,
                         c_overrides=cfg.c_overrides,
                         n_floors=cfg.n_floors)


def cmd_validate(cfg: ExperimentConfig) -> int:
    print("configuration valid")
    print(f"  targets: {cfg.K}, mode: {cfg.mode}, eps: {show(cfg.eps)}, "
          f"preset: {cfg.preset}")
    return 0


def cmd_dry_run(cfg: ExperimentConfig, out_dir: str) -> int:
    if cfg.K == 0:
        _write_json(os.path.join(out_dir, "schedule.json"),
                    {"rows": [], "K": 0, "checks": []})
        print("empty schedule")
        return 0
    try:
        schedule = _plan(cfg)
    except BudgetExceeded as e:
        partial = getattr(e, "partial", None)
        payload = {"partial": True, "error": str(e)}
        if partial is not None:
            payload["schedule"] = partial.to_dict()
        _write_json(os.path.join(out_dir, "schedule.json"), payload)
        print(f"budget exhausted: {e}", file=sys.stderr)
        return 3
    rep = verify_schedule(schedule)
    payload = {"schedule": schedule.to_dict(), "checks": rep.to_dict(),
               "partial": False}
    _write_json(os.path.join(out_dir, "schedule.json"), payload)
    for row in schedule.rows:
        print(f"  k={row.k}: n={row.n} d={row.d} q={row.q} "
              f"alpha={show(row.alpha)} [{row.binding}]")
    ok = rep.all_pass()
    print("schedule invariants:", "pass" if ok else "FAIL")
    return 0 if ok else 4


def cmd_run(cfg: ExperimentConfig, out_dir: str) -> int:
    t0 = time.time()
    payload = {"partial": True, "timestamp": None}
    path = os.path.join(out_dir, "report.json")
    try:
        schedule = _plan(cfg)
        sched_rep = verify_schedule(schedule)
        components = 2 if cfg.preset == "nonergodic-pair" else 1
        result, reports = run_all(schedule, cfg.budgets, components,
                                  cfg.monte_carlo)
        reports.insert(0, sched_rep)
    except BudgetExceeded as e:
        payload["error"] = str(e)
        partial = getattr(e, "partial", None)
        if partial is not None:
            payload["schedule"] = partial.to_dict()
        payload["timestamp"] = time.time()
        _write_json(path, payload)
        print(f"budget exhausted: {e}", file=sys.stderr)
        return 3

    payload = {
        "partial": False,
        "mode": cfg.mode,
        "preset": cfg.preset,
        "schedule": schedule.to_dict(),
        "measure_of_A": show(result.measure),
        "residual_bounds": [show(r) for r in result.residuals],
        "checks": [r.to_dict() for r in reports],
        "elapsed_seconds": round(time.time() - t0, 3),
        "timestamp": time.time(),
    }
    _write_json(path, payload)

    for j in range(1, schedule.K + 1):
        law = result.union_law(j)
        target = schedule.row(j).target
        rows = cdf_table(law, target, None)
        csv_path = os.path.join(out_dir, f"cdf_{j}.csv")
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "F_exact", "F_target", "F_empirical"])
            for t, fe, ft, femp in rows:
                writer.writerow([show(t), show(fe), show(ft),
                                 "" if femp is None else show(femp)])

    if cfg.dump_castles:
        _write_json(os.path.join(out_dir, "castles.json"),
                    {"components": [castle_to_dict(b.castle)
                                    for b in result.components]})

    ok = all(r.all_pass() for r in reports)
    for r in reports:
        status = "pass" if r.all_pass() else "FAIL"
        print(f"  [{status}] {r.title} ({len(r.items)} checks)")
        for item in r.failures():
            print(f"      FAILED {item.name}: claimed {show(item.claimed)}, "
                  f"achieved {show(item.achieved)}")
    print(f"mu(A) = {show(result.measure)} (< eps = {show(schedule.eps)}:"
          f" {result.measure < schedule.eps})")
    print(f"report written to {path} in {payload['elapsed_seconds']}s")
    return 0 if ok else 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stacklaw",
        description="exact cutting-and-stacking construction and verification")
    parser.add_argument("command", choices=["validate", "dry-run", "run"])
    parser.add_argument("config", help="path to the JSON configuration")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--mode", choices=["strict", "relaxed"],
                        help="mode override")
    parser.add_argument("--dump-castles", action="store_true")
    args = parser.parse_args(argv)

    try:
        raw = json.loads(_load(args.config))
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.mode is not None:
            mode = raw.get("mode", {})
            if isinstance(mode, str):
                mode = {"name": mode}
            mode["name"] = args.mode
            raw["mode"] = mode
        if args.dump_castles:
            raw["dump_castles"] = True
        cfg = validate_config(raw)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2

    out_dir = args.out or os.environ.get("STACKLAW_OUT") or cfg.out_dir
    try:
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "dry-run":
            return cmd_dry_run(cfg, out_dir)
        return cmd_run(cfg, out_dir)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except BudgetExceeded as e:
        print(f"budget exhausted: {e}", file=sys.stderr)
        return 3
    except StacklawError as e:
        print(f"construction failed: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
