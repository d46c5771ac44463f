"""Command line front end.

    stabvs run   --stack vs --n 5 --init arbitrary --seed 3 [--out t.jsonl]
    stabvs fuzz  --scenario scenarios/vs_crash_recovery.json --seeds 0:50
    stabvs check t.jsonl [--name exactly-once-link]
    stabvs report t.jsonl --outdir report/

Every command that evaluates properties exits 0 only if they all hold.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import checkers
from .sim import SimConfig, run_sim
from .trace import Trace

CONFIG_FIELDS = {f.name for f in dataclasses.fields(SimConfig)}


def _config_from(args) -> SimConfig:
    base = {}
    if getattr(args, "scenario", None):
        with open(args.scenario) as fh:
            data = json.load(fh)
        unknown = set(data) - CONFIG_FIELDS
        if unknown:
            raise SystemExit(f"scenario has unknown fields: {sorted(unknown)}")
        base.update(data)
    for name in CONFIG_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    for key in ("writers", "readers"):
        if isinstance(base.get(key), str):
            base[key] = [int(x) for x in base[key].split(",") if x]
    if isinstance(base.get("crashes"), list):
        base["crashes"] = [[int(a), int(b)] for a, b in
                           (e.split(":") if isinstance(e, str) else e
                            for e in base["crashes"])]
    return SimConfig(**base)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--scenario", help="JSON file with SimConfig fields")
    p.add_argument("--n", type=int)
    p.add_argument("--capacity", type=int)
    p.add_argument("--stack", choices=("labels", "counters", "vs"))
    p.add_argument("--steps", type=int)
    p.add_argument("--init", choices=("clean", "arbitrary", "exhausted"))
    p.add_argument("--loss", type=float)
    p.add_argument("--dup", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--pce", type=int)
    p.add_argument("--quiesce", type=int)
    p.add_argument("--exhaustion", type=int)
    p.add_argument("--rnd-threshold", dest="rnd_threshold", type=int)
    p.add_argument("--workload", choices=("", "counter", "register"))
    p.add_argument("--writers", help="comma separated processor ids")
    p.add_argument("--readers", help="comma separated processor ids")
    p.add_argument("--period", type=int)
    p.add_argument("--ops-limit", dest="ops_limit", type=int)
    p.add_argument("--crash", dest="crashes", action="append",
                   metavar="STEP:PROC", help="crash PROC at STEP (repeatable)")
    p.add_argument("--crash-coordinator-at", dest="crash_coordinator_at", type=int)
    p.add_argument("--crash-follower-at", dest="crash_follower_at", type=int)


def _print_results(results, prefix="") -> bool:
    ok = True
    for res in results:
        print(prefix + res.line())
        ok = ok and res.ok
    return ok


def cmd_run(args) -> int:
    cfg = _config_from(args)
    trace = run_sim(cfg, args.seed)
    if args.out:
        trace.save(args.out)
        print(f"wrote {args.out} ({len(trace.records)} records)")
    if args.check or not args.out:
        return 0 if _print_results(checkers.run_checks(trace)) else 1
    return 0


def cmd_fuzz(args) -> int:
    cfg = _config_from(args)
    first, last = (int(x) for x in args.seeds.split(":"))
    failed = []
    for seed in range(first, last):
        trace = run_sim(cfg, seed)
        results = checkers.run_checks(trace)
        bad = [r for r in results if not r.ok]
        if bad:
            failed.append(seed)
            for r in bad:
                print(f"seed {seed}: {r.line()}")
    total = last - first
    print(f"{total - len(failed)}/{total} seeds clean"
          + (f", failing seeds: {failed}" if failed else ""))
    return 1 if failed else 0


def cmd_check(args) -> int:
    trace = Trace.load(args.trace)
    names = args.name or None
    return 0 if _print_results(checkers.run_checks(trace, names=names)) else 1


def cmd_report(args) -> int:
    from . import report  # matplotlib import stays off the fast paths
    trace = Trace.load(args.trace)
    results = checkers.run_checks(trace)
    files = report.write_report(trace, args.outdir, results=results)
    ok = _print_results(results)
    for f in files:
        print(f"wrote {f}")
    return 0 if ok else 1


def main(argv=None) -> int:
    top = argparse.ArgumentParser(prog="stabvs", description=__doc__,
                                  formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run one simulation")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the trace as JSON lines")
    p.add_argument("--check", action="store_true",
                   help="also evaluate the stack's properties")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("fuzz", help="run many seeds, checking each")
    _add_config_flags(p)
    p.add_argument("--seeds", default="0:20", metavar="FIRST:LAST")
    p.set_defaults(fn=cmd_fuzz)

    p = sub.add_parser("check", help="evaluate properties of a saved trace")
    p.add_argument("trace")
    p.add_argument("--name", action="append", choices=sorted(checkers.CHECKS),
                   help="specific check (repeatable; default: stack's set)")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("report", help="render figures and CSVs from a trace")
    p.add_argument("trace")
    p.add_argument("--outdir", default="report")
    p.set_defaults(fn=cmd_report)

    args = top.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
