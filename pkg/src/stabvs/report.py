"""Render a trace into figures and delimited files.

Output directory gets events.csv (every event, one row each), summary.csv
(one row per property check) and a couple of PNG figures: protocol activity
over time and a stack-specific progress curve.
"""

from __future__ import annotations

import csv
import json
import os
from collections import Counter, defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import checkers

PROTO_KINDS = ("adopt", "create", "cancel", "purge_stale", "overflow",
               "propose", "install", "crash", "inc_done", "reg_write_done",
               "reg_read_done", "deliver")


def _events_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "proc", "layer", "kind", "detail"])
        for r in trace.events():
            w.writerow([r["step"], r["proc"], r["layer"], r["kind"],
                        json.dumps(r.get("data", {}), sort_keys=True)])


def _summary_csv(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "ok", "info"])
        for res in results:
            w.writerow([res.name, "pass" if res.ok else "fail",
                        json.dumps(res.info, sort_keys=True, default=str)])


def _activity_png(trace, path):
    per = defaultdict(Counter)
    last = 1
    for r in trace.events():
        last = max(last, r["step"])
        if r["kind"] in PROTO_KINDS:
            per[r["kind"]][r["step"]] += 1
    fig, ax = plt.subplots(figsize=(9, 4.5))
    bins = max(last // 50, 1)
    for kind in sorted(per):
        steps = sorted(per[kind].elements())
        ax.hist(steps, bins=50, range=(0, last), histtype="step", label=kind)
    ax.set_xlabel("step")
    ax.set_ylabel(f"events per {bins}-step bin")
    ax.set_title("protocol activity")
    if per:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _progress_png(trace, path):
    stack = trace.head().get("cfg", {}).get("stack")
    fig, ax = plt.subplots(figsize=(9, 4.5))
    if stack == "vs":
        series = defaultdict(list)
        for r in trace.events(layer="vs", kind="deliver"):
            series[r["proc"]].append((r["step"], r["data"]["rnd"]))
        for p in sorted(series):
            xs, ys = zip(*series[p])
            ax.step(xs, ys, where="post", label=f"proc {p}")
        ax.set_ylabel("delivered round")
    elif stack == "counters":
        series = defaultdict(list)
        for r in trace.events(layer="counters"):
            if r["kind"] in ("inc_done", "reg_write_done"):
                series[r["proc"]].append((r["step"], r["data"]["body"]["sq"]))
        for p in sorted(series):
            xs, ys = zip(*series[p])
            ax.step(xs, ys, where="post", label=f"proc {p}")
        ax.set_ylabel("counter sequence number")
    else:
        series = defaultdict(list)
        count = Counter()
        for r in trace.events(layer="labels"):
            if r["kind"] in ("adopt", "create", "cancel"):
                count[r["proc"]] += 1
                series[r["proc"]].append((r["step"], count[r["proc"]]))
        for p in sorted(series):
            xs, ys = zip(*series[p])
            ax.step(xs, ys, where="post", label=f"proc {p}")
        ax.set_ylabel("cumulative label events")
    for r in trace.events(layer="sim", kind="crash"):
        ax.axvline(r["step"], color="red", linestyle=":", linewidth=1)
    ax.set_xlabel("step")
    ax.set_title(f"{stack} progress")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_report(trace, outdir, results=None) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    if results is None:
        results = checkers.run_checks(trace)
    files = []
    for name, fn in (("events.csv", lambda p: _events_csv(trace, p)),
                     ("summary.csv", lambda p: _summary_csv(results, p)),
                     ("activity.png", lambda p: _activity_png(trace, p)),
                     ("progress.png", lambda p: _progress_png(trace, p))):
        path = os.path.join(outdir, name)
        fn(path)
        files.append(path)
    return files
