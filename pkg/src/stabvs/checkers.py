"""Trace checkers for the stabilization and agreement properties.

Every checker consumes a finished trace (live or reloaded from JSONL) and
returns a CheckResult. Self-stabilizing properties hold from some point on,
so the convergence checkers accept a bounded anomaly prefix and report how
long it actually was; the agreement checkers are exact over the whole run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .counters import cmp_counter, counter_from_obj, counter_le
from .labels import Ordering


@dataclass
class CheckResult:
    name: str
    ok: bool
    info: dict = field(default_factory=dict)

    def line(self) -> str:
        extras = " ".join(f"{k}={v}" for k, v in sorted(self.info.items()))
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}" + (f" ({extras})" if extras else "")


def _live(trace) -> list[int]:
    snaps = trace.snapshots()
    return [p for p in sorted(snaps) if not snaps[p].get("crashed")]


def _creator_of(render: str) -> int:
    return int(render.split(":", 1)[0])


# -- labels -----------------------------------------------------------------------

def check_label_convergence(trace) -> CheckResult:
    """All live processors end on one common legit label, in every live slot."""
    snaps = trace.snapshots()
    live = _live(trace)
    tops = set()
    stale = 0
    for p in live:
        grid = snaps[p].get("max")
        if grid is None:
            return CheckResult("label-convergence", False, {"reason": "no label snapshot"})
        tops.add(grid[p]["ml"])
        if not grid[p]["legit"]:
            stale += 1
        for j in live:
            if grid[j]["ml"] != grid[p]["ml"] or not grid[j]["legit"]:
                stale += 1
    ok = len(tops) == 1 and stale == 0
    return CheckResult("label-convergence", ok,
                       {"labels": len(tops), "stale_slots": stale})


def check_adoption_bounds(trace, slack: int = 0) -> CheckResult:
    """No processor adopts more than n + m labels from the domain of any
    creator that stayed silent (never created) during the run."""
    head = trace.head()
    bound = head["cfg"]["n"] + head["m"] + slack
    created_by = {r["proc"] for r in trace.events(layer="labels", kind="create")}
    per: dict[tuple, int] = {}
    for r in trace.events(layer="labels", kind="adopt"):
        c = _creator_of(r["data"]["label"])
        if c in created_by:
            continue
        key = (r["proc"], c)
        per[key] = per.get(key, 0) + 1
    worst = max(per.values(), default=0)
    return CheckResult("adoption-bounds", worst <= bound,
                       {"worst": worst, "bound": bound})


# -- counters ---------------------------------------------------------------------

def check_counter_monotonicity(trace, max_prefix: int | None = None) -> CheckResult:
    """Whenever one increment finishes before another one starts, the later
    one returns the strictly greater counter. Overlapping increments are
    unordered (their writer ids already keep them distinct). Junk from the
    initial state may break this for a bounded prefix of completions: the
    prefix is measured, and by default must leave a clean majority of the
    completions behind it."""
    ops = []
    for kinds in (("inc_start", "inc_done"), ("reg_write_start", "reg_write_done")):
        ops += _ops(trace, *kinds)
    ops.sort(key=lambda op: op["done"])
    s = 0
    for i in range(len(ops)):
        for j in range(i + 1, len(ops)):
            if ops[i]["done"] < ops[j]["start"] and \
                    cmp_counter(ops[i]["counter"], ops[j]["counter"]) is not Ordering.LESS:
                s = max(s, i + 1)
    allowed = len(ops) // 2 if max_prefix is None else max_prefix
    return CheckResult("counter-monotonicity", s <= allowed,
                       {"completions": len(ops), "prefix": s,
                        "allowed": allowed})


def _ops(trace, start_kind, done_kind):
    starts = {}
    for r in trace.events(layer="counters", kind=start_kind):
        starts[(r["proc"], tuple(r["data"]["nonce"]))] = r["step"]
    out = []
    for r in trace.events(layer="counters", kind=done_kind):
        key = (r["proc"], tuple(r["data"]["nonce"]))
        d = r["data"]
        out.append({
            "proc": r["proc"],
            "start": starts.get(key, 0),
            "done": r["step"],
            "counter": counter_from_obj(d["body"]) if "body" in d else None,
            "value": d.get("value"),
            "absent": bool(d.get("absent")),
        })
    return out


def check_register_safety(trace) -> CheckResult:
    """Reads return witnessed values, never regress, and see every write
    that completed before they started."""
    writes = _ops(trace, "reg_write_start", "reg_write_done")
    writes += [op for op in _ops(trace, "inc_start", "inc_done")]
    reads = _ops(trace, "reg_read_start", "reg_read_done")
    witnessed = {(w["counter"], w["value"]) for w in writes}
    bad = []
    for r in reads:
        if r["absent"]:
            if any(w["done"] < r["start"] for w in writes):
                bad.append(("absent-after-write", r["start"]))
            continue
        if r["value"] != "" and (r["counter"], r["value"]) not in witnessed:
            bad.append(("unwitnessed", r["value"]))
        for w in writes:
            if w["done"] < r["start"] and not counter_le(w["counter"], r["counter"]):
                bad.append(("stale-read", r["done"]))
                break
    present = [r for r in reads if not r["absent"]]
    for a in present:
        for b in present:
            if a["done"] < b["start"] and not counter_le(a["counter"], b["counter"]):
                bad.append(("read-regression", b["done"]))
                break
    return CheckResult("register-safety", not bad,
                       {"writes": len(writes), "reads": len(reads),
                        "violations": bad[:5]})


# -- link -------------------------------------------------------------------------

def _suffix_cut(delivered, send_index) -> int:
    """Length of the anomaly prefix: the delivered tail after it maps to
    strictly consecutive positions in the send log."""
    s = len(delivered)
    nxt = None
    for t in range(len(delivered) - 1, -1, -1):
        idx = send_index.get(delivered[t])
        if idx is None or (nxt is not None and idx + 1 != nxt):
            break
        s = t
        nxt = idx
    return s


def check_exactly_once_link(trace, max_prefix: int | None = None) -> CheckResult:
    """Per direction: after a bounded stabilization prefix, the delivered
    payload sequence is a contiguous window of the sent sequence: nothing
    lost, duplicated or reordered."""
    head = trace.head()
    cap = head["cfg"]["capacity"]
    if max_prefix is None:
        max_prefix = 2 * cap + 3
    sends: dict[tuple, list] = {}
    delivered: dict[tuple, list] = {}
    for r in trace.events(layer="link", kind="link_send"):
        sends.setdefault((r["proc"], r["data"]["to"]), []).append(r["data"]["pkey"])
    for r in trace.events(layer="link", kind="link_deliver"):
        delivered.setdefault((r["data"]["frm"], r["proc"]), []).append(r["data"]["pkey"])
    worst = 0
    checked = 0
    for key, got in delivered.items():
        index = {pk: i for i, pk in enumerate(sends.get(key, []))}
        worst = max(worst, _suffix_cut(got, index))
        checked += 1
    return CheckResult("exactly-once-link", worst <= max_prefix,
                       {"directions": checked, "worst_prefix": worst,
                        "allowed": max_prefix})


# -- failure detector ---------------------------------------------------------------

def check_fd_completeness(trace, stale_allow: int | None = None) -> CheckResult:
    """Survivors expel every crashed processor (heartbeat saturated at the
    window) and keep trusting each other. Expulsion must come within the
    window many token deliveries after the last straggler token the crashed
    processor left in the channels, and at most stale_allow stragglers may
    arrive after the crash (default: twice the channel capacity)."""
    snaps = trace.snapshots()
    live = _live(trace)
    crash_at = {r["proc"]: r["step"]
                for r in trace.events(layer="sim", kind="crash")}
    crashed = sorted(crash_at)
    cap = trace.head().get("cfg", {}).get("capacity", 2)
    if stale_allow is None:
        stale_allow = 2 * cap
    bad = []
    slowest = 0
    for p in live:
        fd = snaps[p].get("fd")
        if fd is None:
            return CheckResult("fd-completeness", False, {"reason": "no fd snapshot"})
        window = fd["window"]
        arrivals = [(r["step"], r["data"]["frm"])
                    for r in trace.events(layer="link", kind="link_deliver")
                    if r["proc"] == p]
        suspects = {}
        for r in trace.events(layer="fd", kind="suspect"):
            if r["proc"] == p:
                suspects.setdefault(r["data"]["peer"], []).append(r["step"])
        for q in crashed:
            if q == p:
                continue
            if fd["hb"][q] < window:
                bad.append(("still-trusted", p, q))
                continue
            s = crash_at[q]
            stale = [t for t, frm in arrivals if t >= s and frm == q]
            if len(stale) > stale_allow:
                bad.append(("straggler-flood", p, q, len(stale)))
            # crash applies at the top of step s, so step s itself counts
            t0 = max(stale) if stale else s - 1
            hit = [t for t in suspects.get(q, ()) if t > t0]
            if not hit:
                bad.append(("no-suspect-event", p, q))
                continue
            waited = sum(1 for t, _ in arrivals if t0 < t <= hit[0])
            slowest = max(slowest, waited)
            if waited > window:
                bad.append(("late-suspect", p, q, waited))
        for q in live:
            if q != p and fd["hb"][q] >= window:
                bad.append(("expelled-live", p, q))
    return CheckResult("fd-completeness", not bad,
                       {"crashed": len(crashed), "slowest": slowest,
                        "violations": bad[:5]})


# -- group membership ------------------------------------------------------------------

def check_virtual_synchrony(trace, max_install_prefix: int = 4) -> CheckResult:
    """Processors deliver the same batch at the same (view, round); installed
    view ids grow once the initial junk is gone; live processors end in one
    common view."""
    per: dict[tuple, set] = {}
    for r in trace.events(layer="vs", kind="deliver"):
        per.setdefault((r["data"]["view"], r["data"]["rnd"]), set()).add(r["data"]["batch"])
    splits = sum(1 for v in per.values() if len(v) > 1)

    worst_prefix = 0
    installs: dict[int, list] = {}
    for r in trace.events(layer="vs", kind="install"):
        installs.setdefault(r["proc"], []).append(counter_from_obj(r["data"]["body"]))
    for seq in installs.values():
        s = 0
        for i in range(len(seq) - 1):
            if cmp_counter(seq[i], seq[i + 1]) is not Ordering.LESS:
                s = i + 1
        worst_prefix = max(worst_prefix, s)

    snaps = trace.snapshots()
    live = _live(trace)
    views = {snaps[p]["rep"]["view"] for p in live if "rep" in snaps[p]}
    ok = splits == 0 and worst_prefix <= max_install_prefix and len(views) == 1
    return CheckResult("virtual-synchrony", ok,
                       {"rounds": len(per), "splits": splits,
                        "install_prefix": worst_prefix,
                        "allowed": max_install_prefix,
                        "final_views": len(views)})


def check_smr_agreement(trace) -> CheckResult:
    """The replicated automaton: at every (view, round) all processors that
    applied a batch computed the same successor state, and none applied the
    same round twice."""
    per: dict[tuple, set] = {}
    seen: set = set()
    dups = 0
    for r in trace.events(layer="vs", kind="apply"):
        key = (r["data"]["view"], r["data"]["rnd"])
        per.setdefault(key, set()).add(r["data"]["digest"])
        pkey = (r["proc"],) + key
        if pkey in seen:
            dups += 1
        seen.add(pkey)
    splits = sum(1 for v in per.values() if len(v) > 1)
    return CheckResult("smr-agreement", splits == 0 and dups == 0,
                       {"rounds": len(per), "splits": splits, "dups": dups})


def check_single_proposal(trace) -> CheckResult:
    """No processor proposes twice against the same failure detector snapshot.

    The snapshot names a detector state period, not just a membership value:
    the same set can legitimately come back after a crash and recovery, so a
    repeat only counts when no trust or suspect transition separates the two
    proposals at that processor."""
    moves: dict[int, list] = {}
    for r in trace.events(layer="fd", kind="suspect"):
        moves.setdefault(r["proc"], []).append(r["step"])
    for r in trace.events(layer="fd", kind="trust"):
        moves.setdefault(r["proc"], []).append(r["step"])
    per: dict[tuple, list] = {}
    total = 0
    for r in trace.events(layer="vs", kind="propose"):
        per.setdefault((r["proc"], tuple(r["data"]["fdsnap"])), []).append(r["step"])
        total += 1
    bad = []
    for (proc, snap), steps in per.items():
        steps.sort()
        shifts = moves.get(proc, [])
        for t1, t2 in zip(steps, steps[1:]):
            if not any(t1 < t <= t2 for t in shifts):
                bad.append((proc, list(snap), t1, t2))
    return CheckResult("single-proposal", not bad,
                       {"proposals": total, "violations": bad[:5]})


# -- registry ----------------------------------------------------------------------

CHECKS = {
    "label-convergence": check_label_convergence,
    "adoption-bounds": check_adoption_bounds,
    "counter-monotonicity": check_counter_monotonicity,
    "register-safety": check_register_safety,
    "exactly-once-link": check_exactly_once_link,
    "fd-completeness": check_fd_completeness,
    "virtual-synchrony": check_virtual_synchrony,
    "smr-agreement": check_smr_agreement,
    "single-proposal": check_single_proposal,
}

BY_STACK = {
    "labels": ["label-convergence", "adoption-bounds", "exactly-once-link"],
    "counters": ["counter-monotonicity", "register-safety", "exactly-once-link"],
    "vs": ["exactly-once-link", "fd-completeness", "virtual-synchrony",
           "smr-agreement", "single-proposal"],
}


def applicable(trace) -> list[str]:
    return BY_STACK.get(trace.head().get("cfg", {}).get("stack"), [])


def run_checks(trace, names=None, **params) -> list[CheckResult]:
    names = names or applicable(trace)
    out = []
    for name in names:
        fn = CHECKS[name]
        kw = params.get(name, {}) if isinstance(params.get(name), dict) else {}
        out.append(fn(trace, **kw))
    return out
