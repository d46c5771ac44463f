"""Whole-system acceptance runs, one test per numbered criterion.

Each test prints its own "C<k> PASS/FAIL" scorecard line (visible with -s or
on failure) and `pytest -v` adds a verdict per criterion either way. Seed
batches are shared through module-scoped fixtures that reduce every run to a
few scalars; traces are dropped as soon as the checkers have seen them, so
the module stays within a small, flat memory envelope.

Tolerances are pinned from batch calibration on one core and are meant to be
loose enough to survive harmless drift but tight enough to catch real
regressions:

  C1  labels converge in every one of 500 runs, quiet tail >= 200 steps
      (calibrated minimum 1335), each run < 5 s (calibrated worst 0.16 s)
  C2  worst adoption count from a silent creator: 3 against a bound of 85
  C4  junk prefix <= 12 completions (calibrated worst 9), >= 14 completions
  C5  rollover restarts sequence numbers at 1 in 100/100 runs, prefix <= 2
  C7  5184 exhaustive one-slot starts plus 200 lossy fuzz runs, all clean
  C8  slowest suspicion exactly at the window (4n token deliveries)
  C9  zero delivery-set violations in 500 runs, each < 10 s (worst 0.57 s)
"""

import time

import pytest

from conftest import drive_adversarial_link_case
from stabvs import checkers
from stabvs.counters import Counter, CounterPair, CounterParams, CounterState
from stabvs.labeling import ProtocolParams, initial_label
from stabvs.link import ACK, DATA
from stabvs.sim import SimConfig, run_sim

SEEDS = 500


def report(cid, ok, detail):
    print(f"{cid} {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{cid}: {detail}"


# -- shared batches ----------------------------------------------------------


@pytest.fixture(scope="module")
def labels_batch():
    """500 label-stack runs from arbitrary states, up to two crashes each."""
    rows = []
    for seed in range(SEEDS):
        crashes = [[200 + 150 * k, k] for k in range(seed % 3)]
        cfg = SimConfig(n=5, capacity=2, stack="labels", steps=2000,
                        init="arbitrary", crashes=crashes)
        t0 = time.perf_counter()
        tr = run_sim(cfg, seed=seed)
        elapsed = time.perf_counter() - t0
        conv = checkers.check_label_convergence(tr)
        adopt = checkers.check_adoption_bounds(tr)
        moves = (tr.events(layer="labels", kind="adopt")
                 + tr.events(layer="labels", kind="create"))
        last = max((r["step"] for r in moves), default=0)
        rows.append({
            "seed": seed,
            "converged": conv.ok,
            "quiet_tail": cfg.steps - last,
            "adopt_ok": adopt.ok,
            "adopt_worst": adopt.info["worst"],
            "adopt_bound": adopt.info["bound"],
            "overflows": len(tr.events(kind="overflow")),
            "elapsed": elapsed,
        })
    return rows


@pytest.fixture(scope="module")
def counters_batch():
    """500 three-writer counter runs, every fourth one starting exhausted."""
    rows = []
    for seed in range(SEEDS):
        init = "exhausted" if seed % 4 == 0 else "arbitrary"
        cfg = SimConfig(n=5, capacity=2, stack="counters", steps=2600,
                        init=init, exhaustion=32, workload="counter",
                        writers=[0, 1, 2], period=25)
        tr = run_sim(cfg, seed=seed)
        res = checkers.check_counter_monotonicity(tr, max_prefix=12)
        rows.append({
            "seed": seed,
            "ok": res.ok,
            "prefix": res.info["prefix"],
            "completions": res.info["completions"],
            "overflows": len(tr.events(kind="overflow")),
        })
    return rows


@pytest.fixture(scope="module")
def vs_batch():
    """500 full-stack runs from arbitrary states; the coordinator crashes in
    the middle of a view and a follower in the middle of a later round."""
    names = ["virtual-synchrony", "smr-agreement", "single-proposal",
             "fd-completeness"]
    rows = []
    for seed in range(SEEDS):
        cfg = SimConfig(n=5, capacity=2, stack="vs", steps=6000,
                        init="arbitrary", crash_coordinator_at=2000,
                        crash_follower_at=3500)
        t0 = time.perf_counter()
        tr = run_sim(cfg, seed=seed)
        elapsed = time.perf_counter() - t0
        results = {r.name: r for r in checkers.run_checks(tr, names)}
        rows.append({
            "seed": seed,
            "elapsed": elapsed,
            "ok": {name: r.ok for name, r in results.items()},
            "fd_slowest": results["fd-completeness"].info.get("slowest", 0),
        })
    return rows


# -- labels ------------------------------------------------------------------


def test_c01_labels_converge_from_arbitrary_states(labels_batch):
    bad = [r["seed"] for r in labels_batch
           if not r["converged"] or r["quiet_tail"] < 200]
    slow = max(r["elapsed"] for r in labels_batch)
    tail = min(r["quiet_tail"] for r in labels_batch)
    ok = not bad and slow < 5.0
    report("C1", ok, f"{len(labels_batch)} runs, failures={bad[:5]}, "
                     f"min quiet tail={tail}, slowest={slow:.2f}s")


def test_c02_adoptions_from_silent_creators_stay_bounded(labels_batch):
    bad = [r["seed"] for r in labels_batch if not r["adopt_ok"]]
    worst = max(r["adopt_worst"] for r in labels_batch)
    report("C2", not bad, f"worst adoption count={worst} against "
                          f"bound={labels_batch[0]['adopt_bound']}, "
                          f"failures={bad[:5]}")


def test_c03_no_bounded_queue_overflows(labels_batch, counters_batch):
    total = (sum(r["overflows"] for r in labels_batch)
             + sum(r["overflows"] for r in counters_batch))
    runs = len(labels_batch) + len(counters_batch)
    report("C3", total == 0, f"{total} overflow events across {runs} runs")


# -- counters ------------------------------------------------------------------


def test_c04_counters_increase_after_junk_drains(counters_batch):
    bad = [r["seed"] for r in counters_batch
           if not r["ok"] or r["completions"] < 14]
    worst = max(r["prefix"] for r in counters_batch)
    floor = min(r["completions"] for r in counters_batch)
    report("C4", not bad, f"worst junk prefix={worst} of cap 12, "
                          f"fewest completions={floor}, failures={bad[:5]}")


def test_c05_exhausted_epochs_roll_over_and_restart_at_one():
    bad = []
    for seed in range(100):
        cfg = SimConfig(n=5, capacity=2, stack="counters", steps=2600,
                        init="exhausted", exhaustion=32, workload="counter",
                        writers=[0, 1, 2], period=25)
        tr = run_sim(cfg, seed=seed)
        creates = tr.events(layer="counters", kind="create")
        sqs = [r["data"]["body"]["sq"]
               for r in tr.events(layer="counters", kind="inc_done")]
        res = checkers.check_counter_monotonicity(tr, max_prefix=2)
        if not creates or min(sqs, default=0) != 1 or not res.ok:
            bad.append((seed, len(creates), min(sqs, default=None)))
    report("C5", not bad, f"100 exhausted starts, failures={bad[:5]}")


def test_c06_register_reads_return_the_written_value():
    # (a) one sequential write-then-read over a synchronous quorum pump
    p = CounterParams(ProtocolParams(n=3, m=4, own_cap=6, other_cap=4, k=12))
    scheme = p.proto.scheme()
    states = [CounterState(i, p) for i in range(3)]
    for st in states:
        for j in range(3):
            st.maxC[j] = CounterPair(Counter(initial_label(scheme, j), 0, j))

    def pump():
        moved, guard = True, 0
        while moved:
            moved = False
            guard += 1
            assert guard < 200, "quorum traffic does not settle"
            for i, st in enumerate(states):
                for j, other in enumerate(states):
                    if i == j:
                        continue
                    for rec in st.drain_outbox(j):
                        other.handle_record(i, rec)
                        moved = True

    states[0].start_write("v1")
    pump()
    got = []
    states[1].start_read(on_done=lambda res: got.append(res))
    pump()
    seq_ok = bool(got) and got[0] is not None and got[0][1] == "v1"

    # (b) 200 randomized multi-writer histories, half of them lossy
    bad = []
    fewest = 10 ** 9
    for seed in range(200):
        w = [[0], [0, 1], [0, 1, 2]][seed % 3]
        r = [[3, 4], [4], [2, 3, 4]][seed % 3]
        cfg = SimConfig(n=5, capacity=2, stack="counters", steps=3000,
                        workload="register", writers=w, readers=r,
                        period=25 + (seed % 4) * 15,
                        loss=0.05 if seed % 2 else 0.0)
        tr = run_sim(cfg, seed=seed)
        res = checkers.check_register_safety(tr)
        fewest = min(fewest, res.info["reads"], res.info["writes"])
        if not res.ok or res.info["reads"] < 5 or res.info["writes"] < 5:
            bad.append((seed, res.info["violations"][:2]))
    report("C6", seq_ok and not bad,
           f"sequential read={got[0][1] if got and got[0] else None!r}, "
           f"200 histories, fewest ops per side={fewest}, failures={bad[:3]}")


# -- link ----------------------------------------------------------------------


def test_c07_links_deliver_exactly_once_from_any_start():
    # (a) every one-slot initial state: 4 sender tags x 2 ack counts x 2 token
    # positions x 4 receiver tags x 9 channel contents each way = 5184 cases
    junk = ([None]
            + [(DATA, t, "G?") for t in range(4)]
            + [(ACK, t, "G?") for t in range(4)])
    cases = 0
    for tag in range(4):
        for ack_count in (0, 1):
            for ready in (False, True):
                for last_tag in range(4):
                    for ch_ab in junk:
                        for ch_ba in junk:
                            drive_adversarial_link_case(
                                tag, ack_count, ready, last_tag, ch_ab, ch_ba)
                            cases += 1

    # (b) lossy, duplicating fuzz at capacities 2 and 3
    fails = []
    worst = 0
    fewest = 10 ** 9
    for seed in range(200):
        cfg = SimConfig(n=4, capacity=2 + (seed % 2), stack="labels",
                        steps=2500, init="arbitrary", loss=0.15, dup=0.1,
                        quiesce=600)
        tr = run_sim(cfg, seed=seed)
        res = checkers.check_exactly_once_link(tr)
        worst = max(worst, res.info["worst_prefix"])
        fewest = min(fewest, res.info["directions"])
        if not res.ok:
            fails.append(seed)
    ok = cases == 5184 and not fails and fewest >= 8
    report("C7", ok, f"{cases} exhaustive cases, fuzz failures={fails[:5]}, "
                     f"worst junk prefix={worst}, "
                     f"fewest checked directions={fewest}")


# -- membership and replication --------------------------------------------------


def test_c08_crashed_peers_are_suspected_within_the_window(vs_batch):
    bad = [r["seed"] for r in vs_batch if not r["ok"]["fd-completeness"]]
    slowest = max(r["fd_slowest"] for r in vs_batch)
    ok = not bad and slowest <= 20  # window defaults to 4n
    report("C8", ok, f"failures={bad[:5]}, slowest suspicion={slowest} "
                     f"deliveries against window=20")


def test_c09_view_members_deliver_identical_message_sets(vs_batch):
    bad = [r["seed"] for r in vs_batch if not r["ok"]["virtual-synchrony"]]
    slow = max(r["elapsed"] for r in vs_batch)
    ok = not bad and slow < 10.0
    report("C9", ok, f"{len(vs_batch)} crash runs, failures={bad[:5]}, "
                     f"slowest={slow:.2f}s")


def test_c10_detector_periods_admit_one_proposal_each(vs_batch):
    bad = [r["seed"] for r in vs_batch if not r["ok"]["single-proposal"]]
    report("C10", not bad, f"failures={bad[:5]}")


def test_c11_replicas_apply_identical_state_chains(vs_batch):
    bad = [r["seed"] for r in vs_batch if not r["ok"]["smr-agreement"]]
    report("C11", not bad, f"failures={bad[:5]}")


# -- determinism -----------------------------------------------------------------


def test_c12_equal_seeds_reproduce_traces_byte_for_byte():
    combos = [
        (dict(n=5, capacity=2, stack="labels", steps=1500, init="arbitrary",
              crashes=[[300, 1]]), 7),
        (dict(n=5, capacity=2, stack="counters", steps=1500, init="exhausted",
              exhaustion=32, workload="counter", writers=[0, 1, 2],
              period=25), 11),
        (dict(n=5, capacity=2, stack="counters", steps=1500,
              workload="register", writers=[0, 1], readers=[3, 4], period=40,
              loss=0.05), 3),
        (dict(n=5, capacity=2, stack="vs", steps=4000, init="arbitrary",
              crash_coordinator_at=1500, crash_follower_at=2500), 5),
    ]
    bad = []
    for kw, seed in combos:
        one = run_sim(SimConfig(**kw), seed=seed).to_jsonl()
        two = run_sim(SimConfig(**kw), seed=seed).to_jsonl()
        if one != two:
            bad.append((kw["stack"], seed))
    report("C12", not bad, f"{len(combos)} configs re-run, mismatches={bad}")
