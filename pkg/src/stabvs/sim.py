"""Deterministic token-passing simulator with adversarial starts.

Wires n processors into a full mesh of token links (higher id is the active
side of each pair), stacks the chosen protocol layers on top, and drives
everything from one seeded scheduler. Each step either delivers one record
from one channel or fires one retransmission timer; losses, duplications and
overflow drops are rolls of the same generator, so a (config, seed) pair
fixes the entire run byte for byte.

Initial states are either converged ("clean") or adversarial ("arbitrary").
The arbitrary mode scrambles every label, counter, replica record, link tag
and channel slot from a seeded pool that deliberately includes same-creator
incomparable labels, exhausted counters and forged view records, which is
the territory the stabilization arguments have to cover.
"""

from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field

from . import automaton
from .counters import (Counter, CounterPair, CounterParams, CounterState,
                       cmp_counter)
from .fd import FailureDetector
from .labeling import LabelingState, LabelPair, ProtocolParams, initial_label
from .labels import Ordering, normalize_label
from .link import ACK, DATA, LinkEndpoint
from .trace import Trace
from .vs import (INSTALL, MULTICAST, PROPOSE, RepState, VsReplica,
                 bootstrap_rep, bootstrap_view_id)

STACKS = ("labels", "counters", "vs")

# Event kinds that reset the quiesce clock: anything that witnesses the
# protocols still reshaping their agreed state.
PROGRESS_KINDS = frozenset({
    "adopt", "create", "cancel", "purge_stale", "overflow",
    "propose", "install", "crash",
})


@dataclass
class SimConfig:
    n: int = 3
    capacity: int = 2
    stack: str = "vs"
    steps: int = 2000
    init: str = "clean"
    loss: float = 0.0
    dup: float = 0.0
    window: int = 0              # failure detector window, 0 picks 4n
    pce: int = 8                 # state piggybacking period for view rounds
    rnd_threshold: int = 2 ** 64
    exhaustion: int = 2 ** 64
    quiesce: int = 0             # stop after this many steps without progress
    crashes: list = field(default_factory=list)   # [[step, proc], ...]
    crash_coordinator_at: int = 0
    crash_follower_at: int = 0
    workload: str = ""           # "" | "counter" | "register"
    writers: list = field(default_factory=list)
    readers: list = field(default_factory=list)
    period: int = 25             # steps between workload waves
    ops_limit: int = 0           # completed-op cap per processor, 0 = none

    def __post_init__(self):
        if self.stack not in STACKS:
            raise ValueError(f"unknown stack {self.stack!r}")
        if self.init not in ("clean", "arbitrary", "exhausted"):
            raise ValueError(f"unknown init {self.init!r}")

    def total_channel_slots(self) -> int:
        """Upper bound on label pairs in transit: every directed channel can
        hold `capacity` records and each record carries two pairs."""
        return self.n * (self.n - 1) * self.capacity * 2


def _word(rng) -> str:
    return "z%d" % rng.randrange(10000)


class Simulator:
    def __init__(self, config: SimConfig, seed):
        self.cfg = config
        self.seed = seed
        self.rng = random.Random(f"{seed}:run")
        self.trace = Trace()
        self.step = 0
        self.last_progress = 0
        self.bid = 0
        self.crashed: set[int] = set()
        self.ops_count = [0] * config.n
        self._build()
        self.trace.header(cfg=asdict(config), seed=seed,
                          m=config.total_channel_slots(), version=1)
        if config.init == "arbitrary":
            self._inject_arbitrary()
        elif config.init == "exhausted":
            self._inject_exhausted()
        self._kick()

    # -- construction --------------------------------------------------------

    def _build(self):
        cfg = self.cfg
        n = cfg.n
        self.proto = ProtocolParams(n=n, m=cfg.total_channel_slots())
        scheme = self.proto.scheme()
        self.labeling: dict[int, LabelingState] = {}
        self.counters: dict[int, CounterState] = {}
        self.fd: dict[int, FailureDetector] = {}
        self.vs: dict[int, VsReplica] = {}

        top = initial_label(scheme, n - 1)
        for p in range(n):
            if cfg.stack == "labels":
                self.labeling[p] = LabelingState(
                    p, self.proto, emit=self._emitter(p, "labels"),
                    bootstrap_label=top)
                continue
            cparams = CounterParams(self.proto,
                                    exhaustion_threshold=cfg.exhaustion)
            if cfg.stack == "counters":
                boot = Counter(top, 0, 0)
                self.counters[p] = CounterState(
                    p, cparams, emit=self._emitter(p, "counters"),
                    bootstrap_counter=boot)
                continue
            boot = bootstrap_view_id(scheme, n)
            self.counters[p] = CounterState(
                p, cparams, emit=self._emitter(p, "counters"),
                bootstrap_counter=boot)
            fd = FailureDetector(p, n, window=cfg.window,
                                 emit=self._emitter(p, "fd"))
            for k in range(n):
                fd.crd_of[k] = 0
            fd.own_crd = 0
            self.fd[p] = fd
            self.vs[p] = VsReplica(
                p, n, self.counters[p], fd, emit=self._emitter(p, "vs"),
                pce=cfg.pce, rnd_threshold=cfg.rnd_threshold,
                bootstrap=bootstrap_rep(scheme, n))

        # full mesh of links: per pair the higher id runs the sender role
        self.endpoints: dict[tuple, LinkEndpoint] = {}
        self.channels: dict[tuple, list] = {}
        for i in range(n):
            for j in range(n):
                if i != j:
                    self.channels[(i, j)] = []
        for i in range(n):
            for j in range(i + 1, n):
                self.endpoints[(j, i)] = LinkEndpoint(
                    j, i, cfg.capacity, active=True,
                    handler=self._handler(j, i), emit=self._emitter(j, "link"))
                self.endpoints[(i, j)] = LinkEndpoint(
                    i, j, cfg.capacity, active=False,
                    handler=self._handler(i, j), emit=self._emitter(i, "link"))

    def _emitter(self, proc: int, layer: str):
        def emit(kind, **kw):
            self._ev(proc, layer, kind, kw)
        return emit

    def _ev(self, proc, layer, kind, data):
        self.trace.event(self.step, proc, layer, kind, data or None)
        if kind in PROGRESS_KINDS:
            self.last_progress = self.step

    def _handler(self, owner: int, peer: int):
        def handle(payload):
            return self._on_token(owner, peer, payload)
        return handle

    # -- token processing ------------------------------------------------------

    def _on_token(self, owner: int, peer: int, payload):
        """The link handed `owner` a completed exchange from `peer`: feed the
        bundle through every layer, then compose the reply bundle."""
        bundle = payload if isinstance(payload, dict) else {}
        fd = self.fd.get(owner)
        if fd is not None:
            # a round trip completed, so the peer was alive; a bundle carries
            # its coordinator announcement, garbage announces nothing
            if "crd" in bundle:
                fd.on_token(peer, bundle.get("crd"), announce=True)
            else:
                fd.on_token(peer)
        eng = self.labeling.get(owner)
        if eng is not None:
            lab = bundle.get("lab")
            if (isinstance(lab, tuple) and len(lab) == 2
                    and all(isinstance(x, LabelPair) for x in lab)):
                eng.on_receive(peer, lab[0].copy(), lab[1].copy())
        cst = self.counters.get(owner)
        if cst is not None:
            diff = bundle.get("diff")
            if (isinstance(diff, tuple) and len(diff) == 2
                    and all(isinstance(x, CounterPair) for x in diff)):
                cst.on_receive(peer, diff[0].copy(), diff[1].copy())
            for rec in bundle.get("q", ()):
                cst.handle_record(peer, rec)
        rep = self.vs.get(owner)
        if rep is not None:
            vsm = bundle.get("vs")
            if isinstance(vsm, RepState):
                rep.on_vs_message(peer, vsm)
            rep.iterate()
        return self._compose(owner, peer)

    def _compose(self, owner: int, peer: int):
        self.bid += 1
        out = {"bid": self.bid}
        eng = self.labeling.get(owner)
        if eng is not None:
            out["lab"] = eng.on_transmit_ready(peer)
        cst = self.counters.get(owner)
        if cst is not None:
            out["diff"] = cst.on_transmit_ready(peer)
            q = cst.drain_outbox(peer)
            if q:
                out["q"] = q
        rep = self.vs.get(owner)
        if rep is not None:
            out["crd"] = self.fd[owner].own_crd
            m = rep.drain_vs(peer)
            if m is not None:
                out["vs"] = m
        return out

    # -- initial states ----------------------------------------------------------

    def _kick(self):
        """Active sides holding the token open their first round."""
        for (owner, peer), ep in self.endpoints.items():
            if ep.active and ep.ready:
                ep.send(self._compose(owner, peer))
                self._flush(owner, peer)

    def _inject_arbitrary(self):
        rng = random.Random(f"{self.seed}:init")
        cfg = self.cfg
        n = cfg.n
        scheme = self.proto.scheme()
        d = scheme.domain_size
        k = scheme.k

        pool = []
        for _ in range(rng.randrange(8, 16)):
            pool.append(normalize_label(
                scheme, rng.randrange(n), rng.randrange(1, d + 1),
                rng.sample(range(1, d + 1), k)))
        # a same-creator incomparable pair: each sting sits in the other's
        # antisting set, so neither orders below the other
        c_star = rng.randrange(n)
        pool.append(normalize_label(scheme, c_star, 1,
                                    [2] + rng.sample(range(3, d + 1), k - 1)))
        pool.append(normalize_label(scheme, c_star, 2,
                                    [1] + rng.sample(range(3, d + 1), k - 1)))

        def rand_counter():
            seqn = rng.choice([0, 1, rng.randrange(0, 6),
                               cfg.exhaustion, cfg.exhaustion + rng.randrange(1, 4)])
            return Counter(rng.choice(pool), seqn, rng.randrange(n))

        def rand_members():
            size = rng.randrange(1, n + 1)
            return frozenset(rng.sample(range(n), size))

        for p in range(n):
            eng = self.labeling.get(p)
            if eng is not None:
                for j in range(n):
                    cl = rng.choice(pool) if rng.random() < 0.3 else None
                    eng.max[j] = LabelPair(rng.choice(pool), cl)
                for q in eng.stored:
                    q.clear()
                for _ in range(rng.randrange(0, 4)):
                    cl = rng.choice(pool) if rng.random() < 0.5 else None
                    pair = LabelPair(rng.choice(pool), cl)
                    # deliberately sometimes misfiled: the purge path must fire
                    eng.stored[rng.randrange(n)].add_front(pair)
            cst = self.counters.get(p)
            if cst is not None:
                for j in range(n):
                    cct = rand_counter() if rng.random() < 0.3 else None
                    cst.maxC[j] = CounterPair(rand_counter(), cct)
                for q in cst.stored:
                    q.clear()
                for _ in range(rng.randrange(0, 4)):
                    cct = rand_counter() if rng.random() < 0.5 else None
                    cst.stored[rng.randrange(n)].add_front(
                        CounterPair(rand_counter(), cct))
                if rng.random() < 0.7:
                    cst.reg_counter = rand_counter()
                    cst.reg_value = _word(rng)
                else:
                    cst.reg_counter = None
                    cst.reg_value = ""
            fd = self.fd.get(p)
            if fd is not None:
                for j in range(n):
                    if j != p:
                        fd.hb[j] = rng.randrange(0, fd.window + 1)
                    fd.crd_of[j] = rng.choice([None] + list(range(n)))
                fd.own_crd = rng.randrange(n)
                fd.crd_of[p] = fd.own_crd
            rep = self.vs.get(p)
            if rep is not None:
                for j in range(n):
                    state = rng.choice([None, automaton.initial_state(),
                                        _word(rng)])
                    msg = tuple(rng.choice([None, _word(rng)])
                                for _ in range(n))
                    rep.rep[j] = RepState(
                        rand_counter(), rand_members(),
                        rng.choice([MULTICAST, PROPOSE, INSTALL]),
                        rng.choice([0, 1, 2, rng.randrange(0, 50)]),
                        state, msg,
                        rng.choice([None, _word(rng)]),
                        rand_counter(), rand_members(),
                        rng.random() < 0.5, rand_members())

        span = 2 * cfg.capacity + 2
        for (owner, peer), ep in self.endpoints.items():
            if ep.active:
                ep.tag = rng.randrange(span)
                ep.ack_count = rng.randrange(0, cfg.capacity + 1)
                ep.ready = rng.random() < 0.4
                if not ep.ready:
                    ep.out_payload = rng.choice([None, _word(rng)])
            else:
                ep.last_tag = rng.randrange(span)
                ep.reply_payload = rng.choice([None, _word(rng)])
        for (src, dst), ch in self.channels.items():
            for _ in range(rng.randrange(0, cfg.capacity + 1)):
                kind = rng.choice([DATA, ACK])
                payload = rng.choice([None, _word(rng), self._forged(rng, pool)])
                ch.append(((kind, rng.randrange(span), payload), True))

    def _inject_exhausted(self):
        """Targeted worst case: every maximal counter starts at the
        exhaustion threshold, so the first increment anywhere has to shed
        the label and mint a fresh one."""
        scheme = self.proto.scheme()
        top = initial_label(scheme, self.cfg.n - 1)
        dead = Counter(top, self.cfg.exhaustion, 0)
        for cst in self.counters.values():
            for j in range(self.cfg.n):
                cst.maxC[j] = CounterPair(dead)
            for q in cst.stored:
                q.clear()
            cst.stored[top.creator].add_front(CounterPair(dead))
            cst.reg_counter = None
            cst.reg_value = ""

    def _forged(self, rng, pool):
        """A structurally plausible bundle built from adversarial material."""
        cfg = self.cfg
        out = {"bid": 0}
        def pair():
            cl = rng.choice(pool) if rng.random() < 0.5 else None
            return LabelPair(rng.choice(pool), cl)
        if cfg.stack == "labels":
            out["lab"] = (pair(), pair())
            return out
        def cpair():
            seqn = rng.choice([0, cfg.exhaustion])
            mct = Counter(rng.choice(pool), seqn, rng.randrange(cfg.n))
            cct = mct if rng.random() < 0.3 else None
            return CounterPair(mct, cct)
        out["diff"] = (cpair(), cpair())
        if cfg.stack == "vs":
            out["crd"] = rng.randrange(cfg.n)
        return out

    # -- crash handling ---------------------------------------------------------

    def _live(self) -> list[int]:
        return [p for p in range(self.cfg.n) if p not in self.crashed]

    def _current_coordinator(self) -> int:
        """The writer id of the greatest installed view id among live
        processors; falls back to the lowest live id."""
        live = self._live()
        best = None
        for p in live:
            vid = self.vs[p].rep[p].view_id
            if best is None or cmp_counter(vid, best) is Ordering.GREATER:
                best = vid
        wid = best.wid if best is not None else live[0]
        return wid if wid in live and wid not in self.crashed else live[0]

    def _crash(self, proc: int, role: str):
        if proc in self.crashed or len(self._live()) <= 1:
            return
        self.crashed.add(proc)
        self._ev(proc, "sim", "crash", {"role": role})
        for (src, dst), ch in self.channels.items():
            if dst == proc:
                ch.clear()

    def _apply_crashes(self):
        for entry in self.cfg.crashes:
            step, proc = entry[0], entry[1]
            if step == self.step:
                self._crash(proc, "scheduled")
        if self.vs:
            if self.cfg.crash_coordinator_at == self.step:
                self._crash(self._current_coordinator(), "coordinator")
            if self.cfg.crash_follower_at == self.step:
                crd = self._current_coordinator()
                for p in self._live():
                    if p != crd:
                        self._crash(p, "follower")
                        break

    # -- workload -----------------------------------------------------------------

    def _drive_workload(self):
        cfg = self.cfg
        if cfg.stack != "counters" or not cfg.workload:
            return
        if self.step % max(cfg.period, 1) != 0:
            return
        for w in cfg.writers:
            if w in self.crashed or self.counters[w].busy():
                continue
            if cfg.ops_limit and self.ops_count[w] >= cfg.ops_limit:
                continue
            self.ops_count[w] += 1
            if cfg.workload == "register":
                self.counters[w].start_write(f"w{w}.{self.ops_count[w]}")
            else:
                self.counters[w].start_increment()
        if cfg.workload == "register":
            for r in cfg.readers:
                if r in self.crashed or self.counters[r].busy():
                    continue
                if cfg.ops_limit and self.ops_count[r] >= cfg.ops_limit:
                    continue
                self.ops_count[r] += 1
                self.counters[r].start_read()

    # -- scheduler ----------------------------------------------------------------

    def _flush(self, owner: int, peer: int):
        """Move an endpoint's outbox into its channel, dropping on overflow."""
        ep = self.endpoints[(owner, peer)]
        ch = self.channels[(owner, peer)]
        for rec in ep.drain():
            if len(ch) < self.cfg.capacity:
                ch.append((rec, True))

    def _dispatch(self) -> bool:
        actions = []
        weights = []
        for key, ch in self.channels.items():
            if ch and key[1] not in self.crashed:
                actions.append(("deliver", key))
                weights.append(3)
        for key, ep in self.endpoints.items():
            if (ep.active and not ep.ready
                    and key[0] not in self.crashed
                    and key[1] not in self.crashed):
                actions.append(("tick", key))
                weights.append(1)
        if not actions:
            return False
        kind, key = self.rng.choices(actions, weights=weights)[0]
        if kind == "tick":
            owner, peer = key
            self.endpoints[key].on_tick()
            self._flush(owner, peer)
            return True
        src, dst = key
        ch = self.channels[key]
        rec, can_dup = ch.pop(0)
        if self.cfg.loss and self.rng.random() < self.cfg.loss:
            return True
        if (can_dup and self.cfg.dup and self.rng.random() < self.cfg.dup
                and len(ch) < self.cfg.capacity):
            # the copy stays at the head: duplication must not reorder the
            # channel, the receiver's freshness test relies on fifo delivery
            ch.insert(0, (rec, False))
        if dst in self.crashed:
            return True
        self.endpoints[(dst, src)].on_record(rec)
        self._flush(dst, src)
        return True

    # -- run ------------------------------------------------------------------------

    def run(self) -> Trace:
        cfg = self.cfg
        while self.step < cfg.steps:
            self.step += 1
            self._apply_crashes()
            self._drive_workload()
            alive = self._dispatch()
            if cfg.quiesce and self.step - self.last_progress > cfg.quiesce:
                break
            if not alive:
                break
        self._finish()
        return self.trace

    def _finish(self):
        for p in range(self.cfg.n):
            data = {"crashed": p in self.crashed}
            eng = self.labeling.get(p)
            if eng is not None:
                data["max"] = [{"ml": lp.ml.render_compact(),
                                "legit": lp.legit()} for lp in eng.max]
            cst = self.counters.get(p)
            if cst is not None:
                data["maxc"] = [{"ct": cp.mct.render(), "legit": cp.legit()}
                                for cp in cst.maxC]
                data["reg_value"] = cst.reg_value
                data["reg_counter"] = (cst.reg_counter.render()
                                       if cst.reg_counter else None)
            rep = self.vs.get(p)
            if rep is not None:
                data["rep"] = rep.rep[p].snapshot()
                data["fd"] = self.fd[p].snapshot()
            self.trace.snapshot(p, data)


def run_sim(config: SimConfig, seed) -> Trace:
    return Simulator(config, seed).run()
