"""Practically-unbounded counters over bounded labels, with quorum operations.

A counter is (lbl, seqn, wid): sequence numbers inside a label's epoch, writer
id as tiebreak, label order first. When a counter's sequence number reaches the
exhaustion threshold its pair is self-cancelled everywhere it is seen, which
eventually forces a fresh label and restarts sequence numbers from zero: with
a 64-bit threshold this never happens in honest runs, but an adversarial
initial state can plant exhausted counters, and the system must shed them.

The bookkeeping mirrors the label exchange protocol (one queue per creator
domain, pairs with a cancel slot, the same receive steps) keyed by the label
part of each counter, with per-label dedup that keeps the cancelled or
(seqn, wid)-greatest instance.

increment() is a quorum operation: read the maxima of a majority, pick the
greatest live non-exhausted counter, write (lbl, seqn+1, self) to a majority.
It is asynchronous here: an idle/reading/writing machine driven by reply
arrivals, with per-operation nonces so responses from stale operations (or
from the arbitrary initial state) are discarded. A replicated register rides
on top: write attaches a value to the incremented counter, read performs the
read phase, then writes back the greatest (counter, value) before returning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .labels import Label, Ordering, cmp_label, label_from_obj, label_le, next_label
from .labeling import ProtocolParams, initial_label
from .queues import BoundedMtfQueue

EXHAUSTION_DEFAULT = 2 ** 64


@dataclass(frozen=True)
class Counter:
    lbl: Label
    seqn: int
    wid: int

    def render(self) -> str:
        return f"{self.lbl.render_compact()}|{self.seqn}|{self.wid}"

    def to_obj(self):
        """JSON-safe structural form; round-trips through counter_from_obj."""
        return {"lbl": self.lbl.to_obj(), "sq": self.seqn, "wid": self.wid}


def counter_from_obj(obj) -> Counter:
    return Counter(label_from_obj(obj["lbl"]), int(obj["sq"]), int(obj["wid"]))


def cmp_counter(a: Counter, b: Counter) -> Ordering:
    """Label order first; within one label, (seqn, wid) totally ordered."""
    rel = cmp_label(a.lbl, b.lbl)
    if rel is not Ordering.EQUAL:
        return rel
    if (a.seqn, a.wid) == (b.seqn, b.wid):
        return Ordering.EQUAL
    return Ordering.LESS if (a.seqn, a.wid) < (b.seqn, b.wid) else Ordering.GREATER


def counter_le(a: Counter, b: Counter) -> bool:
    return cmp_counter(a, b) in (Ordering.LESS, Ordering.EQUAL)


class CounterPair:
    """A counter plus the counter that cancelled it (None while live)."""

    __slots__ = ("mct", "cct")

    def __init__(self, mct: Counter, cct: Counter | None = None):
        self.mct = mct
        self.cct = cct

    def legit(self) -> bool:
        return self.cct is None

    def copy(self) -> "CounterPair":
        return CounterPair(self.mct, self.cct)

    def __repr__(self):
        state = "live" if self.cct is None else "cancelled"
        return f"<{self.mct.render()} {state}>"


# wire records for the quorum machinery; the diffusion pair rides separately
@dataclass(frozen=True)
class QuorumRead:
    nonce: tuple


@dataclass(frozen=True)
class ReadReply:
    nonce: tuple
    mct: Counter
    cct: Counter | None
    value: str | None


@dataclass(frozen=True)
class QuorumWrite:
    nonce: tuple
    counter: Counter
    value: str


@dataclass(frozen=True)
class WriteAck:
    nonce: tuple


@dataclass
class CounterParams:
    proto: ProtocolParams
    exhaustion_threshold: int = EXHAUSTION_DEFAULT
    quorum_size: int = 0  # 0 -> majority

    def __post_init__(self):
        if self.exhaustion_threshold < 2:
            raise ValueError("exhaustion threshold must be >= 2")
        if self.quorum_size <= 0:
            self.quorum_size = self.proto.n // 2 + 1


@dataclass
class _Op:
    kind: str  # "inc", "write" or "read"
    nonce: tuple  # current phase nonce; the write phase draws a fresh one
    op_nonce: tuple  # identity used in start/done events
    phase: str  # "reading" or "writing"
    value: str
    responders: set = field(default_factory=set)
    replies: dict = field(default_factory=dict)
    new_counter: Counter | None = None
    result_value: str | None = None
    on_done: object = None


class CounterState:
    """Per-processor counter/register state and step logic."""

    def __init__(self, self_id: int, params: CounterParams, emit=None,
                 bootstrap_counter: Counter | None = None):
        self.self_id = self_id
        self.params = params
        self.proto = params.proto
        self.scheme = params.proto.scheme()
        self.emit = emit or (lambda kind, **kw: None)
        n = self.proto.n
        self.stored = [
            BoundedMtfQueue(self.proto.own_cap if j == self_id else self.proto.other_cap)
            for j in range(n)
        ]
        boot = bootstrap_counter or Counter(initial_label(self.scheme, self_id), 0, self_id)
        self.maxC = [CounterPair(boot) for _ in range(n)]
        self.stored[boot.lbl.creator].add_front(CounterPair(boot))
        # register projection: greatest written (counter, value) acknowledged here
        self.reg_counter: Counter | None = None
        self.reg_value: str = ""
        # quorum operation in flight, if any
        self.op: _Op | None = None
        self._nonce_seq = 0
        self.outbox: list = []  # (peer, record) pending transport pickup

    # -- basics ---------------------------------------------------------------

    def exhausted(self, pair: CounterPair) -> bool:
        return pair.mct.seqn >= self.params.exhaustion_threshold

    def _double(self, q, ctp) -> bool:
        for other in q:
            if other is ctp:
                continue
            if other.mct.lbl == ctp.mct.lbl:
                return True
            if other.legit() and ctp.legit():
                return True
        return False

    def stale_info(self) -> bool:
        for j, q in enumerate(self.stored):
            for ctp in q:
                if ctp.mct.lbl.creator != j:
                    return True
                if self._double(q, ctp):
                    return True
        return False

    def _enqueue(self, pair: CounterPair):
        """File a pair under its label creator, keeping one instance per label:
        a cancelled instance beats a live one, then the (seqn, wid)-greater."""
        q = self.stored[pair.mct.lbl.creator]
        match = None
        for other in q:
            if other.mct.lbl == pair.mct.lbl:
                match = other
                break
        if match is None:
            evicted = q.add_front(pair)
            if evicted is not None:
                self.emit("overflow", queue=pair.mct.lbl.creator)
            return
        if match.legit() != pair.legit():
            winner = match if not match.legit() else pair
        elif (pair.mct.seqn, pair.mct.wid) > (match.mct.seqn, match.mct.wid):
            winner = pair
        else:
            winner = match
        match.mct, match.cct = winner.mct, winner.cct
        q.move_to_front(match)

    def _cancel_exhausted_maxc(self):
        for pair in self.maxC:
            if self.exhausted(pair):
                pair.cct = pair.mct

    # -- diffusion ------------------------------------------------------------

    def on_transmit_ready(self, peer: int):
        return self.maxC[self.self_id].copy(), self.maxC[peer].copy()

    def on_receive(self, frm: int, sent_max: CounterPair, last_sent: CounterPair):
        sent_max = sent_max.copy()
        last_sent = last_sent.copy()
        for q in self.stored:
            for ctp in q:
                if ctp.legit() and self.exhausted(ctp):
                    ctp.cct = ctp.mct
        for pair in (sent_max, last_sent):
            if self.exhausted(pair):
                pair.cct = pair.mct
        self._cancel_exhausted_maxc()
        self.process(frm, sent_max, last_sent)

    def process(self, frm: int | None = None, sent_max: CounterPair | None = None,
                last_sent: CounterPair | None = None):
        i = self.self_id
        n = self.proto.n

        if frm is not None:
            # (1) expose the sender's announced maximal
            self.maxC[frm] = sent_max.copy()
            # (2) the sender may have cancelled the counter label we announce
            if not last_sent.legit() and self.maxC[i].mct.lbl == last_sent.mct.lbl:
                self.maxC[i] = last_sent.copy()
                self.emit("cancel", counter=last_sent.mct.render())

        # (3) purge on impossible queue structure
        if self.stale_info():
            for q in self.stored:
                q.clear()
            self.emit("purge_stale")

        # (4) file every maximal; enqueue dedup keeps the strongest instance
        for j in range(n):
            self._enqueue(self.maxC[j].copy())

        # (5) cancel live pairs whose label something fails to sit below
        for q in self.stored:
            for ctp in q:
                if not ctp.legit():
                    continue
                challenger = None
                for other in q:
                    if not label_le(other.mct.lbl, ctp.mct.lbl):
                        challenger = other.mct
                        break
                if challenger is not None:
                    ctp.cct = challenger

        # (6) propagate cancellations from maxC[] into live stored twins
        for j in range(n):
            mj = self.maxC[j]
            if mj.legit():
                continue
            q = self.stored[mj.mct.lbl.creator]
            for ctp in list(q):
                if ctp.mct.lbl == mj.mct.lbl and ctp.legit():
                    ctp.mct, ctp.cct = mj.mct, mj.cct
                    q.move_to_front(ctp)

        # (7) remove duplicated records (defensive)
        for q in self.stored:
            for ctp in list(q):
                if self._double(q, ctp):
                    q.remove(ctp)

        # (8) a live maximal with a cancelled stored twin is itself cancelled
        for j in range(n):
            mj = self.maxC[j]
            if not mj.legit():
                continue
            q = self.stored[mj.mct.lbl.creator]
            twin = None
            for ctp in q:
                if ctp.mct.lbl == mj.mct.lbl and not ctp.legit():
                    twin = ctp
                    break
            if twin is not None:
                self.maxC[j] = twin.copy()
                q.move_to_front(twin)
                if j == i:
                    self.emit("cancel", counter=twin.mct.render())

        # (9) adopt the greatest live counter, else fall back to own domain
        prev = self.maxC[i].mct
        best = None
        for j in range(n):
            pj = self.maxC[j]
            if not pj.legit():
                continue
            c = pj.mct
            if best is None:
                best = c
                continue
            rel = cmp_label(best.lbl, c.lbl)
            if rel is Ordering.LESS:
                best = c
            elif rel is Ordering.EQUAL and (c.seqn, c.wid) > (best.seqn, best.wid):
                best = c
        if best is not None:
            self.maxC[i] = CounterPair(best)
            if best.lbl != prev.lbl:
                self.emit("adopt", counter=best.render())
        else:
            self._use_own_counter(prev)

    def _use_own_counter(self, prev: Counter):
        i = self.self_id
        q = self.stored[i]
        reuse = None
        for ctp in q:
            if ctp.legit():
                reuse = ctp
                break
        if reuse is not None:
            self.maxC[i] = reuse.copy()
            q.move_to_front(reuse)
            if reuse.mct.lbl != prev.lbl:
                self.emit("adopt", counter=reuse.mct.render())
        else:
            inputs = []
            for ctp in q:
                inputs.append(ctp.mct.lbl)
                if ctp.cct is not None:
                    inputs.append(ctp.cct.lbl)
            fresh = Counter(next_label(self.scheme, i, inputs), 0, i)
            self.maxC[i] = CounterPair(fresh)
            self._enqueue(CounterPair(fresh))
            self.emit("create", counter=fresh.render())

    def find_max_counter(self):
        """Settle maxC[self] on the greatest live counter of the greatest
        label: housekeeping pass plus seqn/wid refinement within that label."""
        i = self.self_id
        self._cancel_exhausted_maxc()
        self.process()
        mylbl = self.maxC[i].mct.lbl
        best = None
        for pair in self.maxC:
            if pair.legit() and pair.mct.lbl == mylbl:
                c = pair.mct
                if best is None or (c.seqn, c.wid) > (best.seqn, best.wid):
                    best = c
        if best is not None:
            self.maxC[i] = CounterPair(best)

    def _settle_live_counter(self):
        """find_max_counter until the settled counter is live and has room."""
        i = self.self_id
        for _ in range(self.proto.n + 3):
            self.find_max_counter()
            if self.maxC[i].legit() and not self.exhausted(self.maxC[i]):
                return
        raise RuntimeError("could not settle on a usable counter")

    # -- quorum operations ------------------------------------------------------

    def _next_nonce(self) -> tuple:
        self._nonce_seq += 1
        return (self.self_id, self._nonce_seq)

    def _send_all(self, record):
        for j in range(self.proto.n):
            if j != self.self_id:
                self.outbox.append((j, record))

    def busy(self) -> bool:
        return self.op is not None

    def start_increment(self, value: str = "", on_done=None, kind: str = "inc"):
        if self.op is not None:
            raise RuntimeError("quorum operation already in flight")
        nonce = self._next_nonce()
        op = _Op(kind=kind, nonce=nonce, op_nonce=nonce, phase="reading",
                 value=value, on_done=on_done)
        self.op = op
        self.emit("reg_write_start" if kind == "write" else "inc_start",
                  nonce=list(nonce))
        self._send_all(QuorumRead(nonce))
        self._self_read_reply(op)

    def start_write(self, value: str, on_done=None):
        """Register write: an increment that attaches a value to the result."""
        self.start_increment(value=value, on_done=on_done, kind="write")

    def start_read(self, on_done=None):
        if self.op is not None:
            raise RuntimeError("quorum operation already in flight")
        nonce = self._next_nonce()
        op = _Op(kind="read", nonce=nonce, op_nonce=nonce, phase="reading",
                 value="", on_done=on_done)
        self.op = op
        self.emit("reg_read_start", nonce=list(nonce))
        self._send_all(QuorumRead(nonce))
        self._self_read_reply(op)

    def _self_read_reply(self, op):
        pair, value = self._read_response()
        self._accept_read_reply(self.self_id, op.nonce, pair, value)

    def _read_response(self):
        """What a read request is answered with: our settled maximal plus the
        register value when it belongs to that same counter."""
        self.find_max_counter()
        pair = self.maxC[self.self_id].copy()
        value = None
        if self.reg_counter is not None and self.reg_counter == pair.mct:
            value = self.reg_value
        return pair, value

    def on_quorum_read(self, frm: int, rec: QuorumRead):
        pair, value = self._read_response()
        self.outbox.append((frm, ReadReply(rec.nonce, pair.mct, pair.cct, value)))

    def on_read_reply(self, frm: int, rec: ReadReply):
        op = self.op
        if op is None or op.phase != "reading" or rec.nonce != op.nonce:
            return  # stale response, discard
        self._accept_read_reply(frm, rec.nonce, CounterPair(rec.mct, rec.cct), rec.value)

    def _accept_read_reply(self, frm: int, nonce: tuple, pair: CounterPair,
                           value: str | None):
        op = self.op
        if frm != self.self_id:
            self.maxC[frm] = pair.copy()
        op.responders.add(frm)
        op.replies[frm] = (pair, value)
        if len(op.responders) >= self.params.quorum_size:
            self._read_phase_done(op)

    def _read_phase_done(self, op):
        if op.kind in ("inc", "write"):
            self._settle_live_counter()
            base = self.maxC[self.self_id].mct
            op.new_counter = Counter(base.lbl, base.seqn + 1, self.self_id)
            op.result_value = op.value
        else:
            best = None
            for pair, _ in op.replies.values():
                if not pair.legit() or self.exhausted(pair):
                    continue
                c = pair.mct
                if best is None:
                    best = c
                    continue
                rel = cmp_counter(best, c)
                if rel is Ordering.LESS:
                    best = c
                elif rel is Ordering.INCOMPARABLE:
                    best = None  # no settled maximum yet
                    break
            if best is None:
                self.op = None
                self.emit("reg_read_done", nonce=list(op.op_nonce), absent=True)
                if op.on_done:
                    op.on_done(None)
                return
            value = ""
            for pair, val in op.replies.values():
                if pair.mct == best and val is not None:
                    value = val
                    break
            op.new_counter = best
            op.result_value = value
        op.phase = "writing"
        op.responders = set()
        op.nonce = self._next_nonce()
        self._send_all(QuorumWrite(op.nonce, op.new_counter, op.result_value))
        self._apply_write(op.new_counter, op.result_value)
        self._accept_write_ack(self.self_id, op.nonce)

    def _apply_write(self, counter: Counter, value: str, frm: int | None = None):
        """Store an incoming written counter: slot maximum, own-domain filing,
        exhaustion check, register projection."""
        slot = frm if frm is not None else self.self_id
        if cmp_counter(counter, self.maxC[slot].mct) is Ordering.GREATER:
            self.maxC[slot] = CounterPair(counter)
        if counter.lbl.creator == self.self_id:
            self._enqueue(CounterPair(counter))
        if self.exhausted(self.maxC[slot]):
            self.maxC[slot].cct = self.maxC[slot].mct
        if self.reg_counter is None or cmp_counter(self.reg_counter, counter) is Ordering.LESS:
            self.reg_counter = counter
            self.reg_value = value

    def on_quorum_write(self, frm: int, rec: QuorumWrite):
        self._apply_write(rec.counter, rec.value, frm=frm)
        self.outbox.append((frm, WriteAck(rec.nonce)))

    def on_write_ack(self, frm: int, rec: WriteAck):
        op = self.op
        if op is None or op.phase != "writing" or rec.nonce != op.nonce:
            return
        self._accept_write_ack(frm, rec.nonce)

    def _accept_write_ack(self, frm: int, nonce: tuple):
        op = self.op
        op.responders.add(frm)
        if len(op.responders) < self.params.quorum_size:
            return
        self.op = None
        if op.kind in ("inc", "write"):
            self.maxC[self.self_id] = CounterPair(op.new_counter)
            self._enqueue(CounterPair(op.new_counter))
            self.emit("reg_write_done" if op.kind == "write" else "inc_done",
                      nonce=list(op.op_nonce), counter=op.new_counter.render(),
                      body=op.new_counter.to_obj(), value=op.value)
        else:
            self.emit("reg_read_done", nonce=list(op.op_nonce),
                      counter=op.new_counter.render(),
                      body=op.new_counter.to_obj(), value=op.result_value)
        if op.on_done:
            op.on_done((op.new_counter, op.result_value))

    # -- transport glue ---------------------------------------------------------

    def handle_record(self, frm: int, rec):
        if isinstance(rec, QuorumRead):
            self.on_quorum_read(frm, rec)
        elif isinstance(rec, ReadReply):
            self.on_read_reply(frm, rec)
        elif isinstance(rec, QuorumWrite):
            self.on_quorum_write(frm, rec)
        elif isinstance(rec, WriteAck):
            self.on_write_ack(frm, rec)

    def drain_outbox(self, peer: int) -> list:
        out = [rec for p, rec in self.outbox if p == peer]
        if out:
            self.outbox = [(p, rec) for p, rec in self.outbox if p != peer]
        return out
