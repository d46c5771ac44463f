"""Label exchange protocol.

Each processor keeps, per peer, the peer's last announced maximal label pair
(max[]) and, per creator, a bounded queue of label pairs it has seen from that
creator's domain (stored[]). A pair is legit while its cancel field is empty.
Every received announcement is filed, conflicting or dominated labels get
cancelled, cancellations propagate back to their creators, and each processor
adopts the greatest live label it knows -- minting a fresh one of its own only
when nothing live remains. Starting from any state this converges to one
globally agreed maximal label, with a bounded number of adoptions and label
creations along the way.
"""

from __future__ import annotations

from dataclasses import dataclass

from .labels import Label, Ordering, SchemeParams, cmp_label, label_le, next_label
from .queues import BoundedMtfQueue


class LabelPair:
    """A label plus the label that cancelled it (None while live)."""

    __slots__ = ("ml", "cl")

    def __init__(self, ml: Label, cl: Label | None = None):
        self.ml = ml
        self.cl = cl

    def legit(self) -> bool:
        return self.cl is None

    def copy(self) -> "LabelPair":
        return LabelPair(self.ml, self.cl)

    def __repr__(self):
        state = "live" if self.cl is None else f"cancelled by {self.cl.render_compact()}"
        return f"<{self.ml.render_compact()} {state}>"


def safe_own_capacity(n: int, m: int) -> int:
    """Own-domain queue bound that the convergence argument needs.

    Two candidate bounds circulate for this queue; they coincide in order of
    growth (cubic in n) but not in value, so take the larger.
    """
    return max(n * (n * n + m), 2 * (m * n + 2 * n * n - 2 * n) + 1)


def safe_other_capacity(n: int, m: int) -> int:
    return n + m


@dataclass
class ProtocolParams:
    """Sizing for one processor's label state.

    n processors, m = total label-pair capacity of all channels. With the
    defaults the scheme is in safe mode: queue bounds from n and m, and
    k = 2 * own capacity since label creation feeds both the label and the
    cancel field of every own-queue pair back into the scheme. Tests may pass
    explicit small values and own the resulting preconditions.
    """

    n: int
    m: int
    own_cap: int = 0
    other_cap: int = 0
    k: int = 0

    def __post_init__(self):
        if self.own_cap <= 0:
            self.own_cap = safe_own_capacity(self.n, self.m)
        if self.other_cap <= 0:
            self.other_cap = safe_other_capacity(self.n, self.m)
        if self.k <= 0:
            self.k = 2 * self.own_cap

    def scheme(self) -> SchemeParams:
        return SchemeParams(self.k)


def initial_label(params: SchemeParams, creator: int) -> Label:
    """The deterministic label a creator mints from an empty history."""
    return next_label(params, creator, [])


class LabelingState:
    """Per-processor protocol state plus the receive/transmit step logic."""

    def __init__(self, self_id: int, params: ProtocolParams, emit=None,
                 bootstrap_label: Label | None = None):
        self.self_id = self_id
        self.params = params
        self.scheme = params.scheme()
        self.emit = emit or (lambda kind, **kw: None)
        n = params.n
        self.stored = [
            BoundedMtfQueue(params.own_cap if j == self_id else params.other_cap)
            for j in range(n)
        ]
        boot = bootstrap_label or initial_label(self.scheme, self_id)
        self.max = [LabelPair(boot) for _ in range(n)]
        pair = LabelPair(boot)
        self.stored[boot.creator].add_front(pair)

    # -- predicates ---------------------------------------------------------

    def _double(self, q: BoundedMtfQueue, lp: LabelPair) -> bool:
        for other in q:
            if other is lp:
                continue
            if other.ml == lp.ml:
                return True
            if other.legit() and lp.legit():
                return True
        return False

    def stale_info(self) -> bool:
        """A pair filed under the wrong creator, a duplicated label, or two
        live pairs in one queue: all impossible once the protocol has run, so
        any of them marks leftover garbage worth a full purge."""
        for j, q in enumerate(self.stored):
            for lp in q:
                if lp.ml.creator != j:
                    return True
                if self._double(q, lp):
                    return True
        return False

    def legit_max_labels(self) -> list:
        return [p.ml for p in self.max if p.legit()]

    # -- queue helpers ------------------------------------------------------

    def _file(self, pair: LabelPair):
        q = self.stored[pair.ml.creator]
        evicted = q.add_front(pair)
        if evicted is not None:
            self.emit("overflow", queue=pair.ml.creator)

    # -- protocol steps -----------------------------------------------------

    def on_transmit_ready(self, peer: int):
        """Announcement for `peer`: own maximal plus what we last heard from
        them (so they learn when we consider their label cancelled)."""
        return self.max[self.self_id].copy(), self.max[peer].copy()

    def on_receive(self, frm: int, sent_max: LabelPair, last_sent: LabelPair):
        i = self.self_id
        n = self.params.n

        # (1) expose the sender's announced maximal
        self.max[frm] = sent_max.copy()

        # (2) the sender may have cancelled the label we are announcing
        if not last_sent.legit() and self.max[i].ml == last_sent.ml:
            self.max[i] = last_sent.copy()
            self.emit("cancel", label=last_sent.ml.render_compact())

        # (3) purge everything if the queues show impossible structure
        if self.stale_info():
            for q in self.stored:
                q.clear()
            self.emit("purge_stale")

        # (4) file unknown maximals under their creator
        for j in range(n):
            mj = self.max[j]
            q = self.stored[mj.ml.creator]
            if not any(lp.ml == mj.ml for lp in q):
                self._file(mj.copy())

        # (5) within each queue, cancel live pairs that something fails to sit below
        for q in self.stored:
            for lp in q:
                if not lp.legit():
                    continue
                challenger = None
                for other in q:
                    if not label_le(other.ml, lp.ml):
                        challenger = other.ml
                        break
                if challenger is not None:
                    lp.cl = challenger

        # (6) propagate cancellations carried by max[] into live stored twins
        for j in range(n):
            mj = self.max[j]
            if mj.legit():
                continue
            q = self.stored[mj.ml.creator]
            for lp in list(q):
                if lp.ml == mj.ml and lp.legit():
                    lp.cl = mj.cl
                    q.move_to_front(lp)

        # (7) remove duplicated records (defensive; unreachable after (3)-(6))
        for q in self.stored:
            for lp in list(q):
                if self._double(q, lp):
                    q.remove(lp)

        # (8) a live maximal with a cancelled stored twin is itself cancelled
        for j in range(n):
            mj = self.max[j]
            if not mj.legit():
                continue
            q = self.stored[mj.ml.creator]
            twin = None
            for lp in q:
                if lp.ml == mj.ml and not lp.legit():
                    twin = lp
                    break
            if twin is not None:
                self.max[j] = twin.copy()
                q.move_to_front(twin)
                if j == i:
                    self.emit("cancel", label=twin.ml.render_compact())

        # (9) adopt the greatest live label, else fall back to our own domain
        prev = self.max[i].ml
        best = None
        for j in range(n):
            if self.max[j].legit():
                cand = self.max[j].ml
                if best is None or cmp_label(best, cand) is Ordering.LESS:
                    best = cand
        if best is not None:
            self.max[i] = LabelPair(best)
            if best != prev:
                self.emit("adopt", label=best.render_compact())
        else:
            self._use_own_label(prev)

    def _use_own_label(self, prev: Label):
        i = self.self_id
        q = self.stored[i]
        reuse = None
        for lp in q:
            if lp.legit():
                reuse = lp
                break
        if reuse is not None:
            self.max[i] = reuse.copy()
            q.move_to_front(reuse)
            if reuse.ml != prev:
                self.emit("adopt", label=reuse.ml.render_compact())
        else:
            inputs = []
            for lp in q:
                inputs.append(lp.ml)
                if lp.cl is not None:
                    inputs.append(lp.cl)
            fresh = next_label(self.scheme, i, inputs)
            self.max[i] = LabelPair(fresh)
            self._file(LabelPair(fresh))
            self.emit("create", label=fresh.render_compact())
