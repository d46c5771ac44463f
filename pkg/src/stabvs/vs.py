"""Coordinator-based group membership with virtually synchronous multicast.

Views are identified by counters from the increment layer, so view ids are
totally ordered once labels settle, and the processor that minted the id
(its wid) is the view's coordinator. Each processor keeps a replica record per
peer: its view, status (Multicast, Propose, Install), round number, automaton
state, last delivered batch, pending input, current proposal, and failure
detector snapshot. Records are exchanged coordinator-to-all and all-to-
coordinator; multicast rounds advance when the coordinator sees every member
echo its (view, round).

A processor seems to be a coordinator if its own record says so consistently
(it proposed the view id it announces, with itself inside, a majority behind
it, and mutual trust with everyone we hear from); among seeming coordinators
only the one with the greatest proposal id is valid, and incomparable proposal
ids leave nobody valid until the counter layer sorts itself out. When a
majority sees no valid coordinator, or the valid coordinator's membership
drifts from its failure detector, a new view is proposed around a freshly
incremented counter. Proposals consume the increment asynchronously: the guard
starts an increment, and the result is committed only if the guard still holds
when it completes, so one membership change yields one proposal.

A round number is bounded; a coordinator that finds it exhausted (or sees a
same-view member claiming a greater one, which only an arbitrary start can
produce) re-proposes its view to reset the count. Outgoing records blank the
automaton state except every PCE-th round; the receiver restores it from its
own replica, which is safe because a same-round replica is identical.
"""

from __future__ import annotations

from . import automaton
from .counters import Counter, CounterState, cmp_counter
from .fd import FailureDetector
from .labels import Ordering
from .labeling import initial_label

MULTICAST = "Multicast"
PROPOSE = "Propose"
INSTALL = "Install"

RND_THRESHOLD_DEFAULT = 2 ** 64


class RepState:
    """One processor's replica record, as gossiped."""

    __slots__ = ("view_id", "view_set", "status", "rnd", "state", "msg",
                 "input", "prop_id", "prop_set", "no_crd", "fd")

    def __init__(self, view_id: Counter, view_set: frozenset, status: str,
                 rnd: int, state, msg: tuple, input, prop_id: Counter,
                 prop_set: frozenset, no_crd: bool, fd: frozenset):
        self.view_id = view_id
        self.view_set = frozenset(view_set)
        self.status = status
        self.rnd = rnd
        self.state = state
        self.msg = tuple(msg)
        self.input = input
        self.prop_id = prop_id
        self.prop_set = frozenset(prop_set)
        self.no_crd = no_crd
        self.fd = frozenset(fd)

    def copy(self) -> "RepState":
        return RepState(self.view_id, self.view_set, self.status, self.rnd,
                        self.state, self.msg, self.input, self.prop_id,
                        self.prop_set, self.no_crd, self.fd)

    def snapshot(self) -> dict:
        return {
            "view": self.view_id.render(),
            "members": sorted(self.view_set),
            "status": self.status,
            "rnd": self.rnd,
            "state": self.state,
            "prop": self.prop_id.render(),
            "prop_members": sorted(self.prop_set),
            "no_crd": self.no_crd,
            "fd": sorted(self.fd),
        }


def bootstrap_view_id(scheme, n: int) -> Counter:
    """The agreed view id of a converged start: coordinator 0, the greatest
    initial label, one increment consumed."""
    return Counter(initial_label(scheme, n - 1), 1, 0)


def bootstrap_rep(scheme, n: int, state=None) -> RepState:
    vid = bootstrap_view_id(scheme, n)
    members = frozenset(range(n))
    return RepState(vid, members, MULTICAST, 0,
                    state if state is not None else automaton.initial_state(),
                    tuple(None for _ in range(n)), None, vid, members, False,
                    members)


class VsReplica:
    def __init__(self, self_id: int, n: int, counters: CounterState,
                 fd: FailureDetector, feed=None, emit=None, pce: int = 8,
                 rnd_threshold: int = RND_THRESHOLD_DEFAULT,
                 bootstrap: RepState | None = None):
        self.self_id = self_id
        self.n = n
        self.counters = counters
        self.fd = fd
        self.feed = feed or automaton.InputFeed(self_id)
        self.emit = emit or (lambda kind, **kw: None)
        self.pce = pce
        self.rnd_threshold = rnd_threshold
        base = bootstrap or bootstrap_rep(counters.scheme, n)
        self.rep = [base.copy() for _ in range(n)]
        self.vs_outbox: dict[int, RepState] = {}
        self._inc_result: Counter | None = None
        self._inc_pending = False

    # -- membership evaluation -------------------------------------------------

    def _seeming_coordinators(self, fd_out: dict) -> set[int]:
        n2 = self.n // 2
        seem = set()
        for l in fd_out:
            rl = self.rep[l]
            if rl.prop_id.wid != l:
                continue
            if len(rl.prop_set) <= n2 or len(rl.fd) <= n2 or l not in rl.prop_set:
                continue
            if not all((k in rl.prop_set) == (l in self.rep[k].fd) for k in fd_out):
                continue
            if rl.status == MULTICAST:
                if rl.view_id != rl.prop_id or rl.view_set != rl.prop_set:
                    continue
                if fd_out.get(l) != l:
                    continue
            elif rl.status == INSTALL:
                if fd_out.get(l) != l:
                    continue
            seem.add(l)
        return seem

    def _valid_coordinators(self, seem: set[int]) -> set[int]:
        val = set()
        for l in seem:
            pid = self.rep[l].prop_id
            if all(cmp_counter(self.rep[k].prop_id, pid)
                   in (Ordering.LESS, Ordering.EQUAL) for k in seem):
                val.add(l)
        return val

    def _want_propose(self, fd_set: frozenset, val: set, seem: set) -> bool:
        i = self.self_id
        n2 = self.n // 2
        if len(fd_set) <= n2:
            return False
        r = self.rep[i]
        arm_elect = (len(val) != 1 and
                     sum(1 for k in fd_set
                         if i in self.rep[k].fd and self.rep[k].no_crd) > n2)
        if arm_elect and r.status == PROPOSE and r.prop_set == fd_set \
                and r.prop_id.wid == i:
            # this membership was already proposed; re-propose only if a rival
            # proposal with an unordered id blocks everyone from winning
            poisoned = any(
                cmp_counter(self.rep[l].prop_id, r.prop_id) is Ordering.INCOMPARABLE
                for l in seem)
            if not poisoned:
                arm_elect = False
        arm_reshape = (val == {i} and fd_set != r.prop_set and
                       sum(1 for k in fd_set
                           if self.rep[k].prop_id == r.prop_id
                           and self.rep[k].prop_set == r.prop_set) > n2)
        arm_rnd = (val == {i} and r.status == MULTICAST and
                   (r.rnd >= self.rnd_threshold or
                    any(self.rep[j].view_id == r.view_id
                        and self.rep[j].view_set == r.view_set
                        and self.rep[j].rnd > r.rnd
                        for j in r.view_set if j != i)))
        return arm_elect or arm_reshape or arm_rnd

    # -- the do-forever body -----------------------------------------------------

    def iterate(self):
        i = self.self_id
        r = self.rep[i]
        fd_out = self.fd.output()
        fd_set = frozenset(fd_out)
        r.fd = fd_set
        seem = self._seeming_coordinators(fd_out)
        val = self._valid_coordinators(seem)
        r.no_crd = len(val) != 1
        self.fd.set_own_coordinator(next(iter(val)) if len(val) == 1 else None)

        if self._want_propose(fd_set, val, seem):
            if self._inc_result is not None:
                cnt = self._inc_result
                self._inc_result = None
                r.status = PROPOSE
                r.prop_id = cnt
                r.prop_set = fd_set
                self.emit("propose", view=cnt.render(),
                          members=sorted(fd_set), fdsnap=sorted(fd_set))
            elif not self._inc_pending and not self.counters.busy():
                self._inc_pending = True
                self.counters.start_increment(on_done=self._inc_done)
        else:
            self._inc_result = None  # guard lapsed, drop the stale counter
            if val == {i}:
                self._coordinator_step()
            elif len(val) == 1:
                self._follower_step(next(iter(val)))

        self._queue_sends(seem, val, fd_set)

    def _inc_done(self, result):
        self._inc_pending = False
        self._inc_result = result[0] if result else None

    # -- coordinator ----------------------------------------------------------

    def _round_view_done(self, r) -> bool:
        return all(self.rep[j].view_id == r.view_id
                   and self.rep[j].view_set == r.view_set
                   and self.rep[j].status == r.status
                   and self.rep[j].rnd == r.rnd
                   for j in r.view_set if j != self.self_id)

    def _round_prop_done(self, r, statuses) -> bool:
        return all(self.rep[j].prop_id == r.prop_id
                   and self.rep[j].prop_set == r.prop_set
                   and self.rep[j].status in statuses
                   for j in r.prop_set if j != self.self_id)

    def _coordinator_step(self):
        i = self.self_id
        r = self.rep[i]
        if r.status == MULTICAST:
            if not self._round_view_done(r):
                return
            batch = r.msg
            new_state = automaton.apply_batch(r.state, batch)
            self._emit_delivery(r.view_id, r.rnd, batch, new_state)
            r.state = new_state
            r.input = self.feed.fetch()
            r.msg = tuple(self.rep[j].input if j in r.view_set else None
                          for j in range(self.n))
            r.rnd += 1
        elif r.status == PROPOSE:
            if not self._round_prop_done(r, (PROPOSE,)):
                return
            state, msg = self._synch(r.prop_set)
            r.state = state
            r.msg = msg
            r.status = INSTALL
        elif r.status == INSTALL:
            if not self._round_prop_done(r, (PROPOSE, INSTALL)):
                return
            r.view_id = r.prop_id
            r.view_set = r.prop_set
            r.status = MULTICAST
            r.rnd = 0
            self.emit("install", view=r.view_id.render(),
                      body=r.view_id.to_obj(), members=sorted(r.view_set))

    def _synch(self, members: frozenset):
        """Consolidate: take state and batch from the most advanced member,
        by view id then round; blanked states cannot be candidates."""
        best = None
        for k in sorted(members):
            cand = self.rep[k]
            if cand.state is None:
                continue
            if best is None:
                best = cand
                continue
            rel = cmp_counter(cand.view_id, best.view_id)
            if rel is Ordering.GREATER or (rel is Ordering.EQUAL
                                           and cand.rnd > best.rnd):
                best = cand
        if best is None:  # own record is never blank, but stay defensive
            best = self.rep[self.self_id]
        return best.state, tuple(best.msg)

    # -- follower ----------------------------------------------------------------

    def _follower_step(self, l: int):
        i = self.self_id
        if l == i:
            return
        r = self.rep[i]
        rl = self.rep[l]
        fresh_entry = (rl.rnd == 0 or r.rnd < rl.rnd
                       or rl.view_id != rl.prop_id or rl.view_set != rl.prop_set)
        if not fresh_entry:
            return
        if rl.status == MULTICAST:
            if (r.view_id, r.view_set, r.rnd) == (rl.view_id, rl.view_set, rl.rnd):
                return  # already adopted this round
            if rl.state is None:
                rl.state = r.state  # restore the PCE blank from our replica
            view_changed = (r.view_id, r.view_set) != (rl.view_id, rl.view_set)
            self.rep[i] = rl.copy()
            r = self.rep[i]
            if view_changed:
                self.emit("install", view=r.view_id.render(),
                          body=r.view_id.to_obj(), members=sorted(r.view_set))
            # applying here keeps this replica one batch ahead of the record
            # it echoes, which is what makes the blank-state restore exact
            new_state = automaton.apply_batch(r.state, r.msg)
            self._emit_delivery(r.view_id, r.rnd, r.msg, new_state)
            r.state = new_state
            r.input = self.feed.fetch()
        elif rl.status == INSTALL:
            view_changed = (r.view_id, r.view_set) != (rl.view_id, rl.view_set)
            self.rep[i] = rl.copy()
            if view_changed:
                self.emit("install", view=rl.view_id.render(),
                          body=rl.view_id.to_obj(), members=sorted(rl.view_set))
        elif rl.status == PROPOSE:
            r.status = rl.status
            r.prop_id = rl.prop_id
            r.prop_set = rl.prop_set

    def _emit_delivery(self, view_id: Counter, rnd: int, batch, result_state):
        self.emit("deliver", view=view_id.render(), rnd=rnd,
                  batch=automaton.digest_batch(batch))
        self.emit("apply", view=view_id.render(), rnd=rnd, digest=result_state)

    # -- exchange ----------------------------------------------------------------

    def _queue_sends(self, seem: set, val: set, fd_set: frozenset):
        i = self.self_id
        r = self.rep[i]
        send_set = set(seem)
        if val == {i}:
            send_set |= r.prop_set
        if r.no_crd or r.status == PROPOSE:
            send_set |= fd_set
        send_set.discard(i)
        if not send_set:
            return
        m = r.copy()
        if r.status == MULTICAST and r.rnd % self.pce != 0:
            m.state = None
        for j in sorted(send_set):
            self.vs_outbox[j] = m

    def drain_vs(self, peer: int) -> RepState | None:
        return self.vs_outbox.pop(peer, None)

    def on_vs_message(self, frm: int, m: RepState):
        self.rep[frm] = m.copy()
