"""Self-stabilizing exactly-once exchange over lossy bounded-capacity channels.

Each pair of processors runs one instance; the higher id is the active side.
The active side numbers exchange rounds with tags cycling through 2c+2 values,
where c bounds how many records one channel direction can hold. It retransmits
DATA(tag, payload) until it has seen c+1 ACKs bearing the current tag: at most
c matching ACKs can be stale leftovers, so the (c+1)-th proves the passive side
really received this round's payload. The passive side delivers a DATA record
exactly once per fresh tag and piggybacks its own outbound payload on every
ACK, so both directions exchange one payload per round.

A round trip is also the token of the pair: the token "arrives" at the passive
side when a fresh tag is delivered, and back at the active side when the ACK
quota is met. Payload handoff happens at those two moments, via the handler
callback, which receives the inbound payload and returns the next outbound
one. Starting from arbitrary channel and endpoint contents, at most a handful
of deliveries are spurious or lost; after that every payload sent is delivered
exactly once, in order.
"""

from __future__ import annotations

import hashlib

DATA = "data"
ACK = "ack"


def payload_key(payload) -> str:
    """Short stable identity for a payload, for event records."""
    if payload is None:
        return "-"
    if isinstance(payload, dict) and "bid" in payload:
        return str(payload["bid"])
    return hashlib.sha1(repr(payload).encode()).hexdigest()[:8]


class LinkEndpoint:
    """One side of a token link. Exactly one side is active per pair."""

    def __init__(self, self_id: int, peer_id: int, capacity: int, active: bool,
                 handler=None, emit=None):
        if capacity < 1:
            raise ValueError("channel capacity must be >= 1")
        self.self_id = self_id
        self.peer_id = peer_id
        self.capacity = capacity
        self.span = 2 * capacity + 2
        self.active = active
        self.handler = handler or (lambda payload: None)
        self.emit = emit or (lambda kind, **kw: None)
        self.outbox: list = []
        # active-side round state
        self.tag = 0
        self.ack_count = 0
        self.out_payload = None
        self.ready = active  # token starts at the active side
        # passive-side state
        self.last_tag = 0
        self.reply_payload = None

    def holds_token(self) -> bool:
        return self.active and self.ready

    def send(self, payload):
        """Start a new round. Only the active side sends; it must hold the
        token (the previous round must have completed)."""
        if not self.active:
            raise RuntimeError("passive link side replies via its handler")
        if not self.ready:
            raise RuntimeError("token is not here, round still in flight")
        self.tag = (self.tag + 1) % self.span
        self.ack_count = 0
        self.out_payload = payload
        self.ready = False
        self.emit("link_send", to=self.peer_id, tag=self.tag, pkey=payload_key(payload))
        self.outbox.append((DATA, self.tag, payload))

    def on_tick(self):
        """Retransmission timer: keep pushing the current round's DATA.
        A None payload is retransmitted too, so a round that an arbitrary
        start left mid-flight still completes."""
        if self.active and not self.ready:
            self.outbox.append((DATA, self.tag, self.out_payload))

    def on_record(self, rec):
        if not isinstance(rec, tuple) or len(rec) != 3:
            return
        kind, tag, payload = rec
        if not isinstance(tag, int):
            return
        tag %= self.span
        if self.active:
            if kind != ACK or self.ready or tag != self.tag:
                return
            self.ack_count += 1
            if self.ack_count >= self.capacity + 1:
                self.ready = True
                self.emit("token", frm=self.peer_id)
                self.emit("link_deliver", frm=self.peer_id, pkey=payload_key(payload))
                nxt = self.handler(payload)
                if nxt is not None:
                    self.send(nxt)
        else:
            if kind != DATA:
                return
            if tag != self.last_tag:
                self.last_tag = tag
                self.emit("token", frm=self.peer_id)
                self.emit("link_deliver", frm=self.peer_id, pkey=payload_key(payload))
                self.reply_payload = self.handler(payload)
                self.emit("link_send", to=self.peer_id, tag=tag,
                          pkey=payload_key(self.reply_payload))
            self.outbox.append((ACK, tag, self.reply_payload))

    def drain(self) -> list:
        out = self.outbox
        self.outbox = []
        return out
