"""Shared helpers for driving link endpoints over toy channels."""

import itertools

from stabvs.link import LinkEndpoint


class Chan:
    """Capacity-bounded FIFO; a push to a full channel drops the new record."""

    def __init__(self, cap):
        self.cap = cap
        self.q = []

    def push(self, rec):
        if len(self.q) < self.cap:
            self.q.append(rec)

    def pop(self):
        return self.q.pop(0) if self.q else None


def auto_pair(cap):
    """Active/passive endpoints whose handlers auto-send numbered payloads.

    Returns (active, passive, delivered_at_active, delivered_at_passive,
    sent_by_active, sent_by_passive); the sent lists record handler-produced
    payloads in send order.
    """
    a_deliv, b_deliv, a_sent, b_sent = [], [], [], []
    ca, cb = itertools.count(), itertools.count()

    def ha(p):
        a_deliv.append(p)
        s = f"a{next(ca)}"
        a_sent.append(s)
        return s

    def hb(p):
        b_deliv.append(p)
        s = f"b{next(cb)}"
        b_sent.append(s)
        return s

    a = LinkEndpoint(1, 0, cap, True, handler=ha)
    b = LinkEndpoint(0, 1, cap, False, handler=hb)
    return a, b, a_deliv, b_deliv, a_sent, b_sent


def run_steps(a, b, ab, ba, steps):
    for _ in range(steps):
        a.on_tick()
        for rec in a.drain():
            ab.push(rec)
        rec = ab.pop()
        if rec is not None:
            b.on_record(rec)
        b.on_tick()
        for rec in b.drain():
            ba.push(rec)
        rec = ba.pop()
        if rec is not None:
            a.on_record(rec)


def assert_exactly_once_suffix(delivered_tail, sent_log):
    """The post-warmup deliveries must be a contiguous run of the send log."""
    assert delivered_tail, "no deliveries after warmup"
    for p in delivered_tail:
        assert p in sent_log, f"garbage delivery {p!r} after warmup"
    k = sent_log.index(delivered_tail[0])
    assert delivered_tail == sent_log[k:k + len(delivered_tail)]


def drive_adversarial_link_case(tag, ack_count, ready, last_tag, ch_ab, ch_ba,
                                warmup=60, observe=40):
    """Run one adversarially initialized c=1 link pair and check that, after
    the warmup, both directions settle to exactly-once in-order delivery."""
    a, b, a_deliv, b_deliv, a_sent, b_sent = auto_pair(1)
    a.tag = tag
    a.ack_count = ack_count
    b.last_tag = last_tag
    b.reply_payload = "R?"
    ab, ba = Chan(1), Chan(1)
    if ch_ab is not None:
        ab.q.append(ch_ab)
    if ch_ba is not None:
        ba.q.append(ch_ba)
    if ready:
        a.ready = True
        a.send("K?")  # the node kicks a pending token immediately
    else:
        a.ready = False
        a.out_payload = "W?"
    initial = "K?" if ready else "W?"
    run_steps(a, b, ab, ba, warmup)
    assert len(a_sent) >= 5, "link made no progress from adversarial start"
    mark_b, mark_a = len(b_deliv), len(a_deliv)
    run_steps(a, b, ab, ba, observe)
    assert len(b_deliv) - mark_b >= 8
    assert_exactly_once_suffix(b_deliv[mark_b:], [initial] + a_sent)
    assert_exactly_once_suffix(a_deliv[mark_a:], ["R?"] + b_sent)
