import random

from stabvs.labeling import (
    LabelingState, LabelPair, ProtocolParams, initial_label, safe_other_capacity,
    safe_own_capacity,
)
from stabvs.labels import Ordering, cmp_label, make_label, next_label


def small_params(n=3):
    # test mode: tiny queues, small k
    return ProtocolParams(n=n, m=4, own_cap=6, other_cap=4, k=12)


def collect(state_events):
    def emit(kind, **kw):
        state_events.append((kind, kw))
    return emit


def lab(params, creator, seq):
    """creator's seq-th label along its mint chain."""
    scheme = params.scheme()
    cur = initial_label(scheme, creator)
    for _ in range(seq):
        cur = next_label(scheme, creator, [cur])
    return cur


class TestCapacities:
    def test_safe_sizes(self):
        n, m = 5, 80
        assert safe_own_capacity(n, m) == max(5 * (25 + 80), 2 * (80 * 5 + 50 - 10) + 1)
        assert safe_other_capacity(n, m) == 85

    def test_defaults_applied(self):
        p = ProtocolParams(n=5, m=80)
        assert p.own_cap == safe_own_capacity(5, 80)
        assert p.other_cap == 85
        assert p.k == 2 * p.own_cap


class TestStaleInfo:
    def test_fresh_state_not_stale(self):
        st = LabelingState(0, small_params())
        assert not st.stale_info()

    def test_misfiled_pair_is_stale(self):
        p = small_params()
        st = LabelingState(0, p)
        st.stored[1].add_front(LabelPair(lab(p, 2, 0)))
        assert st.stale_info()

    def test_two_live_pairs_one_queue_is_stale(self):
        p = small_params()
        st = LabelingState(0, p)
        st.stored[1].add_front(LabelPair(lab(p, 1, 0)))
        st.stored[1].add_front(LabelPair(lab(p, 1, 1)))
        assert st.stale_info()

    def test_duplicate_label_is_stale(self):
        p = small_params()
        st = LabelingState(0, p)
        l10 = lab(p, 1, 0)
        st.stored[1].add_front(LabelPair(l10, lab(p, 1, 1)))
        st.stored[1].add_front(LabelPair(l10, lab(p, 1, 1)))
        assert st.stale_info()


class TestReceive:
    def test_adopts_greatest_live_label(self):
        p = small_params()
        events = []
        st = LabelingState(0, p, emit=collect(events))
        big = lab(p, 2, 0)
        st.on_receive(2, LabelPair(big), st.max[2].copy())
        assert st.max[0].ml == big
        assert st.max[0].legit()
        assert ("adopt", {"label": big.render_compact()}) in events
        assert not any(k == "create" for k, _ in events)
        assert not st.stale_info()

    def test_cancelled_everything_creates_fresh(self):
        p = small_params()
        events = []
        st = LabelingState(1, p, emit=collect(events))
        # cancel every maximal and empty the own queue
        for j in range(p.n):
            ml = st.max[j].ml
            st.max[j] = LabelPair(ml, next_label(p.scheme(), ml.creator, [ml]))
        st.stored[1].clear()
        st.on_receive(0, st.max[0].copy(), st.max[1].copy())
        assert st.max[1].legit()
        assert st.max[1].ml.creator == 1
        assert any(k == "create" for k, _ in events)
        # the fresh label dominates the cancelled one from our own domain
        assert not st.stale_info()

    def test_peer_cancellation_of_own_label_taken_up(self):
        p = small_params()
        events = []
        st = LabelingState(0, p, emit=collect(events))
        own = st.max[0].ml
        canceller = next_label(p.scheme(), 0, [own])
        peer_view = LabelPair(own, canceller)
        sender_max = LabelPair(lab(p, 2, 0))
        st.on_receive(2, sender_max, peer_view)
        # our announced label was cancelled; we adopted the sender's live one
        assert any(k == "cancel" for k, _ in events)
        assert st.max[0].legit()
        assert st.max[0].ml == sender_max.ml

    def test_incomparable_same_creator_pair_resolved(self):
        p = small_params()
        st = LabelingState(0, p)
        scheme = p.scheme()
        a = make_label(scheme, 2, 1, range(2, p.k + 2))
        b = make_label(scheme, 2, 2, [1] + list(range(3, p.k + 2)))
        assert cmp_label(a, b) is Ordering.INCOMPARABLE
        st.max[1] = LabelPair(a)
        st.max[2] = LabelPair(b)
        st.on_receive(1, LabelPair(a), st.max[0].copy())
        # neither incomparable label survives as anyone's live maximal
        assert st.max[0].legit()
        assert st.max[0].ml not in (a, b)
        assert not st.stale_info()

    def test_transmit_ready_is_pure(self):
        p = small_params()
        st = LabelingState(0, p)
        before = [(q.cap, len(q)) for q in st.stored]
        m1, l1 = st.on_transmit_ready(2)
        m2, l2 = st.on_transmit_ready(2)
        assert m1.ml == m2.ml == st.max[0].ml
        assert l1.ml == l2.ml == st.max[2].ml
        assert [(q.cap, len(q)) for q in st.stored] == before
        m1.cl = m1.ml  # mutating the copy must not reach the state
        assert st.max[0].legit()


class TestConvergenceProperties:
    def _random_state(self, rng, p, self_id):
        scheme = p.scheme()
        pool = []
        for c in range(p.n):
            base = initial_label(scheme, c)
            nxt = next_label(scheme, c, [base])
            weird = make_label(scheme, c, rng.randrange(1, scheme.domain_size + 1),
                               rng.sample(list(scheme.domain()), scheme.k))
            pool.extend([base, nxt, weird])
        st = LabelingState(self_id, p)
        for j in range(p.n):
            ml = rng.choice(pool)
            cl = rng.choice(pool) if rng.random() < 0.4 else None
            st.max[j] = LabelPair(ml, cl)
        for q in st.stored:
            q.clear()
        for _ in range(rng.randrange(6)):
            ml = rng.choice(pool)
            cl = rng.choice(pool) if rng.random() < 0.4 else None
            st.stored[rng.randrange(p.n)].add_front(LabelPair(ml, cl))
        return st, pool

    def test_receive_restores_invariants(self):
        p = small_params(n=4)
        rng = random.Random(42)
        for trial in range(300):
            st, pool = self._random_state(rng, p, rng.randrange(p.n))
            frm = rng.randrange(p.n)
            sent = LabelPair(rng.choice(pool),
                             rng.choice(pool) if rng.random() < 0.3 else None)
            last = LabelPair(rng.choice(pool),
                             rng.choice(pool) if rng.random() < 0.3 else None)
            st.on_receive(frm, sent, last)
            assert st.max[st.self_id].legit()
            assert not st.stale_info()
            # at most one live pair per queue
            for q in st.stored:
                assert sum(1 for lp in q if lp.legit()) <= 1

    def test_pairwise_exchange_converges(self):
        # drive two processors against each other until quiet, from many states
        p = small_params(n=2)
        rng = random.Random(99)
        for trial in range(200):
            sts = [self._random_state(rng, p, i)[0] for i in range(2)]
            for step in range(40):
                a = step % 2
                b = 1 - a
                sent, last = sts[a].on_transmit_ready(b)
                sts[b].on_receive(a, sent, last)
            assert sts[0].max[0].ml == sts[1].max[1].ml
            assert sts[0].max[0].legit() and sts[1].max[1].legit()
