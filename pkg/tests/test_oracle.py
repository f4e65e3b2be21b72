"""The brute-force oracle must itself be trustworthy: these pin its
hand-traceable behaviors so acceptance runs stand on checked ground."""

from __future__ import annotations

import oracle_bruteforce as oracle

GBE = 1_000_000_000
WIRE_500 = 4160  # (500 + 20) bytes * 8 ns
GUARD = 12336  # 1522-byte frame on the wire


def hop(port, prop=500, proc=1000, speed=GBE):
    return oracle.HopSpec(port, speed, prop, proc)


def two_hop_path():
    # talker egress, then bridge egress toward the listener host
    return (hop("A.p0", proc=1000), hop("B1.p1", proc=0))


def flow(sid, hops, period=250_000, frame=500, frames=1, bound=2_000_000):
    return oracle.FlowSpec(
        stream_id=sid,
        traffic_class=7,
        frame_bytes=frame,
        frames=frames,
        period_ns=period,
        max_latency_ns=bound,
        hops=hops,
    )


def single_hop_window(sid, start, q, length=WIRE_500):
    return oracle.PlacedWindow("A.p0", start, length, 7, q)


class TestDeriveNoWait:
    def test_matches_hand_trace(self):
        f = flow("s1", two_hop_path())
        ws = oracle.derive_no_wait(f, 0)
        assert [(w.port, w.start_ns, w.length_ns, w.queue_from_ns) for w in ws] == [
            ("A.p0", 0, WIRE_500, 0),
            ("B1.p1", 5660, WIRE_500, 5660),
        ]
        assert oracle.check_assignment([f], {"s1": ws}) is None

    def test_multi_frame_queues_from_first_arrival(self):
        f = flow("s1", two_hop_path(), frames=2)
        ws = oracle.derive_no_wait(f, 0)
        # second hop starts when the whole burst is in, but frames queue
        # from the first frame's arrival
        assert ws[1].start_ns == 0 + 2 * WIRE_500 + 500 + 1000
        assert ws[1].queue_from_ns == 0 + WIRE_500 + 500 + 1000

    def test_latency_is_last_window_plus_propagation(self):
        f = flow("s1", two_hop_path(), bound=10_320)
        ws = oracle.derive_no_wait(f, 0)
        assert oracle.check_assignment([f], {"s1": ws}) is None
        f_tight = flow("s1", two_hop_path(), bound=10_319)
        assert (
            oracle.check_assignment([f_tight], {"s1": ws}) == "latency bound exceeded"
        )


class TestChecker:
    def test_accepts_abutting_flows(self):
        f1 = flow("s1", two_hop_path())
        f2 = flow("s2", two_hop_path())
        ws = {
            "s1": oracle.derive_no_wait(f1, 0),
            "s2": oracle.derive_no_wait(f2, WIRE_500),
        }
        assert oracle.check_assignment([f1, f2], ws) is None

    def test_wrong_hop_count(self):
        f = flow("s1", two_hop_path())
        ws = {"s1": oracle.derive_no_wait(f, 0)[:1]}
        assert oracle.check_assignment([f], ws) == "wrong hop count"

    def test_window_must_cover_burst(self):
        f = flow("s1", two_hop_path())
        ws = oracle.derive_no_wait(f, 0)
        ws[0] = oracle.PlacedWindow("A.p0", 0, WIRE_500 - 8, 7, 0)
        assert (
            oracle.check_assignment([f], {"s1": ws})
            == "window does not cover the burst"
        )

    def test_causality(self):
        f = flow("s1", two_hop_path())
        ws = oracle.derive_no_wait(f, 0)
        ws[1] = oracle.PlacedWindow("B1.p1", 5659, WIRE_500, 7, 5659)
        assert (
            oracle.check_assignment([f], {"s1": ws})
            == "window before the burst can arrive"
        )

    def test_wire_overlap(self):
        f1 = flow("s1", two_hop_path())
        f2 = flow("s2", two_hop_path())
        ws = {
            "s1": oracle.derive_no_wait(f1, 0),
            "s2": oracle.derive_no_wait(f2, 2000),
        }
        assert oracle.check_assignment([f1, f2], ws) == "wire overlap on A.p0"

    def test_short_gap(self):
        f1 = flow("s1", two_hop_path())
        f2 = flow("s2", two_hop_path())
        ws = {
            "s1": oracle.derive_no_wait(f1, 0),
            "s2": oracle.derive_no_wait(f2, WIRE_500 + 5000),
        }
        assert oracle.check_assignment([f1, f2], ws) == "short gap on A.p0"

    def test_queue_tie(self):
        f1 = flow("s1", (hop("A.p0"),))
        f2 = flow("s2", (hop("A.p0"),))
        ws = {
            "s1": [single_hop_window("s1", 0, 0)],
            "s2": [single_hop_window("s2", WIRE_500, 0)],
        }
        assert oracle.check_assignment([f1, f2], ws) == "queue tie on A.p0"

    def test_fifo_inversion(self):
        f1 = flow("s1", (hop("A.p0"),))
        f2 = flow("s2", (hop("A.p0"),))
        # s2 queued first but transmitted second
        ws = {
            "s1": [single_hop_window("s1", WIRE_500, 2000)],
            "s2": [single_hop_window("s2", 2 * WIRE_500, 0)],
        }
        assert oracle.check_assignment([f1, f2], ws) == "fifo inversion on A.p0"

    def test_exact_fill_wraps_with_zero_gap(self):
        period = 50 * GUARD
        f = flow("s1", (hop("A.p0"),), period=period, frame=1522, frames=50)
        ws = {"s1": [oracle.PlacedWindow("A.p0", 0, period, 7, 0)]}
        assert oracle.check_assignment([f], ws) is None

    def test_residual_gap_below_guard_is_rejected(self):
        f = flow("s1", (hop("A.p0"),), period=625_000, frame=1522, frames=50)
        ws = {"s1": oracle.derive_no_wait(f, 0)}
        assert oracle.check_assignment([f], ws) == "short gap on A.p0"


class TestSearch:
    def test_packs_two_flows_back_to_back(self):
        flows = [flow("s1", two_hop_path()), flow("s2", two_hop_path())]
        found = oracle.search_no_wait(flows)
        assert found is not None
        assert oracle.check_assignment(flows, found) is None
        assert found["s1"][0].start_ns == 0
        assert found["s2"][0].start_ns == WIRE_500

    def test_mixed_periods(self):
        flows = [
            flow("s1", two_hop_path()),
            flow("s2", two_hop_path()),
            flow("s3", two_hop_path(), period=500_000),
        ]
        found = oracle.search_no_wait(flows)
        assert found is not None
        assert oracle.check_assignment(flows, found) is None

    def test_oversubscribed_port_is_unschedulable(self):
        flows = [
            flow("s1", (hop("A.p0"),), period=500_000, frame=1522, frames=30),
            flow("s2", (hop("A.p0"),), period=500_000, frame=1522, frames=30),
        ]
        assert oracle.search_no_wait(flows) is None

    def test_sub_guard_residue_is_unschedulable(self):
        flows = [flow("s1", (hop("A.p0"),), period=625_000, frame=1522, frames=50)]
        assert oracle.search_no_wait(flows) is None
