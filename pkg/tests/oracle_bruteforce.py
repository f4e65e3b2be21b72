"""Independent feasibility oracle for small instances.

Everything here is re-derived from the gating model on purpose: the
constraint checker shares no code with the controller, so agreement
between the two is evidence. The checker validates an arbitrary window
assignment; the search enumerates no-wait schedules (every hop starts as
early as physics allows) over candidate talker offsets at event
boundaries. The search space is a subset of what a scheduler may emit,
so "search found a schedule" always means "feasible", while the converse
does not hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from tsnfv.model import MAX_FRAME_BYTES, wire_occupancy


@dataclass(frozen=True)
class HopSpec:
    port: str
    speed_bps: int
    propagation_ns: int
    ingress_processing_ns: int  # processing at the node the hop leads to


@dataclass(frozen=True)
class FlowSpec:
    stream_id: str
    traffic_class: int
    frame_bytes: int
    frames: int
    period_ns: int
    max_latency_ns: int
    hops: tuple[HopSpec, ...]
    talker_first: bool = True


@dataclass(frozen=True)
class PlacedWindow:
    port: str
    start_ns: int  # offset from each release tick
    length_ns: int
    traffic_class: int
    queue_from_ns: int


def derive_no_wait(flow: FlowSpec, delta: int) -> list[PlacedWindow]:
    """Windows of one flow when every hop starts as early as possible."""
    windows = []
    start = delta
    queue_from = delta
    for index, hop in enumerate(flow.hops):
        wire = wire_occupancy(flow.frame_bytes, hop.speed_bps)
        burst = wire * flow.frames
        if index == 0 and flow.talker_first:
            queue_from = start
        windows.append(PlacedWindow(hop.port, start, burst, flow.traffic_class, queue_from))
        arrival_last = start + burst + hop.propagation_ns
        arrival_first = start + wire + hop.propagation_ns
        start = arrival_last + hop.ingress_processing_ns
        queue_from = arrival_first + hop.ingress_processing_ns
    return windows


def _expand(w: PlacedWindow, period: int, hyper: int) -> list[tuple[int, int, int]]:
    """(start, end, queue_from) instances on the hyperperiod, unwrapped."""
    out = []
    for k in range(hyper // period):
        s = (w.start_ns + k * period) % hyper
        q = s - (w.start_ns - w.queue_from_ns)
        out.append((s, s + w.length_ns, q))
    return out


def _cyclic_clash(s1: int, e1: int, s2: int, e2: int, hyper: int) -> bool:
    for shift in (-hyper, 0, hyper):
        if s1 + shift < e2 and s2 < e1 + shift:
            return True
    return False


def check_assignment(
    flows: list[FlowSpec], windows: dict[str, list[PlacedWindow]]
) -> str | None:
    """None when the assignment satisfies every constraint, else a reason.

    Constraints, restated from scratch: per-hop causality, cyclic wire
    exclusivity per port, inter-window gaps of zero or at least one
    full-size frame, first-in-first-out consistency of same-class queues,
    and the latency bound.
    """
    hyper = math.lcm(*[f.period_ns for f in flows])
    guards = {}
    by_port: dict[str, list[tuple[int, int, int, int, str]]] = {}

    for flow in flows:
        ws = windows[flow.stream_id]
        if len(ws) != len(flow.hops):
            return "wrong hop count"
        t = None
        for w, hop in zip(ws, flow.hops):
            wire = wire_occupancy(flow.frame_bytes, hop.speed_bps)
            if w.length_ns != wire * flow.frames:
                return "window does not cover the burst"
            if t is not None and w.start_ns < t:
                return "window before the burst can arrive"
            t = w.start_ns + w.length_ns + hop.propagation_ns + hop.ingress_processing_ns
            guards[hop.port] = wire_occupancy(MAX_FRAME_BYTES, hop.speed_bps)
            for s, e, q in _expand(w, flow.period_ns, hyper):
                by_port.setdefault(hop.port, []).append(
                    (s, e, q, w.traffic_class, flow.stream_id)
                )
        last = ws[-1]
        last_hop = flow.hops[-1]
        e2e = last.start_ns + last.length_ns + last_hop.propagation_ns
        if e2e > flow.max_latency_ns:
            return "latency bound exceeded"

    for port, instances in by_port.items():
        for i, (s1, e1, q1, c1, f1) in enumerate(instances):
            for s2, e2, q2, c2, f2 in instances[i + 1:]:
                same_window = f1 == f2 and (s1 - s2) % hyper == 0
                if same_window:
                    continue
                if _cyclic_clash(s1, e1, s2, e2, hyper):
                    return f"wire overlap on {port}"
                if c1 == c2 and f1 != f2:
                    # same queue: wherever residencies [q, e) meet, the
                    # earlier-queued burst must finish before the later
                    # one starts transmitting
                    for shift in (-hyper, 0, hyper):
                        if q1 + shift < e2 and q2 < e1 + shift:
                            if q1 + shift == q2:
                                return f"queue tie on {port}"
                            if q1 + shift < q2:
                                if e1 + shift > s2:
                                    return f"fifo inversion on {port}"
                            elif e2 > s1 + shift:
                                return f"fifo inversion on {port}"

    # gaps between time-adjacent windows must be zero or a full guard
    for port, instances in by_port.items():
        guard = guards[port]
        ordered = sorted(instances)
        for i, (s1, e1, _, _, _) in enumerate(ordered):
            s2 = ordered[(i + 1) % len(ordered)][0]
            gap = (s2 - e1) % hyper
            if 0 < gap < guard:
                return f"short gap on {port}"
    return None


def search_no_wait(flows: list[FlowSpec], cap: int = 96) -> dict[str, list[PlacedWindow]] | None:
    """Depth-first search over no-wait schedules, one offset per flow,
    candidates at event boundaries. Returns a feasible assignment or None
    (which, being an under-approximation, does not prove infeasibility)."""

    def candidates(flow: FlowSpec, placed: dict[str, list[PlacedWindow]]) -> list[int]:
        hyper = math.lcm(*[f.period_ns for f in flows])
        leads = {}
        probe = derive_no_wait(flow, 0)
        for w in probe:
            leads[w.port] = w.start_ns
        cands = {0}
        for ws in placed.values():
            for w in ws:
                if w.port not in leads:
                    continue
                guard = guards_of(flow, w.port)
                for k in range(hyper // flow.period_ns + 1):
                    base = w.start_ns + w.length_ns - leads[w.port]
                    cands.add((base + k * flow.period_ns) % flow.period_ns)
                    cands.add((base + guard + k * flow.period_ns) % flow.period_ns)
        out = sorted(c for c in cands if c >= 0)
        return out[:cap]

    def guards_of(flow: FlowSpec, port: str) -> int:
        for hop in flow.hops:
            if hop.port == port:
                return wire_occupancy(MAX_FRAME_BYTES, hop.speed_bps)
        return 0

    assignment: dict[str, list[PlacedWindow]] = {}

    def place(index: int) -> bool:
        if index == len(flows):
            return True
        flow = flows[index]
        for delta in candidates(flow, assignment):
            ws = derive_no_wait(flow, delta)
            assignment[flow.stream_id] = ws
            prefix = flows[: index + 1]
            if check_assignment(prefix, assignment) is None and place(index + 1):
                return True
            del assignment[flow.stream_id]
        return False

    return dict(assignment) if place(0) else None
