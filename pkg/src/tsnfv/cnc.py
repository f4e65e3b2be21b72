"""Per-domain controller: stream admission, gate schedule synthesis, and
bridge configuration emission.

Admission uses a greedy as-soon-as-possible search. Each stream gets one
reserved window per hop, expressed as an offset from the stream's release
tick (k * period for instance k), so the same window repeats every period.
The search advances a window past conflicts until it fits; a failed
admission leaves the controller state untouched. Greedy placement may
reject stream sets a global search could fit; that incompleteness is a
documented trade for determinism and a checkable oracle.

Three constraint families keep the synthesized schedule exact under load:

* wire exclusivity: windows on one port never overlap, whatever the class;
* spacing: the gap between neighbouring windows is either zero or at
  least one guard band, so every window span can be preceded by a
  full-length all-closed guard;
* queue consistency: two same-class streams resident in one egress queue
  at the same time must transmit in their arrival order, or the FIFO
  queue would hand the earlier frame the later window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    CapabilityError,
    GclOverflowError,
    InfeasibleError,
    UnknownStreamError,
    ValidationError,
)
from .model import (
    GateControlList,
    GclEntry,
    HopReservation,
    MAX_FRAME_BYTES,
    StreamRequirement,
    StreamSchedule,
    burst_occupancy,
    hyperperiod,
    wire_occupancy,
)
from .topology import PathSegment, Topology


@dataclass
class CncState:
    """Mutable admission state of one domain's controller."""

    domain_id: str
    topology: Topology
    requirements: dict[str, StreamRequirement] = field(default_factory=dict)
    admitted: dict[str, StreamSchedule] = field(default_factory=dict)
    hyperperiod_ns: int = 0

    def snapshot(self) -> dict:
        """Canonical document of the state, for persistence and for the
        deep-equality checks of rollback and termination."""
        return {
            "domain_id": self.domain_id,
            "hyperperiod_ns": self.hyperperiod_ns,
            "streams": [
                {
                    "requirement": self.requirements[sid].to_doc(),
                    "schedule": self.admitted[sid].to_doc(),
                }
                for sid in self.admitted
            ],
        }

    @classmethod
    def from_doc(cls, doc: dict, topology: Topology) -> CncState:
        state = cls(domain_id=doc["domain_id"], topology=topology)
        for entry in doc["streams"]:
            req = StreamRequirement.from_doc(entry["requirement"])
            state.requirements[req.stream_id] = req
            state.admitted[req.stream_id] = StreamSchedule.from_doc(entry["schedule"])
        state.hyperperiod_ns = doc["hyperperiod_ns"]
        return state


@dataclass(frozen=True)
class _Window:
    """One expanded reservation instance on the cycle: absolute positions
    modulo H. queue_at is when the first frame enters the egress queue."""

    start: int
    length: int
    traffic_class: int
    stream_id: str
    queue_at: int
    queue_len: int

    @property
    def end(self) -> int:
        return self.start + self.length


def _mod(value: int, cycle: int) -> int:
    return value % cycle


def _overlaps(s1: int, l1: int, s2: int, l2: int, cycle: int) -> bool:
    """Do two cyclic intervals intersect anywhere on the cycle?"""
    if l1 <= 0 or l2 <= 0:
        return False
    if l1 >= cycle or l2 >= cycle:
        return True
    s1 %= cycle
    s2 %= cycle
    for shift in (-cycle, 0, cycle):
        a = s2 + shift
        if s1 < a + l2 and a < s1 + l1:
            return True
    return False


def _port_windows(state: CncState, cycle: int) -> dict[str, list[_Window]]:
    """Expand every committed reservation into its per-period instances on
    the given cycle, grouped by egress port."""
    out: dict[str, list[_Window]] = {}
    for sid, schedule in state.admitted.items():
        period = state.requirements[sid].traffic.period_ns
        for res in schedule.reservations:
            for k in range(cycle // period):
                shift = k * period
                out.setdefault(res.port_id, []).append(
                    _Window(
                        start=_mod(res.window_start_ns + shift, cycle),
                        length=res.length_ns,
                        traffic_class=res.traffic_class,
                        stream_id=sid,
                        queue_at=_mod(res.queue_from_ns + shift, cycle),
                        queue_len=res.window_end_ns - res.queue_from_ns,
                    )
                )
    for windows in out.values():
        windows.sort(key=lambda w: (w.start, w.stream_id))
    return out


def _queue_order_conflict(
    mine_q: int, mine_qlen: int, mine_burst: int,
    other: _Window, cycle: int,
) -> str | None:
    """Check FIFO consistency of two same-class queue residencies.

    A residency runs from the moment a stream's first frame enters the
    egress queue to the end of its window. Overlapping residencies are
    fine only when the earlier-queued stream's window lies entirely
    before the later one's, so the FIFO head is always the right frame.

    Returns None when compatible, "advance" when moving my window past the
    other's resolves it, "abort" when no later placement can.
    """
    if not _overlaps(mine_q, mine_qlen, other.queue_at, other.queue_len, cycle):
        return None
    # Find the unrolling in which the residencies intersect; two arcs
    # intersecting in more than one alignment have no usable order.
    hits = []
    for shift in (-cycle, 0, cycle):
        o_q = other.queue_at + shift
        if mine_q < o_q + other.queue_len and o_q < mine_q + mine_qlen:
            hits.append(shift)
    if len(hits) != 1:
        return "abort"
    o_q = other.queue_at + hits[0]
    o_w_start = other.start + hits[0]
    o_w_end = o_q + other.queue_len
    mine_w_end = mine_q + mine_qlen
    mine_w_start = mine_w_end - mine_burst
    if mine_q < o_q:
        # I queue first, so my window must come first. Windows are wire
        # disjoint, so either mine already ends before theirs starts (no
        # conflict) or advancing only makes the inversion worse.
        if mine_w_end <= o_w_start:
            return None
        return "abort"
    # They queue first (or tied): my window must follow theirs entirely.
    if o_q < mine_q and o_w_end <= mine_w_start:
        return None
    return "advance"


def admit_stream(
    state: CncState,
    req: StreamRequirement,
    segment: PathSegment,
    latency_budget_ns: int,
    entry_offset_ns: int = 0,
    entry_stride_ns: int = 0,
) -> StreamSchedule:
    """Place one stream onto its segment of the path, or raise.

    entry_offset_ns is the offset after each release tick at which the
    stream's burst has fully arrived at the segment entry; zero for the
    talker's own segment. entry_stride_ns is the upstream per-frame wire
    spacing, used to recover when the first frame of the burst arrived.
    On success the reservations are committed and the returned schedule
    reports the latency from segment entry to the last bit leaving the
    segment. On any failure the state is unchanged.
    """
    if not segment.hops:
        raise ValidationError(f"stream {req.stream_id}: empty path segment")
    if req.stream_id in state.admitted:
        raise ValidationError(f"stream {req.stream_id} is already admitted")
    if req.frame.pcp == 0:
        raise ValidationError(
            f"stream {req.stream_id}: class 0 is reserved for best effort"
        )
    for hop in segment.hops:
        node = state.topology.node(hop.egress_node)
        if node.kind == "bridge" and not node.supports_qbv:
            raise CapabilityError(f"bridge {node.node_id}", "qbv_shaping")

    period = req.traffic.period_ns
    cycle = hyperperiod(
        [r.traffic.period_ns for r in state.requirements.values()] + [period]
    )
    committed = _port_windows(state, cycle)
    traffic_class = req.frame.pcp
    talker_first_hop = segment.hops[0].egress_node == req.talker.node_id

    placed: list[HopReservation] = []
    prev_start = 0
    prev_wire = 0
    prev_burst = 0
    prev_prop = 0
    for index, hop in enumerate(segment.hops):
        link = state.topology.link(hop.link_id)
        node = state.topology.node(hop.egress_node)
        wire = wire_occupancy(req.traffic.max_frame_bytes, link.speed_bps)
        burst = burst_occupancy(req.traffic, link.speed_bps)
        guard = wire_occupancy(MAX_FRAME_BYTES, link.speed_bps)
        port = hop.port_key

        # A window longer than the period would collide with the stream's
        # own next instance; a shorter one must leave room for a guard
        # between consecutive instances.
        if burst > period:
            raise InfeasibleError(
                "no_free_window", f"burst {burst} exceeds period {period} on {port}"
            )
        if 0 < period - burst < guard:
            raise InfeasibleError(
                "no_free_window",
                f"gap between instances on {port} is {period - burst}, guard needs {guard}",
            )

        if index == 0:
            if talker_first_hop:
                # The talker holds the burst in memory and launches it at
                # the window start, so queueing begins with the window.
                earliest = entry_offset_ns
                queue_from = None
            else:
                earliest = entry_offset_ns + node.forwarding_delay_ns
                # The first frame of the burst reached the entry node one
                # upstream stride per remaining frame earlier.
                lead = (req.traffic.frames_per_period - 1) * entry_stride_ns
                queue_from = max(0, entry_offset_ns - lead) + node.forwarding_delay_ns
        else:
            # The whole burst is forwarded as a unit: the next hop may not
            # start before the last bit has arrived and been processed.
            arrival = prev_start + prev_burst + prev_prop
            earliest = arrival + node.forwarding_delay_ns
            # The first frame, though, enters the egress queue as soon as
            # it alone has been stored and forwarded.
            queue_from = prev_start + prev_wire + prev_prop + node.forwarding_delay_ns

        start = _place_window(
            port=port,
            existing=committed.get(port, ()),
            earliest=earliest,
            burst=burst,
            guard=guard,
            period=period,
            cycle=cycle,
            traffic_class=traffic_class,
            queue_from=queue_from,
        )

        placed.append(
            HopReservation(
                port_id=port,
                window_start_ns=start,
                window_end_ns=start + burst,
                traffic_class=traffic_class,
                stream_id=req.stream_id,
                queue_from_ns=start if queue_from is None else queue_from,
            )
        )
        prev_start, prev_wire, prev_burst, prev_prop = start, wire, burst, link.propagation_ns

    e2e = prev_start + prev_burst + prev_prop - entry_offset_ns
    if e2e > latency_budget_ns:
        raise InfeasibleError(
            "exceeds_budget",
            f"stream {req.stream_id} needs {e2e} ns, budget is {latency_budget_ns} ns",
        )

    schedule = StreamSchedule(
        stream_id=req.stream_id,
        reservations=tuple(placed),
        e2e_latency_ns=e2e,
        cycle_ns=cycle,
        entry_offset_ns=entry_offset_ns,
    )
    state.requirements[req.stream_id] = req
    state.admitted[req.stream_id] = schedule
    state.hyperperiod_ns = cycle
    return schedule


def _place_window(
    port: str,
    existing,
    earliest: int,
    burst: int,
    guard: int,
    period: int,
    cycle: int,
    traffic_class: int,
    queue_from: int | None,
) -> int:
    """Find the first window start at or after `earliest` whose per-period
    instances respect wire exclusivity, guard spacing, and queue order
    against every committed window on the port."""
    instances = cycle // period
    start = earliest
    limit = earliest + cycle
    while True:
        if start >= limit:
            raise InfeasibleError("no_free_window", f"no window fits on {port}")
        advance = _check_candidate(
            existing, start, burst, guard, period, instances, cycle,
            traffic_class, queue_from, port,
        )
        if advance == 0:
            return start
        start += advance


def _check_candidate(
    existing,
    start: int,
    burst: int,
    guard: int,
    period: int,
    instances: int,
    cycle: int,
    traffic_class: int,
    queue_from: int | None,
    port: str,
) -> int:
    """Return 0 when the candidate fits, otherwise the smallest advance of
    the window start worth trying next. Raises when no advance can help."""
    q_rel = start if queue_from is None else queue_from
    q_len = start + burst - q_rel
    # A residency of a full cycle or more (a port wholly owned by one
    # saturating stream) effectively covers everything; the overlap logic
    # below then conflicts with any later same-class candidate, which is
    # exactly the conservative answer, so no special case is needed.
    for k in range(instances):
        a = _mod(start + k * period, cycle)
        a_end = a + burst
        for other in existing:
            # wire exclusivity
            if _overlaps(a, burst, other.start, other.length, cycle):
                adv = _mod(other.end - a, cycle)
                if adv == 0:
                    raise InfeasibleError(
                        "no_free_window", f"port {port} is fully reserved"
                    )
                return adv
        # guard spacing against nearest neighbours
        prev_gap = None
        next_gap = None
        for other in existing:
            before = (a - _mod(other.end, cycle)) % cycle
            after = (_mod(other.start, cycle) - _mod(a_end, cycle)) % cycle
            if prev_gap is None or before < prev_gap:
                prev_gap = before
            if next_gap is None or after < next_gap:
                next_gap = after
        if prev_gap is not None and 0 < prev_gap < guard:
            return guard - prev_gap
        if next_gap is not None and 0 < next_gap < guard:
            return next_gap
        # queue order against same-class residents
        q_at = _mod(q_rel + k * period, cycle)
        for other in existing:
            if other.traffic_class != traffic_class:
                continue
            verdict = _queue_order_conflict(q_at, q_len, burst, other, cycle)
            if verdict == "advance":
                if queue_from is None:
                    return _mod(other.end - a, cycle) or cycle
                # They queued first but my queueing point is fixed before
                # their window ended; FIFO order cannot be repaired.
                raise InfeasibleError(
                    "no_free_window",
                    f"queue order conflict with {other.stream_id} on {port}",
                )
            if verdict == "abort":
                raise InfeasibleError(
                    "no_free_window",
                    f"queue order conflict with {other.stream_id} on {port}",
                )
    return 0


def remove_stream(state: CncState, stream_id: str) -> CncState:
    """Delete a stream's reservations; remaining schedules are untouched.
    The cycle shrinks to the LCM of the remaining periods."""
    if stream_id not in state.admitted:
        raise UnknownStreamError(f"stream {stream_id} is not admitted")
    del state.admitted[stream_id]
    del state.requirements[stream_id]
    periods = [r.traffic.period_ns for r in state.requirements.values()]
    state.hyperperiod_ns = hyperperiod(periods) if periods else 0
    return state


def synthesize_gcls(state: CncState) -> dict[str, GateControlList]:
    """Build the gate control list of every port carrying a reservation.

    Construction: per-period window instances are laid onto the cycle;
    touching instances of one class merge into a single window; touching
    windows of any class form a span; every span is preceded by one
    all-closed guard of a full best-effort frame time (wrapping modulo the
    cycle). All remaining time opens every gate except the classes that
    own windows on the port, which stay closed outside them.
    """
    cycle = state.hyperperiod_ns
    if cycle == 0:
        return {}
    gcls: dict[str, GateControlList] = {}
    for port, windows in sorted(_port_windows(state, cycle).items()):
        link = state.topology.link_at(port)
        guard = wire_occupancy(MAX_FRAME_BYTES, link.speed_bps)
        entries = _build_entries(windows, guard, cycle)
        node_id = port.split(".", 1)[0]
        node = state.topology.node(node_id)
        if node.kind == "bridge" and len(entries) > node.gcl_max_entries:
            raise GclOverflowError(port, len(entries), node.gcl_max_entries)
        gcls[port] = GateControlList(port_id=port, cycle_ns=cycle, entries=tuple(entries))
    return gcls


def _build_entries(windows: list[_Window], guard: int, cycle: int) -> list[GclEntry]:
    # Split wrapped instances at the cycle boundary, then merge touching
    # same-class pieces.
    pieces: list[list[int]] = []
    for w in windows:
        if w.end <= cycle:
            pieces.append([w.start, w.end, w.traffic_class])
        else:
            pieces.append([w.start, cycle, w.traffic_class])
            pieces.append([0, w.end - cycle, w.traffic_class])
    pieces.sort()
    merged: list[list[int]] = []
    for piece in pieces:
        if merged and merged[-1][2] == piece[2] and merged[-1][1] == piece[0]:
            merged[-1][1] = piece[1]
        else:
            merged.append(piece)

    total = sum(e - s for s, e, _ in merged)
    if total >= cycle:
        # Degenerate fully-loaded port: scheduled windows tile the whole
        # cycle, leaving no room (or need) for guards.
        return [GclEntry(1 << c, e - s) for s, e, c in merged]

    owned = 0
    for _, _, c in merged:
        owned |= 1 << c
    others = 0xFF & ~owned

    # Spans are maximal runs of touching windows, joined across the cycle
    # boundary where needed; each gets one guard immediately before it.
    spans: list[list[list[int]]] = []
    for piece in merged:
        if spans and spans[-1][-1][1] == piece[0]:
            spans[-1].append(piece)
        else:
            spans.append([piece])
    if len(spans) > 1 and spans[0][0][0] == 0 and spans[-1][-1][1] == cycle:
        spans[0] = spans.pop() + spans[0]

    blocks: list[tuple[int, int, int]] = []  # (start mod cycle, length, mask)
    for span in spans:
        head = span[0][0]
        blocks.append(((head - guard) % cycle, guard, 0))
        for s, e, c in span:
            blocks.append((s % cycle, e - s, 1 << c))

    # Lay the blocks onto the cycle and fill the gaps with the others mask.
    flat: list[tuple[int, int, int]] = []
    for s, length, mask in blocks:
        if s + length <= cycle:
            flat.append((s, length, mask))
        else:
            flat.append((s, cycle - s, mask))
            flat.append((0, s + length - cycle, mask))
    flat.sort()
    entries: list[GclEntry] = []
    cursor = 0
    for s, length, mask in flat:
        if s > cursor:
            entries.append(GclEntry(others, s - cursor))
        entries.append(GclEntry(mask, length))
        cursor = s + length
    if cursor < cycle:
        entries.append(GclEntry(others, cycle - cursor))
    return entries


def bridge_config(state: CncState) -> list[dict]:
    """One configuration document per bridge owning at least one scheduled
    port: its gate control lists plus the VLAN memberships of the streams
    crossing it. Ordered by bridge id."""
    gcls = synthesize_gcls(state)
    by_bridge: dict[str, list[str]] = {}
    for port in gcls:
        node_id = port.split(".", 1)[0]
        if state.topology.node(node_id).kind == "bridge":
            by_bridge.setdefault(node_id, []).append(port)

    docs = []
    for bridge_id in sorted(by_bridge):
        ports = sorted(by_bridge[bridge_id])
        vlans = set()
        for sid, schedule in state.admitted.items():
            frame = state.requirements[sid].frame
            if any(res.port_id in ports for res in schedule.reservations):
                vlans.add((frame.vlan_id, frame.pcp))
        docs.append(
            {
                "bridge_id": bridge_id,
                "gcls": [gcls[p].to_doc() for p in ports],
                "vlans": [
                    {"vlan_id": v, "pcp": p} for v, p in sorted(vlans)
                ],
            }
        )
    return docs
