"""Discrete-event verification oracle.

Replays admitted streams through the topology under the synthesized gate
schedules, with adversarial best-effort background traffic, and reports
observed worst-case latencies, drops, and gate violations. The simulator
is an independent implementation of the gating semantics: it shares no
scheduling code with the controller, so agreement between the two is
evidence, not tautology.

Transmission rule per egress port: the head-of-line frame of the
highest-numbered open-gate non-empty class transmits, and only if it fits
entirely before that gate next closes. Frames that do not fit wait; there
is no preemption and no fragmentation. Store-and-forward with a constant
per-bridge processing delay.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field

from .errors import SimConfigError, ValidationError
from .model import (
    GateControlList,
    MAX_FRAME_BYTES,
    StreamRequirement,
    StreamSchedule,
    hyperperiod,
    wire_occupancy,
)
from .topology import Topology

# Background queues are bounded; best-effort drops are reported but never
# fail verification, only scheduled traffic carries guarantees.
BG_QUEUE_CAP = 64
BE_CLASS = 0


@dataclass(frozen=True)
class SimConfig:
    duration_cycles: int = 3
    bg_load: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.duration_cycles, int) or self.duration_cycles < 1:
            raise SimConfigError(
                f"duration_cycles must be an integer >= 1, got {self.duration_cycles}"
            )
        if not 0.0 <= float(self.bg_load) <= 1.0:
            raise SimConfigError(f"bg_load must be in [0, 1], got {self.bg_load}")
        if not isinstance(self.seed, int):
            raise SimConfigError(f"seed must be an integer, got {self.seed!r}")


@dataclass(frozen=True)
class ScheduledFlow:
    """One admitted stream, flattened to its full talker-to-listener path:
    the egress ports in order, the talker launch offset, and the latency
    the scheduler promised."""

    requirement: StreamRequirement
    ports: tuple[str, ...]
    release_offset_ns: int
    planned_latency_ns: int


def flow_from_schedules(
    requirement: StreamRequirement, schedules: list[StreamSchedule]
) -> ScheduledFlow:
    """Flatten the per-segment schedules of one stream into a sim flow."""
    ports = tuple(
        res.port_id for schedule in schedules for res in schedule.reservations
    )
    return ScheduledFlow(
        requirement=requirement,
        ports=ports,
        release_offset_ns=schedules[0].reservations[0].window_start_ns,
        planned_latency_ns=schedules[-1].exit_offset_ns,
    )


@dataclass
class StreamReport:
    stream_id: str
    observed_worst_latency_ns: int = 0
    observed_frame_count: int = 0
    dropped_frames: int = 0

    def to_doc(self) -> dict:
        return {
            "stream_id": self.stream_id,
            "observed_worst_latency_ns": self.observed_worst_latency_ns,
            "observed_frame_count": self.observed_frame_count,
            "dropped_frames": self.dropped_frames,
        }


@dataclass
class SimReport:
    streams: dict[str, StreamReport] = field(default_factory=dict)
    gate_violations: dict[str, int] = field(default_factory=dict)
    be_sent: int = 0
    be_dropped: int = 0
    duration_ns: int = 0

    @property
    def total_violations(self) -> int:
        return sum(self.gate_violations.values())

    @property
    def total_dropped(self) -> int:
        return sum(s.dropped_frames for s in self.streams.values())

    def to_doc(self) -> dict:
        return {
            "streams": {sid: s.to_doc() for sid, s in sorted(self.streams.items())},
            "gate_violations": {p: v for p, v in sorted(self.gate_violations.items()) if v},
            "be_sent": self.be_sent,
            "be_dropped": self.be_dropped,
            "duration_ns": self.duration_ns,
        }


class _Gates:
    """Per-class open intervals of one port's gating cycle, merged
    cyclically. No gate control list means every gate is always open."""

    def __init__(self, gcl: GateControlList | None):
        self.cycle = gcl.cycle_ns if gcl else 0
        self.runs: dict[int, list[list[int]]] = {}
        if gcl is None:
            return
        for cls in range(8):
            marks: list[list[int]] = []
            t = 0
            for entry in gcl.entries:
                if entry.gate_states >> cls & 1:
                    if marks and marks[-1][0] + marks[-1][1] == t:
                        marks[-1][1] += entry.interval_ns
                    else:
                        marks.append([t, entry.interval_ns])
                t += entry.interval_ns
            if len(marks) > 1 and marks[0][0] == 0 and marks[-1][0] + marks[-1][1] == self.cycle:
                first = marks.pop(0)
                marks[-1][1] += first[1]
            self.runs[cls] = marks

    def max_run(self, cls: int) -> int | None:
        """Longest open run; None means always open."""
        if self.cycle == 0:
            return None
        runs = self.runs[cls]
        if not runs:
            return 0
        if runs[0][1] >= self.cycle:
            return None
        return max(length for _, length in runs)

    def _locate(self, cls: int, t: int) -> tuple[int | None, int | None]:
        """(time inside current open run ends, time next open run starts);
        exactly one is None."""
        if self.cycle == 0:
            return None, t  # always open, never closes: caller treats open
        runs = self.runs[cls]
        if not runs:
            return None, None
        if runs[0][1] >= self.cycle:
            return None, t
        tau = t % self.cycle
        best_wait = None
        for s, length in runs:
            for shift in (0, self.cycle):
                pos = tau + shift
                if s <= pos < s + length:
                    return t + (s + length - pos), None
            wait = (s - tau) % self.cycle
            if best_wait is None or wait < best_wait:
                best_wait = wait
        return None, t + best_wait

    def open_at(self, cls: int, t: int) -> bool:
        if self.cycle == 0:
            return True
        close, _ = self._locate(cls, t)
        return close is not None or (self.runs[cls] and self.runs[cls][0][1] >= self.cycle)

    def close_after(self, cls: int, t: int) -> int | None:
        """Next gate close strictly after t, assuming open at t; None if
        the gate never closes."""
        if self.cycle == 0:
            return None
        runs = self.runs[cls]
        if runs and runs[0][1] >= self.cycle:
            return None
        close, _ = self._locate(cls, t)
        return close

    def next_open(self, cls: int, t: int) -> int | None:
        """Earliest time >= t the gate is open; None if it never opens."""
        if self.cycle == 0:
            return t
        close, nxt = self._locate(cls, t)
        if close is not None:
            return t
        return nxt


class _Frame:
    __slots__ = ("flow", "cls", "bytes", "release_tick", "hop")

    def __init__(self, flow: int | None, cls: int, nbytes: int, release_tick: int):
        self.flow = flow  # index into flows, None for best effort
        self.cls = cls
        self.bytes = nbytes
        self.release_tick = release_tick
        self.hop = 0


class _Port:
    def __init__(self, key: str, speed_bps: int, gates: _Gates):
        self.key = key
        self.speed = speed_bps
        self.gates = gates
        self.queues: dict[int, deque[_Frame]] = {c: deque() for c in range(8)}
        self.busy_until = 0
        self.violations = 0


def simulate(
    topology: Topology,
    gcls: dict[str, GateControlList],
    flows: list[ScheduledFlow],
    cfg: SimConfig,
) -> SimReport:
    """Run the event simulation and collect the report. Deterministic for
    fixed inputs and seed."""
    report = SimReport()
    for flow in flows:
        report.streams[flow.requirement.stream_id] = StreamReport(
            stream_id=flow.requirement.stream_id
        )
    if not flows and cfg.bg_load == 0:
        return report

    periods = [f.requirement.traffic.period_ns for f in flows]
    sim_cycle = hyperperiod(periods) if periods else max(
        (g.cycle_ns for g in gcls.values()), default=1_000_000
    )
    t_end = cfg.duration_cycles * sim_cycle
    report.duration_ns = t_end

    port_keys = set(topology.all_port_keys()) | set(gcls)
    for flow in flows:
        for port in flow.ports:
            if topology.link_at(port) is None:
                raise ValidationError(f"flow {flow.requirement.stream_id}: unknown port {port}")
            port_keys.add(port)

    ports: dict[str, _Port] = {}
    for key in sorted(port_keys):
        link = topology.link_at(key)
        if link is None:
            raise ValidationError(f"gate control list for unknown port {key}")
        ports[key] = _Port(key, link.speed_bps, _Gates(gcls.get(key)))

    released: dict[int, int] = {i: 0 for i in range(len(flows))}
    delivered_worst: dict[int, int] = {}

    heap: list[tuple[int, int, str, object]] = []
    seq = 0

    def push(t: int, action: str, payload) -> None:
        nonlocal seq
        heapq.heappush(heap, (t, seq, action, payload))
        seq += 1

    # Scheduled releases: the talker launches the whole burst at its
    # per-instance transmission offset.
    for i, flow in enumerate(flows):
        period = flow.requirement.traffic.period_ns
        for k in range(cfg.duration_cycles * sim_cycle // period):
            push(flow.release_offset_ns + k * period, "rel", (i, k * period))

    # Background sources: one seeded arrival chain per port.
    be_wire = {key: wire_occupancy(MAX_FRAME_BYTES, p.speed) for key, p in ports.items()}
    if cfg.bg_load > 0:
        for idx, key in enumerate(sorted(ports)):
            rng = random.Random(cfg.seed * 1_000_003 + idx)
            base = max(1, round(be_wire[key] / cfg.bg_load))
            push(rng.randrange(0, base + 1), "bg", (key, rng, base))

    def enqueue(port: _Port, frame: _Frame, now: int) -> None:
        wire = wire_occupancy(frame.bytes, port.speed)
        cap = port.gates.max_run(frame.cls)
        if cap is not None and wire > cap:
            # No open run can ever carry this frame on this port.
            if frame.flow is None:
                report.be_dropped += 1
            return
        if frame.flow is None and len(port.queues[BE_CLASS]) >= BG_QUEUE_CAP:
            report.be_dropped += 1
            return
        port.queues[frame.cls].append(frame)
        push(now, "tx", port.key)

    def deliver(frame: _Frame, at: int) -> None:
        rec = report.streams[flows[frame.flow].requirement.stream_id]
        latency = at - frame.release_tick
        rec.observed_frame_count += 1
        if latency > rec.observed_worst_latency_ns:
            rec.observed_worst_latency_ns = latency

    while heap:
        t, _, action, payload = heapq.heappop(heap)

        if action == "rel":
            i, tick = payload
            flow = flows[i]
            traffic = flow.requirement.traffic
            port = ports[flow.ports[0]]
            released[i] += traffic.frames_per_period
            for _ in range(traffic.frames_per_period):
                enqueue(port, _Frame(i, flow.requirement.frame.pcp, traffic.max_frame_bytes, tick), t)
            continue

        if action == "bg":
            key, rng, base = payload
            if t < t_end:
                port = ports[key]
                enqueue(port, _Frame(None, BE_CLASS, MAX_FRAME_BYTES, t), t)
                jitter = rng.randrange(-(base // 8), base // 8 + 1) if base >= 8 else 0
                push(t + max(1, base + jitter), "bg", (key, rng, base))
            continue

        if action == "enq":
            key, frame = payload
            enqueue(ports[key], frame, t)
            continue

        # action == "tx"
        port = ports[payload]
        if t < port.busy_until:
            push(port.busy_until, "tx", port.key)
            continue
        chosen = None
        for cls in range(7, -1, -1):
            if port.queues[cls] and port.gates.open_at(cls, t):
                chosen = cls
                break
        if chosen is None:
            wake = None
            for cls in range(8):
                if not port.queues[cls]:
                    continue
                nxt = port.gates.next_open(cls, t)
                if nxt is not None and (wake is None or nxt < wake):
                    wake = nxt
            if wake is not None and wake > t:
                push(wake, "tx", port.key)
            continue
        frame = port.queues[chosen][0]
        wire = wire_occupancy(frame.bytes, port.speed)
        close = port.gates.close_after(chosen, t)
        if close is not None and t + wire > close:
            # Highest-priority head does not fit before its gate closes;
            # nothing transmits until the gate landscape changes.
            push(close, "tx", port.key)
            continue
        port.queues[chosen].popleft()
        port.busy_until = t + wire
        if close is not None and t + wire > close:
            port.violations += 1
        push(t + wire, "tx", port.key)

        if frame.flow is None:
            report.be_sent += 1
            continue
        flow = flows[frame.flow]
        link = topology.link_at(port.key)
        egress_node = port.key.split(".", 1)[0]
        peer_node, peer_port = link.peer_of(egress_node)
        arrival = t + wire + link.propagation_ns
        if frame.hop + 1 >= len(flow.ports):
            if peer_node != flow.requirement.listener.node_id:
                raise ValidationError(
                    f"flow {flow.requirement.stream_id}: path ends at {peer_node}, "
                    f"listener is at {flow.requirement.listener.node_id}"
                )
            deliver(frame, arrival)
        else:
            frame.hop += 1
            next_port = flow.ports[frame.hop]
            if not next_port.startswith(peer_node + "."):
                raise ValidationError(
                    f"flow {flow.requirement.stream_id}: hop {frame.hop} egresses "
                    f"{next_port}, frame arrived at {peer_node}"
                )
            ready = arrival + topology.node(peer_node).forwarding_delay_ns
            push(ready, "enq", (next_port, frame))

    for i, flow in enumerate(flows):
        rec = report.streams[flow.requirement.stream_id]
        rec.dropped_frames = released[i] - rec.observed_frame_count
    report.gate_violations = {key: p.violations for key, p in ports.items()}
    return report


def check_gcl_wellformed(gcl: GateControlList | dict, link_speed_bps: int) -> list[dict]:
    """Structural checks on one gate control list; empty result means ok.

    Accepts the document form as well, so hand-corrupted or hand-built
    lists that the typed constructor would reject can still be examined.
    """
    if isinstance(gcl, GateControlList):
        doc = gcl.to_doc()
    else:
        doc = gcl
    violations: list[dict] = []
    cycle = doc.get("cycle_ns", 0)
    entries = [(e.get("gate_states", 0), e.get("interval_ns", 0)) for e in doc.get("entries", [])]

    total = 0
    for mask, interval in entries:
        if interval <= 0:
            violations.append({"kind": "zero_length", "interval_ns": interval})
        total += interval
    if total != cycle:
        violations.append({"kind": "sum_mismatch", "sum_ns": total, "cycle_ns": cycle})

    # Scheduled windows carry exactly one open gate. Class 0 never owns a
    # window, so a lone bit 0 is the remaining-time mask of a port whose
    # other seven classes all hold windows, not a window itself.
    owned = 0
    for mask, _ in entries:
        if mask != 0 and mask != 0x01 and mask & (mask - 1) == 0:
            owned |= mask
    expected_others = 0xFF & ~owned
    for index, (mask, _) in enumerate(entries):
        if mask == 0 or (mask != 0x01 and mask & (mask - 1) == 0):
            continue
        if mask != expected_others:
            violations.append({"kind": "bad_window_gates", "entry": index, "gate_states": mask})

    # Guards must cover one full-size best-effort frame; a guard split by
    # the cycle boundary counts as one run.
    need = wire_occupancy(MAX_FRAME_BYTES, link_speed_bps)
    runs: list[list[int]] = []
    t = 0
    for mask, interval in entries:
        if mask == 0:
            if runs and runs[-1][0] + runs[-1][1] == t:
                runs[-1][1] += interval
            else:
                runs.append([t, interval])
        t += interval
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][0] + runs[-1][1] == total:
        first = runs.pop(0)
        runs[-1][1] += first[1]
    for start, length in runs:
        if length < need:
            violations.append(
                {"kind": "guard_too_short", "start_ns": start, "have_ns": length, "need_ns": need}
            )
    return violations


@dataclass
class VerifyResult:
    passed: bool
    gcl_violations: dict[str, list[dict]]
    reports: dict[str, SimReport]

    def to_doc(self) -> dict:
        return {
            "passed": self.passed,
            "gcl_violations": self.gcl_violations,
            "reports": {name: r.to_doc() for name, r in sorted(self.reports.items())},
        }


def verify_ns(instance, topology: Topology, gcls: dict[str, dict], cfg: SimConfig) -> VerifyResult:
    """Full verification of one active NS instance.

    Checks every gate control list structurally, then simulates at zero
    and at saturating background load (plus the configured load when it
    differs). Passes iff all lists are well formed, no scheduled frame is
    dropped, no gate is violated, every stream stays within its latency
    bound, and the runs agree on every scheduled latency.
    """
    if getattr(instance, "status", None) != "active":
        raise ValidationError(
            f"instance {getattr(instance, 'instance_id', '?')} is not active"
        )

    gcl_violations: dict[str, list[dict]] = {}
    for port, doc in sorted(gcls.items()):
        link = topology.link_at(port)
        if link is None:
            gcl_violations[port] = [{"kind": "unknown_port"}]
            continue
        found = check_gcl_wellformed(doc, link.speed_bps)
        if found:
            gcl_violations[port] = found
    if gcl_violations:
        return VerifyResult(passed=False, gcl_violations=gcl_violations, reports={})

    typed = {port: GateControlList.from_doc(doc) for port, doc in gcls.items()}
    flows = [
        flow_from_schedules(req, [sched for _, sched in chain])
        for req, chain in instance.stream_schedules()
    ]

    loads = [0.0, 1.0]
    if cfg.bg_load not in (0.0, 1.0):
        loads.append(cfg.bg_load)
    reports: dict[str, SimReport] = {}
    for load in loads:
        run_cfg = SimConfig(duration_cycles=cfg.duration_cycles, bg_load=load, seed=cfg.seed)
        reports[f"bg{load:g}"] = simulate(topology, typed, flows, run_cfg)

    passed = True
    baseline = reports["bg0"]
    for report in reports.values():
        if report.total_dropped or report.total_violations:
            passed = False
        for flow in flows:
            sid = flow.requirement.stream_id
            rec = report.streams[sid]
            if rec.observed_worst_latency_ns > flow.requirement.traffic.max_latency_ns:
                passed = False
            if rec.observed_worst_latency_ns != baseline.streams[sid].observed_worst_latency_ns:
                passed = False
    return VerifyResult(passed=passed, gcl_violations={}, reports=reports)
