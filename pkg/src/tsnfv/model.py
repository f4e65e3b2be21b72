"""Core domain types and time arithmetic.

All time quantities are exact integer nanoseconds. Link speeds are bits per
second. The values here are immutable and every operation is a pure
function, so they are safe to share between any number of callers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import HyperperiodOverflowError, ValidationError

# The network-wide schedule cycle is the LCM of all stream periods; cap it
# so schedules and simulations stay desk-sized.
HYPERPERIOD_CAP_NS = 1_000_000_000

# Preamble (8 B) + inter-frame gap (12 B): frames cannot be packed tighter
# than this on a real link.
WIRE_OVERHEAD_BYTES = 20

MIN_FRAME_BYTES = 64
MAX_FRAME_BYTES = 1522

_MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")
_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")
# Stream ids are derived from a link id plus a '~'-separated direction
# suffix, so they get one extra allowed character.
_STREAM_ID_RE = re.compile(r"^[A-Za-z0-9_~-]+$")

# Identifier for one directed egress port; separator matches CLI usage
# ("B1.p1"), which is why ids themselves may not contain '.'.
def port_key(node_id: str, port_id: str) -> str:
    return f"{node_id}.{port_id}"


def check_identifier(value: str, what: str) -> str:
    if not isinstance(value, str) or not _ID_RE.match(value):
        raise ValidationError(f"{what} must match [A-Za-z0-9_-]+, got {value!r}")
    return value


def check_stream_id(value: str, what: str = "stream_id") -> str:
    if not isinstance(value, str) or not _STREAM_ID_RE.match(value):
        raise ValidationError(f"{what} must match [A-Za-z0-9_~-]+, got {value!r}")
    return value


def check_mac(value: str, what: str) -> str:
    if not isinstance(value, str) or not _MAC_RE.match(value.lower()):
        raise ValidationError(f"{what} is not a 48-bit MAC address: {value!r}")
    return value.lower()


@dataclass(frozen=True)
class TrafficSpec:
    """Periodic traffic contract of one stream: how often, how much, and the
    latency bound the network must honour."""

    period_ns: int
    max_frame_bytes: int
    frames_per_period: int
    max_latency_ns: int

    def __post_init__(self):
        if self.period_ns <= 0:
            raise ValidationError(f"period_ns must be positive, got {self.period_ns}")
        if not MIN_FRAME_BYTES <= self.max_frame_bytes <= MAX_FRAME_BYTES:
            raise ValidationError(
                f"max_frame_bytes must be in [{MIN_FRAME_BYTES}, {MAX_FRAME_BYTES}], "
                f"got {self.max_frame_bytes}"
            )
        if self.frames_per_period < 1:
            raise ValidationError(f"frames_per_period must be >= 1, got {self.frames_per_period}")
        if self.max_latency_ns <= 0:
            raise ValidationError(f"max_latency_ns must be positive, got {self.max_latency_ns}")

    def to_doc(self) -> dict:
        return {
            "period_ns": self.period_ns,
            "max_frame_bytes": self.max_frame_bytes,
            "frames_per_period": self.frames_per_period,
            "max_latency_ns": self.max_latency_ns,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> TrafficSpec:
        return cls(
            period_ns=doc["period_ns"],
            max_frame_bytes=doc["max_frame_bytes"],
            frames_per_period=doc["frames_per_period"],
            max_latency_ns=doc["max_latency_ns"],
        )


@dataclass(frozen=True)
class DataFrameSpec:
    """L2/L3 identification of the stream's frames."""

    src_mac: str
    dst_mac: str
    vlan_id: int
    pcp: int
    src_ip: str | None = None
    dst_ip: str | None = None

    def __post_init__(self):
        check_mac(self.src_mac, "src_mac")
        check_mac(self.dst_mac, "dst_mac")
        if self.src_mac == self.dst_mac:
            raise ValidationError("src_mac and dst_mac must differ")
        if not 1 <= self.vlan_id <= 4094:
            raise ValidationError(f"vlan_id must be in [1, 4094], got {self.vlan_id}")
        if not 0 <= self.pcp <= 7:
            raise ValidationError(f"pcp must be in [0, 7], got {self.pcp}")

    def to_doc(self) -> dict:
        doc = {
            "src_mac": self.src_mac,
            "dst_mac": self.dst_mac,
            "vlan_id": self.vlan_id,
            "pcp": self.pcp,
        }
        if self.src_ip is not None:
            doc["src_ip"] = self.src_ip
        if self.dst_ip is not None:
            doc["dst_ip"] = self.dst_ip
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> DataFrameSpec:
        return cls(
            src_mac=doc["src_mac"],
            dst_mac=doc["dst_mac"],
            vlan_id=doc["vlan_id"],
            pcp=doc["pcp"],
            src_ip=doc.get("src_ip"),
            dst_ip=doc.get("dst_ip"),
        )


@dataclass(frozen=True)
class EndpointRef:
    """One end station interface taking part in a stream."""

    station_id: str
    interface: str
    node_id: str

    def __post_init__(self):
        check_identifier(self.station_id, "station_id")
        check_identifier(self.interface, "interface")
        check_identifier(self.node_id, "node_id")

    def to_doc(self) -> dict:
        return {
            "station_id": self.station_id,
            "interface": self.interface,
            "node_id": self.node_id,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> EndpointRef:
        return cls(doc["station_id"], doc["interface"], doc["node_id"])


@dataclass(frozen=True)
class StreamRequirement:
    """One unidirectional talker-to-listener stream with its frame
    identification and traffic contract. Exactly one listener; multicast is
    unsupported."""

    stream_id: str
    talker: EndpointRef
    listener: EndpointRef
    frame: DataFrameSpec
    traffic: TrafficSpec

    def __post_init__(self):
        check_stream_id(self.stream_id)
        if (
            self.talker.node_id == self.listener.node_id
            and self.talker.interface == self.listener.interface
        ):
            raise ValidationError(
                f"stream {self.stream_id}: talker and listener refer to the same interface"
            )

    def to_doc(self) -> dict:
        return {
            "stream_id": self.stream_id,
            "talker": self.talker.to_doc(),
            "listener": self.listener.to_doc(),
            "frame": self.frame.to_doc(),
            "traffic": self.traffic.to_doc(),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> StreamRequirement:
        return cls(
            stream_id=doc["stream_id"],
            talker=EndpointRef.from_doc(doc["talker"]),
            listener=EndpointRef.from_doc(doc["listener"]),
            frame=DataFrameSpec.from_doc(doc["frame"]),
            traffic=TrafficSpec.from_doc(doc["traffic"]),
        )


@dataclass(frozen=True)
class GclEntry:
    """One (gate-state, interval) step of a port's gating cycle. Bit i of
    gate_states open means traffic class i may transmit."""

    gate_states: int
    interval_ns: int

    def __post_init__(self):
        if not 0 <= self.gate_states <= 0xFF:
            raise ValidationError(f"gate_states must be an 8-bit mask, got {self.gate_states}")
        if self.interval_ns <= 0:
            raise ValidationError(f"interval_ns must be positive, got {self.interval_ns}")

    def to_doc(self) -> dict:
        return {"gate_states": self.gate_states, "interval_ns": self.interval_ns}

    @classmethod
    def from_doc(cls, doc: dict) -> GclEntry:
        return cls(doc["gate_states"], doc["interval_ns"])


@dataclass(frozen=True)
class GateControlList:
    """Cyclic gate schedule of one egress port. base_time is fixed at 0:
    every port shares the synchronized epoch."""

    port_id: str
    cycle_ns: int
    entries: tuple[GclEntry, ...]
    base_time_ns: int = 0

    def __post_init__(self):
        if self.cycle_ns <= 0:
            raise ValidationError(f"cycle_ns must be positive, got {self.cycle_ns}")
        if not self.entries:
            raise ValidationError(f"GCL for {self.port_id} has no entries")
        total = sum(e.interval_ns for e in self.entries)
        if total != self.cycle_ns:
            raise ValidationError(
                f"GCL for {self.port_id}: entries sum to {total}, cycle is {self.cycle_ns}"
            )

    def to_doc(self) -> dict:
        return {
            "port_id": self.port_id,
            "cycle_ns": self.cycle_ns,
            "base_time_ns": self.base_time_ns,
            "entries": [e.to_doc() for e in self.entries],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> GateControlList:
        return cls(
            port_id=doc["port_id"],
            cycle_ns=doc["cycle_ns"],
            entries=tuple(GclEntry.from_doc(e) for e in doc["entries"]),
            base_time_ns=doc.get("base_time_ns", 0),
        )


@dataclass(frozen=True)
class HopReservation:
    """Reserved transmission window of one stream on one egress port.

    Offsets are relative to the stream's nominal release tick (k * period
    for instance k); the same window repeats every period. queue_from_ns is
    when the stream's frames enter the egress queue, used to keep same-class
    queue order consistent with window order.
    """

    port_id: str
    window_start_ns: int
    window_end_ns: int
    traffic_class: int
    stream_id: str
    queue_from_ns: int

    def __post_init__(self):
        if self.window_end_ns <= self.window_start_ns:
            raise ValidationError(
                f"reservation on {self.port_id}: window end must exceed start"
            )
        if not 0 <= self.traffic_class <= 7:
            raise ValidationError(f"traffic_class must be in [0, 7], got {self.traffic_class}")
        if self.queue_from_ns > self.window_start_ns:
            raise ValidationError(
                f"reservation on {self.port_id}: frames enqueue after their window opens"
            )

    @property
    def length_ns(self) -> int:
        return self.window_end_ns - self.window_start_ns

    def to_doc(self) -> dict:
        return {
            "port_id": self.port_id,
            "window_start_ns": self.window_start_ns,
            "window_end_ns": self.window_end_ns,
            "traffic_class": self.traffic_class,
            "stream_id": self.stream_id,
            "queue_from_ns": self.queue_from_ns,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> HopReservation:
        return cls(
            port_id=doc["port_id"],
            window_start_ns=doc["window_start_ns"],
            window_end_ns=doc["window_end_ns"],
            traffic_class=doc["traffic_class"],
            stream_id=doc["stream_id"],
            queue_from_ns=doc["queue_from_ns"],
        )


@dataclass(frozen=True)
class StreamSchedule:
    """Result of admitting one stream onto one path segment: the per-hop
    reserved windows in path order plus the latency from the segment entry
    to the last bit arriving at the segment exit."""

    stream_id: str
    reservations: tuple[HopReservation, ...]
    e2e_latency_ns: int
    cycle_ns: int
    entry_offset_ns: int = 0

    def __post_init__(self):
        if not self.reservations:
            raise ValidationError(f"schedule for {self.stream_id} has no reservations")

    @property
    def exit_offset_ns(self) -> int:
        """Offset (after each release tick) at which the last bit leaves the
        segment, i.e. arrives at the next segment's entry or the listener."""
        return self.entry_offset_ns + self.e2e_latency_ns

    def to_doc(self) -> dict:
        return {
            "stream_id": self.stream_id,
            "reservations": [r.to_doc() for r in self.reservations],
            "e2e_latency_ns": self.e2e_latency_ns,
            "cycle_ns": self.cycle_ns,
            "entry_offset_ns": self.entry_offset_ns,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> StreamSchedule:
        return cls(
            stream_id=doc["stream_id"],
            reservations=tuple(HopReservation.from_doc(r) for r in doc["reservations"]),
            e2e_latency_ns=doc["e2e_latency_ns"],
            cycle_ns=doc["cycle_ns"],
            entry_offset_ns=doc.get("entry_offset_ns", 0),
        )


@dataclass(frozen=True)
class CapabilitySet:
    """Boolean capability flags of an end station. The host-level real-time
    mechanisms behind them are out of scope; only the flags travel."""

    time_sync: bool = False
    qbv_shaping: bool = False
    rt_scheduling_policy: bool = False
    rt_kernel_or_hypervisor: bool = False
    hw_isolation: bool = False

    FLAGS = (
        "time_sync",
        "qbv_shaping",
        "rt_scheduling_policy",
        "rt_kernel_or_hypervisor",
        "hw_isolation",
    )

    def to_doc(self) -> dict:
        return {name: getattr(self, name) for name in self.FLAGS}

    @classmethod
    def from_doc(cls, doc: dict) -> CapabilitySet:
        unknown = set(doc) - set(cls.FLAGS)
        if unknown:
            raise ValidationError(f"unknown capability flags: {sorted(unknown)}")
        return cls(**{name: bool(doc[name]) for name in doc})


def hyperperiod(periods: list[int]) -> int:
    """LCM of the given periods: the cycle of the network-wide schedule.

    Raises HyperperiodOverflowError beyond 1 s; such period mixes are
    treated as unschedulable rather than allowed to blow up schedule and
    simulation sizes.
    """
    if not periods:
        raise ValidationError("hyperperiod of an empty period list is undefined")
    for p in periods:
        if p <= 0:
            raise ValidationError(f"periods must be positive, got {p}")
    result = math.lcm(*periods)
    if result > HYPERPERIOD_CAP_NS:
        raise HyperperiodOverflowError(
            f"hyperperiod {result} ns exceeds cap {HYPERPERIOD_CAP_NS} ns"
        )
    return result


def wire_occupancy(frame_bytes: int, link_speed_bps: int) -> int:
    """Time one frame occupies the wire, including preamble and inter-frame
    gap, rounded up to whole nanoseconds."""
    if frame_bytes < MIN_FRAME_BYTES:
        raise ValidationError(f"frame_bytes must be >= {MIN_FRAME_BYTES}, got {frame_bytes}")
    if link_speed_bps <= 0:
        raise ValidationError(f"link_speed_bps must be positive, got {link_speed_bps}")
    bits = (frame_bytes + WIRE_OVERHEAD_BYTES) * 8
    return -(-bits * 1_000_000_000 // link_speed_bps)


def burst_occupancy(spec: TrafficSpec, link_speed_bps: int) -> int:
    """Wire time of one full period's burst, sent back to back."""
    return spec.frames_per_period * wire_occupancy(spec.max_frame_bytes, link_speed_bps)
