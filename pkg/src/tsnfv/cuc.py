"""Centralized user configuration: the NFVO+VNFM side of the architecture.

Drives the NS lifecycle: derives streams from descriptors, routes them,
splits latency budgets across domains, negotiates per-segment admissions
over the UNI, and emits end-station configuration documents for managed
stations. Admission across segments is a saga: any failure triggers
compensating removals so that a failed instantiation leaves every
controller exactly as it was.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import descriptors
from .errors import (
    AdmissionFailedError,
    AlreadyTerminatedError,
    UnknownInstanceError,
    UnknownStreamError,
    UpdateFailedError,
    ValidationError,
)
from .model import GateControlList, StreamRequirement, StreamSchedule, wire_occupancy
from .topology import PathSegment, Topology, shortest_path, split_by_domain
from .uni import Dispatcher, RemoveStream, StreamRequest


def partition_latency_budget(max_latency_ns: int, hop_counts: list[int]) -> list[int]:
    """Split a stream's budget across its path segments in proportion to
    hop count; rounding remainder goes to the last segment."""
    total = sum(hop_counts)
    if total < 1:
        raise ValidationError("cannot partition a budget over zero hops")
    budgets = [max_latency_ns * hops // total for hops in hop_counts]
    budgets[-1] += max_latency_ns - sum(budgets)
    return budgets


@dataclass(frozen=True)
class EndStationConfig:
    """Configuration directives for one managed station endpoint: sync
    daemon, VLAN, priority mapping, process scheduling, and, for talkers,
    the egress gating schedule and per-instance transmission offsets."""

    station_id: str
    interface: str
    sync_daemon: bool
    vlan: tuple[int, int]  # (vlan_id, pcp)
    socket_priority_map: dict[str, int]
    scheduling_policy: str  # deadline | fifo_rt
    tas_schedule: dict | None = None
    txtime_offsets_ns: dict[str, list[int]] | None = None

    def to_doc(self) -> dict:
        doc = {
            "station_id": self.station_id,
            "interface": self.interface,
            "sync_daemon": self.sync_daemon,
            "vlan": list(self.vlan),
            "socket_priority_map": dict(sorted(self.socket_priority_map.items())),
            "scheduling_policy": self.scheduling_policy,
        }
        if self.tas_schedule is not None:
            doc["tas_schedule"] = self.tas_schedule
        if self.txtime_offsets_ns is not None:
            doc["txtime_offsets_ns"] = {
                k: list(v) for k, v in sorted(self.txtime_offsets_ns.items())
            }
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> EndStationConfig:
        return cls(
            station_id=doc["station_id"],
            interface=doc["interface"],
            sync_daemon=doc["sync_daemon"],
            vlan=tuple(doc["vlan"]),
            socket_priority_map=dict(doc["socket_priority_map"]),
            scheduling_policy=doc["scheduling_policy"],
            tas_schedule=doc.get("tas_schedule"),
            txtime_offsets_ns=doc.get("txtime_offsets_ns"),
        )


def generate_endstation_config(
    stream: StreamRequirement,
    schedules: list[StreamSchedule],
    role: str,
    topology: Topology,
    capabilities,
    egress_gcl: GateControlList | None = None,
) -> EndStationConfig | None:
    """Build the directive document for one station of one stream, or None
    for stations outside MANO responsibility (unmanaged external boxes).

    Talker configs additionally carry the egress gating schedule and the
    transmission offsets matching the first-hop reservation; listener
    configs stop at sync/VLAN/priority directives.
    """
    if role not in ("talker", "listener"):
        raise ValidationError(f"role must be talker or listener, got {role!r}")
    station = stream.talker if role == "talker" else stream.listener
    node = topology.node(station.node_id)
    if not node.is_managed_station:
        return None

    config = {
        "station_id": station.station_id,
        "interface": station.interface,
        "sync_daemon": True,
        "vlan": (stream.frame.vlan_id, stream.frame.pcp),
        "socket_priority_map": {str(stream.frame.pcp): stream.frame.pcp},
        "scheduling_policy": (
            "deadline" if getattr(capabilities, "rt_scheduling_policy", False) else "fifo_rt"
        ),
    }
    if role == "listener":
        return EndStationConfig(**config)

    if egress_gcl is None:
        raise ValidationError(
            f"talker config for {stream.stream_id} needs the egress gate schedule"
        )
    first = schedules[0].reservations[0]
    period = stream.traffic.period_ns
    cycle = schedules[0].cycle_ns
    offsets = [first.window_start_ns + k * period for k in range(cycle // period)]
    return EndStationConfig(
        **config,
        tas_schedule={
            "cycle_ns": egress_gcl.cycle_ns,
            "base_time_ns": egress_gcl.base_time_ns,
            "entries": [[e.gate_states, e.interval_ns] for e in egress_gcl.entries],
        },
        txtime_offsets_ns={stream.stream_id: offsets},
    )


@dataclass
class NsInstance:
    instance_id: str
    nsd: descriptors.Nsd
    placement: descriptors.Placement
    streams: list[StreamRequirement] = field(default_factory=list)
    # per stream id, the (domain, schedule) chain in talker->listener order
    schedules: dict[str, list[tuple[str, StreamSchedule]]] = field(default_factory=dict)
    configs: list[EndStationConfig] = field(default_factory=list)
    status: str = "active"

    def stream_schedules(self):
        """(requirement, chain) pairs in stream derivation order."""
        return [(req, self.schedules[req.stream_id]) for req in self.streams]

    def to_doc(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "status": self.status,
            "nsd": self.nsd.to_doc(),
            "placement": self.placement.to_doc(),
            "streams": [req.to_doc() for req in self.streams],
            "schedules": {
                sid: [
                    {"domain_id": domain, "schedule": sched.to_doc()}
                    for domain, sched in chain
                ]
                for sid, chain in sorted(self.schedules.items())
            },
            "configs": [c.to_doc() for c in self.configs],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> NsInstance:
        return cls(
            instance_id=doc["instance_id"],
            status=doc["status"],
            nsd=descriptors.parse_nsd(json.dumps(doc["nsd"])),
            placement=descriptors.parse_placement(json.dumps(doc["placement"])),
            streams=[StreamRequirement.from_doc(d) for d in doc["streams"]],
            schedules={
                sid: [
                    (e["domain_id"], StreamSchedule.from_doc(e["schedule"]))
                    for e in chain
                ]
                for sid, chain in doc["schedules"].items()
            },
            configs=[EndStationConfig.from_doc(d) for d in doc["configs"]],
        )


@dataclass(frozen=True)
class _RoutedStream:
    requirement: StreamRequirement
    segments: list[PathSegment]
    budgets: list[int]


class Cuc:
    """Orchestrator facade: owns instances, talks UNI, emits configs.

    gcl_provider, when given, maps a domain id to that domain's current
    synthesized gate control lists; talker configs need the talker port's
    full schedule, which only the owning controller can provide.
    """

    def __init__(self, topology: Topology, dispatcher: Dispatcher, gcl_provider=None):
        self.topology = topology
        self.dispatcher = dispatcher
        self.gcl_provider = gcl_provider
        self.instances: dict[str, NsInstance] = {}
        self.request_seq = 0
        self.instance_seq = 0

    def _next_request_id(self) -> str:
        self.request_seq += 1
        return f"req-{self.request_seq:04d}"

    def _next_instance_id(self) -> str:
        self.instance_seq += 1
        return f"ns-{self.instance_seq:04d}"

    def instance(self, instance_id: str) -> NsInstance:
        try:
            return self.instances[instance_id]
        except KeyError:
            raise UnknownInstanceError(f"no instance {instance_id}") from None

    # -- lifecycle ---------------------------------------------------------

    def instantiate_ns(
        self,
        nsd: descriptors.Nsd,
        placement: descriptors.Placement,
        instance_id: str | None = None,
    ) -> NsInstance:
        """Derive, route, admit, configure; all of it or none of it.

        Raises before any UNI traffic when descriptors, capabilities,
        placement, or routing are unusable. Raises AdmissionFailedError
        after rolling back every already-granted reservation when any
        segment admission fails; the failed instance is kept for audit.
        """
        if instance_id is None:
            instance_id = self._next_instance_id()
        prior = self.instances.get(instance_id)
        if prior is not None and prior.status == "active":
            raise ValidationError(f"instance {instance_id} is already active")

        streams = descriptors.derive_streams(nsd, placement)
        routed: list[_RoutedStream] = []
        for req in streams:
            descriptors.validate_capabilities(
                req,
                nsd.member_capabilities(req.talker.station_id),
                nsd.member_capabilities(req.listener.station_id),
            )
            path = shortest_path(self.topology, req.talker.node_id, req.listener.node_id)
            segments = split_by_domain(path, self.topology)
            budgets = partition_latency_budget(
                req.traffic.max_latency_ns, [len(s.hops) for s in segments]
            )
            routed.append(_RoutedStream(req, segments, budgets))

        # Deterministic global admission order; tightest periods first.
        order = sorted(
            routed,
            key=lambda r: (
                r.requirement.traffic.period_ns,
                r.requirement.traffic.max_latency_ns,
                r.requirement.stream_id,
            ),
        )

        granted: list[tuple[str, str]] = []  # (domain_id, stream_id)
        chains: dict[str, list[tuple[str, StreamSchedule]]] = {}
        for item in order:
            req = item.requirement
            chain: list[tuple[str, StreamSchedule]] = []
            entry_offset = 0
            entry_stride = 0
            for segment, budget in zip(item.segments, item.budgets):
                request = StreamRequest(
                    request_id=self._next_request_id(),
                    requirement=req,
                    hops=tuple(segment.hops),
                    latency_budget_ns=budget,
                    entry_offset_ns=entry_offset,
                    entry_stride_ns=entry_stride,
                )
                response = self.dispatcher.dispatch(request, segment.domain_id)
                if response.status != "ok":
                    self._rollback(granted)
                    failed = NsInstance(
                        instance_id=instance_id,
                        nsd=nsd,
                        placement=placement,
                        streams=streams,
                        status="failed",
                    )
                    self.instances[instance_id] = failed
                    raise AdmissionFailedError(
                        req.stream_id, segment.domain_id, response.cause or "unknown"
                    )
                granted.append((segment.domain_id, req.stream_id))
                chain.append((segment.domain_id, response.schedule))
                entry_offset = response.schedule.exit_offset_ns
                last_hop = segment.hops[-1]
                entry_stride = wire_occupancy(
                    req.traffic.max_frame_bytes,
                    self.topology.link(last_hop.link_id).speed_bps,
                )
            chains[req.stream_id] = chain

        configs = self._emit_configs(nsd, streams, chains)
        instance = NsInstance(
            instance_id=instance_id,
            nsd=nsd,
            placement=placement,
            streams=streams,
            schedules=chains,
            configs=configs,
            status="active",
        )
        self.instances[instance_id] = instance
        return instance

    def _rollback(self, granted: list[tuple[str, str]]) -> None:
        # compensate in reverse grant order
        for domain_id, stream_id in reversed(granted):
            self.dispatcher.dispatch(
                RemoveStream(request_id=self._next_request_id(), stream_id=stream_id),
                domain_id,
            )

    def _emit_configs(self, nsd, streams, chains) -> list[EndStationConfig]:
        """One config per managed endpoint: each endpoint talks exactly one
        of its VL's two streams, and the talker document is a superset of
        the listener one, so emitting per talked stream covers everything."""
        configs = []
        for req in streams:
            chain = chains[req.stream_id]
            first_domain = chain[0][0]
            schedules = [sched for _, sched in chain]
            gcl = None
            if self.gcl_provider is not None:
                port = schedules[0].reservations[0].port_id
                gcl = self.gcl_provider(first_domain).get(port)
            config = generate_endstation_config(
                req,
                schedules,
                "talker",
                self.topology,
                nsd.member_capabilities(req.talker.station_id),
                egress_gcl=gcl,
            )
            if config is not None:
                configs.append(config)
        return configs

    def terminate_ns(self, instance_id: str) -> NsInstance:
        """Release every reservation of the instance; the schedule and
        config documents stay on the instance for audit. Bridges need no
        touch beyond the controllers dropping the windows; end stations
        get no reconfiguration."""
        instance = self.instance(instance_id)
        if instance.status != "active":
            raise AlreadyTerminatedError(
                f"instance {instance_id} is {instance.status}, not active"
            )
        self._release_all(instance)
        instance.status = "terminated"
        return instance

    def _release_all(self, instance: NsInstance) -> None:
        for req in instance.streams:
            for domain_id, _ in instance.schedules.get(req.stream_id, []):
                response = self.dispatcher.dispatch(
                    RemoveStream(
                        request_id=self._next_request_id(), stream_id=req.stream_id
                    ),
                    domain_id,
                )
                if response.status != "ok":
                    raise UnknownStreamError(
                        f"controller {domain_id} no longer holds {req.stream_id}: "
                        f"{response.detail}"
                    )

    def update_ns(
        self,
        instance_id: str,
        new_nsd: descriptors.Nsd,
        new_placement: descriptors.Placement,
    ) -> NsInstance:
        """Replace an instance's descriptors: terminate, then re-instantiate
        under the same id. If the new spec cannot be admitted, the original
        one is re-admitted; capacity was just freed, so greedy re-admission
        succeeds, though possibly with different window positions."""
        instance = self.instance(instance_id)
        if instance.status != "active":
            raise UnknownInstanceError(f"instance {instance_id} is {instance.status}")
        old_nsd, old_placement = instance.nsd, instance.placement

        self._release_all(instance)
        instance.status = "terminated"
        try:
            return self.instantiate_ns(new_nsd, new_placement, instance_id=instance_id)
        except Exception as exc:
            cause = str(exc)
            try:
                restored_instance = self.instantiate_ns(
                    old_nsd, old_placement, instance_id=instance_id
                )
                restored = restored_instance.status == "active"
            except Exception:
                restored = False
            raise UpdateFailedError(cause, restored) from exc
