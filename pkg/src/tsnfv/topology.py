"""Physical substrate model: bridges, hosts, links, TSN domains.

The topology is loaded once from a JSON document and is immutable
afterwards, so concurrent readers need no locking. Paths are minimum-hop
with a lexicographic tie-break so that schedules are reproducible.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

from .errors import (
    NoPathError,
    ParseError,
    UnmappedDomainError,
    ValidationError,
)
from .model import check_identifier, port_key

NODE_KINDS = ("bridge", "compute_host", "external_station")
DOMAIN_KINDS = ("nfvi_pop", "wan_segment")

_NODE_KEYS = {
    "bridge": {"node_id", "kind", "domain_id", "processing_delay_ns", "gcl_max_entries", "supports_qbv"},
    "compute_host": {"node_id", "kind", "domain_id"},
    "external_station": {"node_id", "kind", "domain_id", "managed"},
}
_LINK_KEYS = {"link_id", "endpoints", "speed_bps", "propagation_ns"}
_DOMAIN_KEYS = {"kind", "controller_id"}


@dataclass(frozen=True)
class Node:
    node_id: str
    kind: str
    domain_id: str
    # bridge-only fields
    processing_delay_ns: int | None = None
    gcl_max_entries: int | None = None
    supports_qbv: bool | None = None
    # external_station-only: may MANO orchestrate it (PNF) or not
    managed: bool | None = None

    def __post_init__(self):
        check_identifier(self.node_id, "node_id")
        check_identifier(self.domain_id, "domain_id")
        if self.kind not in NODE_KINDS:
            raise ValidationError(f"node {self.node_id}: unknown kind {self.kind!r}")
        bridge_fields = (self.processing_delay_ns, self.gcl_max_entries, self.supports_qbv)
        if self.kind == "bridge":
            if any(v is None for v in bridge_fields):
                raise ValidationError(f"bridge {self.node_id} is missing bridge fields")
            if self.processing_delay_ns < 0:
                raise ValidationError(f"bridge {self.node_id}: processing_delay_ns must be >= 0")
            if self.gcl_max_entries < 2:
                raise ValidationError(f"bridge {self.node_id}: gcl_max_entries must be >= 2")
        else:
            if any(v is not None for v in bridge_fields):
                raise ValidationError(f"non-bridge {self.node_id} carries bridge fields")
        if self.kind == "external_station":
            if self.managed is None:
                raise ValidationError(f"external station {self.node_id} must declare managed")
        elif self.managed is not None:
            raise ValidationError(f"node {self.node_id}: managed is only valid on external stations")

    @property
    def forwarding_delay_ns(self) -> int:
        """Store-and-forward processing delay applied before this node can
        egress a received frame. Zero for end stations."""
        return self.processing_delay_ns if self.kind == "bridge" else 0

    @property
    def is_managed_station(self) -> bool:
        """Whether MANO may push configuration to this node. Hosts always;
        external stations only when flagged as orchestratable PNFs."""
        if self.kind == "compute_host":
            return True
        if self.kind == "external_station":
            return bool(self.managed)
        return False

    def to_doc(self) -> dict:
        doc = {"node_id": self.node_id, "kind": self.kind, "domain_id": self.domain_id}
        if self.kind == "bridge":
            doc["processing_delay_ns"] = self.processing_delay_ns
            doc["gcl_max_entries"] = self.gcl_max_entries
            doc["supports_qbv"] = self.supports_qbv
        if self.kind == "external_station":
            doc["managed"] = self.managed
        return doc


@dataclass(frozen=True)
class Link:
    """Full-duplex link between two (node, port) endpoints."""

    link_id: str
    node_a: str
    port_a: str
    node_b: str
    port_b: str
    speed_bps: int
    propagation_ns: int

    def __post_init__(self):
        check_identifier(self.link_id, "link_id")
        for ident in (self.node_a, self.port_a, self.node_b, self.port_b):
            check_identifier(ident, "link endpoint")
        if self.node_a == self.node_b:
            raise ValidationError(f"link {self.link_id}: endpoints on the same node")
        if self.speed_bps <= 0:
            raise ValidationError(f"link {self.link_id}: speed_bps must be positive")
        if self.propagation_ns < 0:
            raise ValidationError(f"link {self.link_id}: propagation_ns must be >= 0")

    def peer_of(self, node_id: str) -> tuple[str, str]:
        """(node, port) on the far side of the link from node_id."""
        if node_id == self.node_a:
            return self.node_b, self.port_b
        if node_id == self.node_b:
            return self.node_a, self.port_a
        raise ValidationError(f"node {node_id} is not on link {self.link_id}")

    def port_of(self, node_id: str) -> str:
        if node_id == self.node_a:
            return self.port_a
        if node_id == self.node_b:
            return self.port_b
        raise ValidationError(f"node {node_id} is not on link {self.link_id}")

    def to_doc(self) -> dict:
        return {
            "link_id": self.link_id,
            "endpoints": [
                {"node_id": self.node_a, "port_id": self.port_a},
                {"node_id": self.node_b, "port_id": self.port_b},
            ],
            "speed_bps": self.speed_bps,
            "propagation_ns": self.propagation_ns,
        }


@dataclass(frozen=True)
class Domain:
    domain_id: str
    kind: str
    controller_id: str

    def __post_init__(self):
        check_identifier(self.domain_id, "domain_id")
        check_identifier(self.controller_id, "controller_id")
        if self.kind not in DOMAIN_KINDS:
            raise ValidationError(f"domain {self.domain_id}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Hop:
    """One store-and-forward step: egress from a node's port over a link
    into the next node."""

    egress_node: str
    egress_port: str
    link_id: str
    ingress_node: str

    @property
    def port_key(self) -> str:
        return port_key(self.egress_node, self.egress_port)

    def to_doc(self) -> dict:
        return {
            "egress_node": self.egress_node,
            "egress_port": self.egress_port,
            "link_id": self.link_id,
            "ingress_node": self.ingress_node,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> Hop:
        return cls(doc["egress_node"], doc["egress_port"], doc["link_id"], doc["ingress_node"])


@dataclass(frozen=True)
class Path:
    hops: tuple[Hop, ...]


@dataclass(frozen=True)
class PathSegment:
    """Maximal run of consecutive hops whose egress nodes share one TSN
    domain; the unit of work handed to that domain's controller."""

    domain_id: str
    controller_id: str
    hops: tuple[Hop, ...]


class Topology:
    """Validated immutable substrate: nodes, links, domains, port map."""

    def __init__(self, nodes: dict[str, Node], links: dict[str, Link], domains: dict[str, Domain]):
        self.nodes = dict(sorted(nodes.items()))
        self.links = dict(sorted(links.items()))
        self.domains = dict(sorted(domains.items()))
        self._port_link: dict[str, Link] = {}
        self._adjacency: dict[str, list[Link]] = {n: [] for n in self.nodes}
        self._validate()

    def _validate(self):
        controllers_seen: dict[str, str] = {}
        for domain in self.domains.values():
            # one CNC per domain: controllers may not be shared
            prev = controllers_seen.get(domain.controller_id)
            if prev is not None:
                raise ValidationError(
                    f"controller {domain.controller_id} assigned to domains {prev} and {domain.domain_id}"
                )
            controllers_seen[domain.controller_id] = domain.domain_id
        for node in self.nodes.values():
            if node.domain_id not in self.domains:
                raise ValidationError(f"node {node.node_id}: domain {node.domain_id} not in domain map")
        for link in self.links.values():
            for node_id, port_id in ((link.node_a, link.port_a), (link.node_b, link.port_b)):
                if node_id not in self.nodes:
                    raise ValidationError(f"link {link.link_id}: unknown node {node_id}")
                key = port_key(node_id, port_id)
                if key in self._port_link:
                    raise ValidationError(f"port {key} is used by more than one link")
                self._port_link[key] = link
            self._adjacency[link.node_a].append(link)
            self._adjacency[link.node_b].append(link)
        for links in self._adjacency.values():
            links.sort(key=lambda l: l.link_id)

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ValidationError(f"unknown node {node_id}") from None

    def link(self, link_id: str) -> Link:
        try:
            return self.links[link_id]
        except KeyError:
            raise ValidationError(f"unknown link {link_id}") from None

    def link_at(self, key: str) -> Link | None:
        return self._port_link.get(key)

    def ports_of(self, node_id: str) -> list[str]:
        return sorted(
            link.port_of(node_id) for link in self._adjacency.get(node_id, [])
        )

    def bridges_in_domain(self, domain_id: str) -> list[Node]:
        return [
            n for n in self.nodes.values() if n.kind == "bridge" and n.domain_id == domain_id
        ]

    def all_port_keys(self) -> list[str]:
        """Every directed egress port, sorted."""
        keys = []
        for link in self.links.values():
            keys.append(port_key(link.node_a, link.port_a))
            keys.append(port_key(link.node_b, link.port_b))
        return sorted(keys)

    def to_doc(self) -> dict:
        return {
            "nodes": [n.to_doc() for n in self.nodes.values()],
            "links": [l.to_doc() for l in self.links.values()],
            "domains": {
                d.domain_id: {"kind": d.kind, "controller_id": d.controller_id}
                for d in self.domains.values()
            },
        }


def _require_keys(doc: dict, allowed: set[str], required: set[str], what: str):
    if not isinstance(doc, dict):
        raise ParseError(f"{what} must be an object")
    unknown = set(doc) - allowed
    if unknown:
        raise ParseError(f"{what}: unknown keys {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ParseError(f"{what}: missing keys {sorted(missing)}")


def parse_topology(doc: dict) -> Topology:
    """Build a validated Topology from a parsed document."""
    _require_keys(doc, {"nodes", "links", "domains"}, {"nodes", "links", "domains"}, "topology")

    nodes: dict[str, Node] = {}
    for entry in doc["nodes"]:
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ParseError("node entry must be an object with a kind")
        kind = entry["kind"]
        if kind not in _NODE_KEYS:
            raise ParseError(f"node entry has unknown kind {kind!r}")
        _require_keys(entry, _NODE_KEYS[kind], _NODE_KEYS[kind], f"node {entry.get('node_id')}")
        node = Node(
            node_id=entry["node_id"],
            kind=kind,
            domain_id=entry["domain_id"],
            processing_delay_ns=entry.get("processing_delay_ns"),
            gcl_max_entries=entry.get("gcl_max_entries"),
            supports_qbv=entry.get("supports_qbv"),
            managed=entry.get("managed"),
        )
        if node.node_id in nodes:
            raise ValidationError(f"duplicate node id {node.node_id}")
        nodes[node.node_id] = node

    links: dict[str, Link] = {}
    for entry in doc["links"]:
        _require_keys(entry, _LINK_KEYS, _LINK_KEYS, f"link {entry.get('link_id') if isinstance(entry, dict) else entry}")
        endpoints = entry["endpoints"]
        if not isinstance(endpoints, list) or len(endpoints) != 2:
            raise ParseError(f"link {entry['link_id']}: endpoints must be a 2-element list")
        for ep in endpoints:
            _require_keys(ep, {"node_id", "port_id"}, {"node_id", "port_id"}, "link endpoint")
        link = Link(
            link_id=entry["link_id"],
            node_a=endpoints[0]["node_id"],
            port_a=endpoints[0]["port_id"],
            node_b=endpoints[1]["node_id"],
            port_b=endpoints[1]["port_id"],
            speed_bps=entry["speed_bps"],
            propagation_ns=entry["propagation_ns"],
        )
        if link.link_id in links:
            raise ValidationError(f"duplicate link id {link.link_id}")
        links[link.link_id] = link

    domains: dict[str, Domain] = {}
    if not isinstance(doc["domains"], dict):
        raise ParseError("domains must be an object keyed by domain id")
    for domain_id, entry in doc["domains"].items():
        _require_keys(entry, _DOMAIN_KEYS, _DOMAIN_KEYS, f"domain {domain_id}")
        domains[domain_id] = Domain(domain_id, entry["kind"], entry["controller_id"])

    return Topology(nodes, links, domains)


def load_topology(text: str) -> Topology:
    """Parse and validate a topology JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"topology is not valid JSON: {exc}") from exc
    return parse_topology(doc)


def shortest_path(topology: Topology, src_node: str, dst_node: str) -> Path:
    """Minimum-hop path from src to dst.

    Ties are broken by the lexicographically smallest sequence of
    (egress node, egress port) pairs, so the result is deterministic for a
    given topology. Zero-hop requests (src == dst) are rejected: intra-host
    traffic never traverses a TSN bridge.
    """
    topology.node(src_node)
    topology.node(dst_node)
    if src_node == dst_node:
        raise NoPathError(f"no path: {src_node} to itself (zero-hop streams are rejected)")

    # Uniform edge cost, so a best-first search keyed on
    # (hop count, hop-sequence) yields the lexicographic minimum.
    heap: list[tuple[int, tuple[tuple[str, str], ...], str, tuple[Hop, ...]]] = [
        (0, (), src_node, ())
    ]
    settled: set[str] = set()
    while heap:
        hops_count, seq, node_id, hops = heapq.heappop(heap)
        if node_id == dst_node:
            return Path(hops)
        if node_id in settled:
            continue
        settled.add(node_id)
        for link in topology._adjacency[node_id]:
            egress_port = link.port_of(node_id)
            peer, _ = link.peer_of(node_id)
            if peer in settled:
                continue
            hop = Hop(node_id, egress_port, link.link_id, peer)
            heapq.heappush(
                heap,
                (hops_count + 1, seq + ((node_id, egress_port),), peer, hops + (hop,)),
            )
    raise NoPathError(f"no path from {src_node} to {dst_node}")


def split_by_domain(path: Path, topology: Topology) -> list[PathSegment]:
    """Cut a path into maximal runs of hops whose egress nodes share a
    domain. Segment concatenation reproduces the path."""
    segments: list[PathSegment] = []
    current: list[Hop] = []
    current_domain: str | None = None
    for hop in path.hops:
        node = topology.node(hop.egress_node)
        domain_id = node.domain_id
        if domain_id not in topology.domains:
            raise UnmappedDomainError(f"domain {domain_id} of node {node.node_id} is unmapped")
        if domain_id != current_domain:
            if current:
                segments.append(
                    PathSegment(
                        current_domain,
                        topology.domains[current_domain].controller_id,
                        tuple(current),
                    )
                )
            current = []
            current_domain = domain_id
        current.append(hop)
    if current:
        segments.append(
            PathSegment(
                current_domain,
                topology.domains[current_domain].controller_id,
                tuple(current),
            )
        )
    return segments
