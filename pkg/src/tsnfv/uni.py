"""User/Network Interface between the orchestrator and domain controllers.

Message schema, newline-delimited JSON codec, controller registry, and the
dispatcher that realizes the Or-Vi (orchestrator to VIM) and Or-Wi
(orchestrator to WIM) reference points. In-process handles and socket
transports are interchangeable: every request travels through the codec
either way, so tests exercise the same bytes the service mode ships.
"""

from __future__ import annotations

import json
import socket
from dataclasses import dataclass

from .errors import (
    CapabilityError,
    DecodeError,
    HyperperiodOverflowError,
    InfeasibleError,
    ParseError,
    TransportError,
    UnknownDomainError,
    UnknownStreamError,
    ValidationError,
)
from .model import StreamRequirement, StreamSchedule
from .topology import Domain, Hop, PathSegment
from . import cnc

# reference_point is a pure function of the controller kind
REFERENCE_POINTS = {"vim": "Or-Vi", "wim": "Or-Wi"}
_DOMAIN_CONTROLLER_KINDS = {"nfvi_pop": "vim", "wan_segment": "wim"}

FAILURE_CAUSES = (
    "infeasible_budget",
    "no_free_window",
    "capability",
    "unknown_stream",
    "malformed",
)


def controller_kind(domain_kind: str) -> str:
    try:
        return _DOMAIN_CONTROLLER_KINDS[domain_kind]
    except KeyError:
        raise ValidationError(f"no controller kind for domain kind {domain_kind!r}") from None


def reference_point(kind: str) -> str:
    try:
        return REFERENCE_POINTS[kind]
    except KeyError:
        raise ValidationError(f"unknown controller kind {kind!r}") from None


@dataclass(frozen=True)
class StreamRequest:
    request_id: str
    requirement: StreamRequirement
    hops: tuple[Hop, ...]
    latency_budget_ns: int
    entry_offset_ns: int = 0
    entry_stride_ns: int = 0

    kind = "stream_request"


@dataclass(frozen=True)
class RemoveStream:
    request_id: str
    stream_id: str

    kind = "remove_stream"


@dataclass(frozen=True)
class CapabilityQuery:
    request_id: str

    kind = "capability_query"


@dataclass(frozen=True)
class UniResponse:
    request_id: str
    status: str  # ok | failed
    schedule: StreamSchedule | None = None
    cause: str | None = None
    detail: str = ""
    domain_id: str | None = None
    capabilities: tuple[dict, ...] | None = None

    kind = "response"

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise ValidationError(f"response status must be ok or failed, got {self.status!r}")
        if self.status == "failed" and self.cause not in FAILURE_CAUSES:
            raise ValidationError(f"unknown failure cause {self.cause!r}")


UniMessage = StreamRequest | RemoveStream | CapabilityQuery | UniResponse


def _message_doc(msg: UniMessage) -> dict:
    doc: dict = {"kind": msg.kind, "request_id": msg.request_id}
    if isinstance(msg, StreamRequest):
        doc["requirement"] = msg.requirement.to_doc()
        doc["hops"] = [h.to_doc() for h in msg.hops]
        doc["latency_budget_ns"] = msg.latency_budget_ns
        doc["entry_offset_ns"] = msg.entry_offset_ns
        doc["entry_stride_ns"] = msg.entry_stride_ns
    elif isinstance(msg, RemoveStream):
        doc["stream_id"] = msg.stream_id
    elif isinstance(msg, CapabilityQuery):
        pass
    elif isinstance(msg, UniResponse):
        doc["status"] = msg.status
        if msg.schedule is not None:
            doc["schedule"] = msg.schedule.to_doc()
        if msg.cause is not None:
            doc["cause"] = msg.cause
        if msg.detail:
            doc["detail"] = msg.detail
        if msg.domain_id is not None:
            doc["domain_id"] = msg.domain_id
        if msg.capabilities is not None:
            doc["capabilities"] = list(msg.capabilities)
    else:
        raise ValidationError(f"not a UNI message: {msg!r}")
    return doc


def encode_message(msg: UniMessage) -> bytes:
    """One canonical JSON object per line."""
    return (json.dumps(_message_doc(msg), sort_keys=True, separators=(",", ":")) + "\n").encode()


def _need(doc: dict, key: str, line_kind: str):
    if key not in doc:
        raise DecodeError(f"{line_kind} message is missing {key!r}")
    return doc[key]


def decode_message(line: bytes | str) -> UniMessage:
    if isinstance(line, bytes):
        try:
            line = line.decode()
        except UnicodeDecodeError as exc:
            raise DecodeError(f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"not a JSON object: {exc}") from None
    if not isinstance(doc, dict):
        raise DecodeError("top level is not an object")
    kind = doc.get("kind")
    try:
        if kind == "stream_request":
            return StreamRequest(
                request_id=_need(doc, "request_id", kind),
                requirement=StreamRequirement.from_doc(_need(doc, "requirement", kind)),
                hops=tuple(Hop.from_doc(h) for h in _need(doc, "hops", kind)),
                latency_budget_ns=_need(doc, "latency_budget_ns", kind),
                entry_offset_ns=doc.get("entry_offset_ns", 0),
                entry_stride_ns=doc.get("entry_stride_ns", 0),
            )
        if kind == "remove_stream":
            return RemoveStream(
                request_id=_need(doc, "request_id", kind),
                stream_id=_need(doc, "stream_id", kind),
            )
        if kind == "capability_query":
            return CapabilityQuery(request_id=_need(doc, "request_id", kind))
        if kind == "response":
            schedule = doc.get("schedule")
            caps = doc.get("capabilities")
            return UniResponse(
                request_id=_need(doc, "request_id", kind),
                status=_need(doc, "status", kind),
                schedule=StreamSchedule.from_doc(schedule) if schedule is not None else None,
                cause=doc.get("cause"),
                detail=doc.get("detail", ""),
                domain_id=doc.get("domain_id"),
                capabilities=tuple(caps) if caps is not None else None,
            )
    except (ValidationError, ParseError, TypeError, KeyError, AttributeError) as exc:
        raise DecodeError(f"bad {kind} payload: {exc!r}") from None
    raise DecodeError(f"unknown message kind {kind!r}")


class CncService:
    """One domain controller behind the byte protocol.

    Owns the domain's scheduling state; translates admission outcomes into
    response causes. A line that cannot be decoded yields a failed
    response rather than tearing down the transport.
    """

    def __init__(self, state: cnc.CncState, domain: Domain):
        if domain.domain_id != state.domain_id:
            raise ValidationError(
                f"controller for {domain.domain_id} handed state for {state.domain_id}"
            )
        self.state = state
        self.domain = domain

    def handle_line(self, line: bytes) -> bytes:
        try:
            msg = decode_message(line)
        except DecodeError as exc:
            return encode_message(
                UniResponse(
                    request_id=_fish_request_id(line),
                    status="failed",
                    cause="malformed",
                    detail=str(exc),
                    domain_id=self.state.domain_id,
                )
            )
        if isinstance(msg, UniResponse):
            return encode_message(
                UniResponse(
                    request_id=msg.request_id,
                    status="failed",
                    cause="malformed",
                    detail="a response is not a request",
                    domain_id=self.state.domain_id,
                )
            )
        return encode_message(self.handle(msg))

    def handle(self, msg: StreamRequest | RemoveStream | CapabilityQuery) -> UniResponse:
        if isinstance(msg, StreamRequest):
            return self._handle_stream_request(msg)
        if isinstance(msg, RemoveStream):
            return self._handle_remove(msg)
        return self._handle_capability_query(msg)

    def _fail(self, request_id: str, cause: str, detail: str) -> UniResponse:
        return UniResponse(
            request_id=request_id,
            status="failed",
            cause=cause,
            detail=detail,
            domain_id=self.state.domain_id,
        )

    def _handle_stream_request(self, msg: StreamRequest) -> UniResponse:
        for hop in msg.hops:
            node = self.state.topology.nodes.get(hop.egress_node)
            if node is None or node.domain_id != self.state.domain_id:
                return self._fail(
                    msg.request_id,
                    "malformed",
                    f"hop {hop.port_key} is not in domain {self.state.domain_id}",
                )
        segment = PathSegment(
            domain_id=self.state.domain_id,
            controller_id=self.domain.controller_id,
            hops=msg.hops,
        )
        try:
            schedule = cnc.admit_stream(
                self.state,
                msg.requirement,
                segment,
                msg.latency_budget_ns,
                entry_offset_ns=msg.entry_offset_ns,
                entry_stride_ns=msg.entry_stride_ns,
            )
        except InfeasibleError as exc:
            cause = "infeasible_budget" if exc.cause == "exceeds_budget" else "no_free_window"
            return self._fail(msg.request_id, cause, exc.detail or str(exc))
        except CapabilityError as exc:
            return self._fail(msg.request_id, "capability", str(exc))
        except HyperperiodOverflowError as exc:
            # an unrepresentable cycle means no window can be planned
            return self._fail(msg.request_id, "no_free_window", str(exc))
        except (ValidationError, ParseError) as exc:
            return self._fail(msg.request_id, "malformed", str(exc))
        return UniResponse(
            request_id=msg.request_id,
            status="ok",
            schedule=schedule,
            domain_id=self.state.domain_id,
        )

    def _handle_remove(self, msg: RemoveStream) -> UniResponse:
        try:
            cnc.remove_stream(self.state, msg.stream_id)
        except UnknownStreamError as exc:
            return self._fail(msg.request_id, "unknown_stream", str(exc))
        return UniResponse(
            request_id=msg.request_id, status="ok", domain_id=self.state.domain_id
        )

    def _handle_capability_query(self, msg: CapabilityQuery) -> UniResponse:
        summaries = tuple(
            {
                "bridge_id": bridge.node_id,
                "supports_qbv": bridge.supports_qbv,
                "gcl_max_entries": bridge.gcl_max_entries,
                "processing_delay_ns": bridge.processing_delay_ns,
            }
            for bridge in sorted(
                self.state.topology.bridges_in_domain(self.state.domain_id),
                key=lambda b: b.node_id,
            )
        )
        return UniResponse(
            request_id=msg.request_id,
            status="ok",
            domain_id=self.state.domain_id,
            capabilities=summaries,
        )


def _fish_request_id(line: bytes | str) -> str:
    try:
        if isinstance(line, bytes):
            line = line.decode()
        doc = json.loads(line)
        rid = doc.get("request_id") if isinstance(doc, dict) else None
        return rid if isinstance(rid, str) else "unknown"
    except Exception:
        return "unknown"


@dataclass(frozen=True)
class CncEntry:
    """One registered controller: who it is and how to reach it."""

    domain_id: str
    controller_id: str
    kind: str  # vim | wim
    handle: object  # CncService-like, or (host, port) address

    def __post_init__(self):
        if self.kind not in REFERENCE_POINTS:
            raise ValidationError(f"controller kind must be vim or wim, got {self.kind!r}")


class CncRegistry:
    def __init__(self):
        self._entries: dict[str, CncEntry] = {}

    def register(self, entry: CncEntry):
        if entry.domain_id in self._entries:
            raise ValidationError(f"domain {entry.domain_id} registered twice")
        self._entries[entry.domain_id] = entry

    def entry(self, domain_id: str) -> CncEntry:
        try:
            return self._entries[domain_id]
        except KeyError:
            raise UnknownDomainError(f"no controller registered for domain {domain_id}") from None

    def domains(self) -> list[str]:
        return sorted(self._entries)


@dataclass(frozen=True)
class AuditRecord:
    request_id: str
    domain_id: str
    reference_point: str

    def to_doc(self) -> dict:
        return {
            "request_id": self.request_id,
            "domain_id": self.domain_id,
            "reference_point": self.reference_point,
        }


class Dispatcher:
    """Routes UNI requests to the owning controller and keeps the audit log."""

    def __init__(self, registry: CncRegistry):
        self.registry = registry
        self.audit_log: list[AuditRecord] = []

    def dispatch(self, request: StreamRequest | RemoveStream | CapabilityQuery, domain_id: str) -> UniResponse:
        entry = self.registry.entry(domain_id)
        self.audit_log.append(
            AuditRecord(
                request_id=request.request_id,
                domain_id=domain_id,
                reference_point=reference_point(entry.kind),
            )
        )
        line = encode_message(request)
        handle = entry.handle
        if hasattr(handle, "handle_line"):
            raw = handle.handle_line(line)
        elif isinstance(handle, tuple) and len(handle) == 2:
            raw = _exchange_over_socket(handle, line)
        else:
            raise TransportError(f"domain {domain_id}: unusable transport handle {handle!r}")
        try:
            response = decode_message(raw)
        except DecodeError as exc:
            raise TransportError(f"domain {domain_id} sent garbage: {exc}") from None
        if not isinstance(response, UniResponse):
            raise TransportError(f"domain {domain_id} answered with a {response.kind} message")
        return response


def _exchange_over_socket(address: tuple, line: bytes) -> bytes:
    host, port = address
    try:
        with socket.create_connection((host, port), timeout=10.0) as sock:
            sock.sendall(line)
            chunks = []
            while True:
                chunk = sock.recv(65536)
                if not chunk:
                    break
                chunks.append(chunk)
                if chunk.endswith(b"\n"):
                    break
    except OSError as exc:
        raise TransportError(f"UNI transport to {host}:{port} failed: {exc}") from None
    raw = b"".join(chunks)
    if not raw.endswith(b"\n"):
        raise TransportError(f"connection to {host}:{port} closed mid-response")
    return raw


def encode_routed(msg: StreamRequest | RemoveStream | CapabilityQuery, domain_id: str) -> bytes:
    """Request line carrying its target domain, for single-socket service
    mode. Requests have no domain_id field of their own, so the wrapper
    key cannot collide."""
    doc = _message_doc(msg)
    doc["domain_id"] = domain_id
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()


def decode_routed(line: bytes | str) -> tuple[str, UniMessage]:
    if isinstance(line, bytes):
        try:
            line = line.decode()
        except UnicodeDecodeError as exc:
            raise DecodeError(f"not UTF-8: {exc}") from None
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"not a JSON object: {exc}") from None
    if not isinstance(doc, dict):
        raise DecodeError("top level is not an object")
    domain_id = doc.pop("domain_id", None)
    if not isinstance(domain_id, str):
        raise DecodeError("routed message is missing domain_id")
    return domain_id, decode_message(json.dumps(doc))


class UniClient:
    """Socket-side counterpart of the service mode: one request per call,
    strict request/response alternation."""

    def __init__(self, host: str, port: int):
        self.address = (host, port)

    def request(
        self, msg: StreamRequest | RemoveStream | CapabilityQuery, domain_id: str
    ) -> UniResponse:
        raw = _exchange_over_socket(self.address, encode_routed(msg, domain_id))
        response = decode_message(raw)
        if not isinstance(response, UniResponse):
            raise TransportError(f"service answered with a {response.kind} message")
        return response


def build_registry(topology, states: dict[str, cnc.CncState]) -> CncRegistry:
    """In-process registry with one CncService per topology domain."""
    registry = CncRegistry()
    for domain in topology.domains.values():
        state = states[domain.domain_id]
        registry.register(
            CncEntry(
                domain_id=domain.domain_id,
                controller_id=domain.controller_id,
                kind=controller_kind(domain.kind),
                handle=CncService(state, domain),
            )
        )
    return registry
