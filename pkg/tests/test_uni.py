from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsnfv.cnc import CncState
from tsnfv.errors import (
    DecodeError,
    TransportError,
    UnknownDomainError,
    ValidationError,
)
from tsnfv.model import (
    DataFrameSpec,
    EndpointRef,
    HopReservation,
    StreamRequirement,
    StreamSchedule,
    TrafficSpec,
)
from tsnfv.topology import shortest_path
from tsnfv.uni import (
    CapabilityQuery,
    CncEntry,
    CncRegistry,
    CncService,
    Dispatcher,
    RemoveStream,
    StreamRequest,
    UniResponse,
    build_registry,
    controller_kind,
    decode_message,
    decode_routed,
    encode_message,
    encode_routed,
    reference_point,
)


def _requirement(sid="vl1~fwd"):
    return StreamRequirement(
        stream_id=sid,
        talker=EndpointRef("vnfA", "eth0", "A"),
        listener=EndpointRef("vnfC", "eth0", "C"),
        frame=DataFrameSpec("02:00:00:00:00:01", "02:00:00:00:00:02", 100, 7),
        traffic=TrafficSpec(250_000, 500, 1, 2_000_000),
    )


def _stream_request(topology, rid="req-0001"):
    return StreamRequest(
        request_id=rid,
        requirement=_requirement(),
        hops=shortest_path(topology, "A", "C").hops,
        latency_budget_ns=2_000_000,
        entry_offset_ns=0,
        entry_stride_ns=0,
    )


def _service(topology):
    state = CncState(domain_id="d1", topology=topology)
    return CncService(state, topology.domains["d1"])


class TestCodec:
    def test_stream_request_round_trip(self, intra_topology):
        msg = _stream_request(intra_topology)
        assert decode_message(encode_message(msg)) == msg

    def test_remove_round_trip(self):
        msg = RemoveStream("req-0002", "vl1~fwd")
        assert decode_message(encode_message(msg)) == msg

    def test_capability_round_trip(self):
        msg = CapabilityQuery("req-0003")
        assert decode_message(encode_message(msg)) == msg

    def test_response_round_trip(self):
        schedule = StreamSchedule(
            "vl1~fwd",
            (HopReservation("A.p0", 0, 4160, 7, "vl1~fwd", 0),),
            10_320,
            250_000,
        )
        ok = UniResponse("req-0001", "ok", schedule=schedule, domain_id="d1")
        assert decode_message(encode_message(ok)) == ok
        failed = UniResponse(
            "req-0004", "failed", cause="no_free_window", detail="port full", domain_id="d1"
        )
        assert decode_message(encode_message(failed)) == failed

    def test_golden_line(self):
        line = encode_message(RemoveStream("req-0001", "vl1~fwd"))
        assert line == b'{"kind":"remove_stream","request_id":"req-0001","stream_id":"vl1~fwd"}\n'

    @pytest.mark.parametrize(
        "line",
        [
            b"{truncated",
            b"[]",
            b'"just a string"',
            b'{"kind": "teleport", "request_id": "r"}',
            b'{"kind": "remove_stream"}',
            b'{"kind": "stream_request", "request_id": "r", "hops": [], "latency_budget_ns": 5, "requirement": {}}',
            b"\xff\xfe",
        ],
    )
    def test_decode_errors(self, line):
        with pytest.raises(DecodeError):
            decode_message(line)

    def test_response_status_validation(self):
        with pytest.raises(ValidationError):
            UniResponse("r", "maybe")
        with pytest.raises(ValidationError):
            UniResponse("r", "failed", cause="bad_weather")

    @given(
        rid=st.from_regex(r"[A-Za-z0-9_-]{1,12}", fullmatch=True),
        sid=st.from_regex(r"[A-Za-z0-9_~-]{1,12}", fullmatch=True),
    )
    def test_remove_round_trip_property(self, rid, sid):
        msg = RemoveStream(rid, sid)
        assert decode_message(encode_message(msg)) == msg


class TestRouting:
    def test_routed_round_trip(self, intra_topology):
        msg = _stream_request(intra_topology)
        domain, decoded = decode_routed(encode_routed(msg, "d1"))
        assert domain == "d1"
        assert decoded == msg

    def test_routed_requires_domain(self):
        with pytest.raises(DecodeError):
            decode_routed(encode_message(RemoveStream("r", "s")))

    def test_reference_points(self):
        assert reference_point(controller_kind("nfvi_pop")) == "Or-Vi"
        assert reference_point(controller_kind("wan_segment")) == "Or-Wi"
        with pytest.raises(ValidationError):
            controller_kind("metro_ring")
        with pytest.raises(ValidationError):
            reference_point("sdn")


class TestCncService:
    def test_admits_over_the_wire(self, intra_topology):
        service = _service(intra_topology)
        raw = service.handle_line(encode_message(_stream_request(intra_topology)))
        response = decode_message(raw)
        assert response.status == "ok"
        assert response.domain_id == "d1"
        assert response.schedule.e2e_latency_ns == 10_320
        assert "vl1~fwd" in service.state.admitted

    def test_budget_failure_cause(self, intra_topology):
        service = _service(intra_topology)
        msg = StreamRequest(
            request_id="req-0001",
            requirement=_requirement(),
            hops=shortest_path(intra_topology, "A", "C").hops,
            latency_budget_ns=5,
        )
        response = decode_message(service.handle_line(encode_message(msg)))
        assert (response.status, response.cause) == ("failed", "infeasible_budget")

    def test_garbage_line_answers_malformed(self, intra_topology):
        service = _service(intra_topology)
        response = decode_message(service.handle_line(b"not json at all\n"))
        assert (response.status, response.cause) == ("failed", "malformed")
        assert response.request_id == "unknown"

    def test_response_as_request_is_malformed(self, intra_topology):
        service = _service(intra_topology)
        raw = service.handle_line(encode_message(UniResponse("req-0009", "ok")))
        response = decode_message(raw)
        assert (response.status, response.cause) == ("failed", "malformed")
        assert response.request_id == "req-0009"

    def test_foreign_hop_rejected(self, cross_topology):
        state = CncState(domain_id="d1", topology=cross_topology)
        service = CncService(state, cross_topology.domains["d1"])
        msg = StreamRequest(
            request_id="req-0001",
            requirement=_requirement(),
            hops=shortest_path(cross_topology, "HA", "HB").hops,  # crosses wan and d2
            latency_budget_ns=2_000_000,
        )
        response = decode_message(service.handle_line(encode_message(msg)))
        assert (response.status, response.cause) == ("failed", "malformed")
        assert "not in domain d1" in response.detail

    def test_remove_unknown_stream(self, intra_topology):
        service = _service(intra_topology)
        response = decode_message(
            service.handle_line(encode_message(RemoveStream("req-0002", "ghost")))
        )
        assert (response.status, response.cause) == ("failed", "unknown_stream")

    def test_capability_summaries(self, cross_topology):
        state = CncState(domain_id="d2", topology=cross_topology)
        service = CncService(state, cross_topology.domains["d2"])
        response = decode_message(
            service.handle_line(encode_message(CapabilityQuery("req-0003")))
        )
        assert response.status == "ok"
        assert [c["bridge_id"] for c in response.capabilities] == ["B2", "B3"]
        assert response.capabilities[0]["supports_qbv"] is True
        assert response.capabilities[0]["processing_delay_ns"] == 1000

    def test_state_domain_must_match(self, cross_topology):
        state = CncState(domain_id="d2", topology=cross_topology)
        with pytest.raises(ValidationError):
            CncService(state, cross_topology.domains["d1"])


class TestDispatcher:
    def _dispatcher(self, topology):
        states = {
            d: CncState(domain_id=d, topology=topology) for d in topology.domains
        }
        return Dispatcher(build_registry(topology, states))

    def test_audit_carries_reference_point(self, cross_topology):
        dispatcher = self._dispatcher(cross_topology)
        dispatcher.dispatch(CapabilityQuery("req-0001"), "d1")
        dispatcher.dispatch(CapabilityQuery("req-0002"), "wan")
        assert [
            (r.request_id, r.domain_id, r.reference_point)
            for r in dispatcher.audit_log
        ] == [("req-0001", "d1", "Or-Vi"), ("req-0002", "wan", "Or-Wi")]

    def test_unknown_domain_leaves_no_audit(self, cross_topology):
        dispatcher = self._dispatcher(cross_topology)
        with pytest.raises(UnknownDomainError):
            dispatcher.dispatch(CapabilityQuery("req-0001"), "mars")
        assert dispatcher.audit_log == []

    def test_unusable_handle(self, intra_topology):
        registry = CncRegistry()
        registry.register(CncEntry("d1", "cnc-1", "vim", handle=object()))
        dispatcher = Dispatcher(registry)
        with pytest.raises(TransportError):
            dispatcher.dispatch(CapabilityQuery("req-0001"), "d1")

    def test_garbage_response_from_controller(self):
        class Mumbler:
            def handle_line(self, line):
                return b"static noise\n"

        registry = CncRegistry()
        registry.register(CncEntry("d1", "cnc-1", "vim", handle=Mumbler()))
        with pytest.raises(TransportError):
            Dispatcher(registry).dispatch(CapabilityQuery("req-0001"), "d1")


class TestRegistry:
    def test_duplicate_domain(self, intra_topology):
        service = _service(intra_topology)
        registry = CncRegistry()
        registry.register(CncEntry("d1", "cnc-1", "vim", service))
        with pytest.raises(ValidationError):
            registry.register(CncEntry("d1", "cnc-9", "vim", service))
        assert registry.domains() == ["d1"]

    def test_entry_kind_checked(self, intra_topology):
        with pytest.raises(ValidationError):
            CncEntry("d1", "cnc-1", "sdn", _service(intra_topology))
