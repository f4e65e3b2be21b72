"""File-backed workspace: wires orchestrator, controllers, and persistence.

One workspace holds the loaded topology, one in-process controller per
domain, the orchestrator with its instances, the UNI audit log, and the
currently synthesized gate control lists. It round-trips losslessly
through a canonical JSON state file, so repeated runs over the same
inputs produce byte-identical state.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import cnc
from .cuc import Cuc, NsInstance
from .errors import ParseError
from .topology import Topology, parse_topology
from .uni import AuditRecord, Dispatcher, build_registry

STATE_VERSION = 1


class Workspace:
    def __init__(self, topology: Topology):
        self.topology = topology
        self.states: dict[str, cnc.CncState] = {
            domain_id: cnc.CncState(domain_id=domain_id, topology=topology)
            for domain_id in topology.domains
        }
        self.registry = build_registry(topology, self.states)
        self.dispatcher = Dispatcher(self.registry)
        self.cuc = Cuc(topology, self.dispatcher, gcl_provider=self._domain_gcls)
        # port -> GCL document; refreshed after mutations, kept verbatim
        # from the state file otherwise so that what was on disk is what
        # gets shown and verified.
        self.gcl_docs: dict[str, dict] = {}

    def _domain_gcls(self, domain_id: str):
        return cnc.synthesize_gcls(self.states[domain_id])

    # -- lifecycle pass-throughs ------------------------------------------

    def instantiate(self, nsd, placement) -> NsInstance:
        try:
            return self.cuc.instantiate_ns(nsd, placement)
        finally:
            self.refresh_gcls()

    def terminate(self, instance_id: str) -> NsInstance:
        try:
            return self.cuc.terminate_ns(instance_id)
        finally:
            self.refresh_gcls()

    def update(self, instance_id: str, nsd, placement) -> NsInstance:
        try:
            return self.cuc.update_ns(instance_id, nsd, placement)
        finally:
            self.refresh_gcls()

    def refresh_gcls(self) -> None:
        docs: dict[str, dict] = {}
        for domain_id in sorted(self.states):
            for port, gcl in self._domain_gcls(domain_id).items():
                docs[port] = gcl.to_doc()
        self.gcl_docs = docs

    # -- persistence -------------------------------------------------------

    def to_doc(self) -> dict:
        return {
            "version": STATE_VERSION,
            "topology": self.topology.to_doc(),
            "cnc": {d: self.states[d].snapshot() for d in sorted(self.states)},
            "instances": {
                iid: inst.to_doc() for iid, inst in sorted(self.cuc.instances.items())
            },
            "audit": [record.to_doc() for record in self.dispatcher.audit_log],
            "counters": {
                "request_seq": self.cuc.request_seq,
                "instance_seq": self.cuc.instance_seq,
            },
            "gcls": {port: self.gcl_docs[port] for port in sorted(self.gcl_docs)},
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_doc(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def from_doc(cls, doc: dict) -> Workspace:
        if not isinstance(doc, dict) or "topology" not in doc:
            raise ParseError("state file does not look like a workspace")
        if doc.get("version") != STATE_VERSION:
            raise ParseError(f"unsupported state version {doc.get('version')!r}")
        ws = cls(parse_topology(doc["topology"]))
        for domain_id, snap in doc.get("cnc", {}).items():
            if domain_id not in ws.states:
                raise ParseError(f"state names unknown domain {domain_id}")
            ws.states[domain_id] = cnc.CncState.from_doc(snap, ws.topology)
        # registry handles must point at the restored states
        ws.registry = build_registry(ws.topology, ws.states)
        ws.dispatcher = Dispatcher(ws.registry)
        ws.cuc = Cuc(ws.topology, ws.dispatcher, gcl_provider=ws._domain_gcls)
        for iid, inst_doc in doc.get("instances", {}).items():
            ws.cuc.instances[iid] = NsInstance.from_doc(inst_doc)
        ws.dispatcher.audit_log = [
            AuditRecord(r["request_id"], r["domain_id"], r["reference_point"])
            for r in doc.get("audit", [])
        ]
        counters = doc.get("counters", {})
        ws.cuc.request_seq = counters.get("request_seq", 0)
        ws.cuc.instance_seq = counters.get("instance_seq", 0)
        ws.gcl_docs = dict(doc.get("gcls", {}))
        return ws

    @classmethod
    def load(cls, path: str | Path) -> Workspace:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"state file is not valid JSON: {exc}") from None
        return cls.from_doc(doc)

    # -- inspection --------------------------------------------------------

    def snapshot_states(self) -> dict[str, dict]:
        """Deep snapshot of every controller, for baseline comparisons."""
        return {d: self.states[d].snapshot() for d in sorted(self.states)}
