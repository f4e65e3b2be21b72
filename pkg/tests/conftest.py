from __future__ import annotations

import json

import pytest

import scenarios as sc
from tsnfv.topology import load_topology


@pytest.fixture
def intra_topology():
    return load_topology(json.dumps(sc.intra_pop_topology()))


@pytest.fixture
def cross_topology():
    return load_topology(json.dumps(sc.cross_pop_topology()))


@pytest.fixture
def demo_workspace():
    """Fresh workspace on the two-host single-PoP fixture."""
    return sc.build_workspace(sc.intra_pop_topology())


@pytest.fixture
def demo_instance(demo_workspace):
    instance = sc.instantiate(demo_workspace, sc.demo_nsd(), sc.demo_placement())
    return demo_workspace, instance
