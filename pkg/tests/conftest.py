import sys

import numpy as np
import pytest
from hypothesis import settings

from pipewave.netgraph import BoundaryRamp, Edge, build_network

settings.register_profile("ci", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("ci")


def ladder_network(n_rungs, lengths=None, h_in=3.0, h_out=1.0):
    """Inlet -> two rails with ``n_rungs`` cross pipes -> outlet. Always has cycles for n_rungs >= 1."""
    edges = [Edge("in", "s", "a0"), Edge("out", f"a{n_rungs + 1}", "t")]
    for i in range(n_rungs + 1):
        edges.append(Edge(f"a{i}", f"a{i}", f"a{i + 1}"))
        edges.append(Edge(f"b{i}", f"b{i}", f"b{i + 1}"))
    edges.append(Edge("j0", "a0", "b0"))
    edges.append(Edge("j1", f"b{n_rungs + 1}", f"a{n_rungs + 1}"))
    for i in range(1, n_rungs + 1):
        edges.append(Edge(f"r{i}", f"a{i}", f"b{i}"))
    if lengths is not None:
        edges = [Edge(e.id, e.tail, e.head, float(lengths[k % len(lengths)])) for k, e in enumerate(edges)]
    verts = sorted({v for e in edges for v in (e.tail, e.head)})
    return build_network(verts, edges, {"s": BoundaryRamp(h_in), "t": BoundaryRamp(h_out)})


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
