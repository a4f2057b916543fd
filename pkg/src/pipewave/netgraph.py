"""Pipe network topology, incidence signs and boundary pressure data."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path


class NetworkError(ValueError):
    """Base class for network validation failures."""


class DuplicateIdError(NetworkError):
    pass


class DanglingEndpointError(NetworkError):
    pass


class SelfLoopError(NetworkError):
    pass


class BoundaryDegreeError(NetworkError):
    pass


class DeadEndError(NetworkError):
    pass


class DisconnectedError(NetworkError):
    pass


class MissingRampError(NetworkError):
    pass


@dataclass(frozen=True)
class BoundaryRamp:
    """Pressure ``base + amplitude * max(1 - t/ramp_time, 0)``; constant ``base`` if ``ramp_time == 0``."""

    base: float
    amplitude: float = 0.0
    ramp_time: float = 0.0

    def __post_init__(self):
        if self.ramp_time < 0:
            raise ValueError(f"ramp_time must be nonnegative, got {self.ramp_time}")

    def value(self, t):
        if self.ramp_time == 0:
            return self.base
        return self.base + self.amplitude * max(1.0 - t / self.ramp_time, 0.0)

    def final(self):
        return self.base


@dataclass(frozen=True)
class Vertex:
    id: str
    kind: str = "interior"  # "interior" | "boundary"
    ramp: BoundaryRamp | None = None

    @property
    def is_boundary(self):
        return self.kind == "boundary"


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str  # "from" endpoint, local coordinate x = 0
    head: str  # "to" endpoint, local coordinate x = length
    length: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise NetworkError(f"edge {self.id!r}: length must be positive, got {self.length}")
        if self.tail == self.head:
            raise SelfLoopError(f"edge {self.id!r}: self-loop at vertex {self.tail!r}")


@dataclass(frozen=True)
class Network:
    """Directed pipe graph. Build through :func:`build_network` so invariants are checked.

    Edge orientation fixes the sign convention: ``incidence(e, tail) = -1`` and
    ``incidence(e, head) = +1``, so that ``sum_e n^e(v) m^e(v) = 0`` states
    inflow equals outflow at ``v``.
    """

    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    _vindex: dict = field(default_factory=dict, repr=False, compare=False)
    _eindex: dict = field(default_factory=dict, repr=False, compare=False)

    def vertex(self, vid) -> Vertex:
        return self.vertices[self._vindex[vid]]

    def edge(self, eid) -> Edge:
        return self.edges[self._eindex[eid]]

    def vertex_index(self, vid) -> int:
        return self._vindex[vid]

    def edge_index(self, eid) -> int:
        return self._eindex[eid]

    def incidence(self, eid, vid) -> int:
        e = self.edge(eid)
        if vid == e.tail:
            return -1
        if vid == e.head:
            return 1
        raise KeyError(f"vertex {vid!r} is not an endpoint of edge {eid!r}")

    def adjacent_edges(self, vid) -> list[Edge]:
        return [e for e in self.edges if vid in (e.tail, e.head)]

    def degree(self, vid) -> int:
        return len(self.adjacent_edges(vid))

    @property
    def interior_vertices(self) -> list[Vertex]:
        return [v for v in self.vertices if not v.is_boundary]

    @property
    def boundary_vertices(self) -> list[Vertex]:
        return [v for v in self.vertices if v.is_boundary]

    def boundary_values(self, t) -> list[float]:
        """Ramp values at time ``t`` in ``boundary_vertices`` order."""
        return [v.ramp.value(t) for v in self.boundary_vertices]

    def final_boundary_values(self) -> list[float]:
        return [v.ramp.final() for v in self.boundary_vertices]

    def ramp_times(self) -> list[float]:
        return [v.ramp.ramp_time for v in self.boundary_vertices]

    def with_ramps(self, ramps: dict) -> Network:
        """Copy of the network with the boundary ramps of the given vertices replaced."""
        verts = [
            Vertex(v.id, v.kind, ramps.get(v.id, v.ramp)) if v.is_boundary else v
            for v in self.vertices
        ]
        return build_network(verts, list(self.edges), allow_dead_ends=True)


def build_network(vertices, edges, ramps=None, *, allow_dead_ends=False) -> Network:
    """Validate and assemble a :class:`Network`.

    ``vertices`` are :class:`Vertex` objects or plain ids; ``ramps`` maps vertex
    id to :class:`BoundaryRamp` and marks those vertices as boundary vertices.
    Interior vertices of degree 1 are rejected unless ``allow_dead_ends``.
    """
    ramps = dict(ramps or {})
    verts = []
    for v in vertices:
        if isinstance(v, str):
            v = Vertex(v, "boundary" if v in ramps else "interior", ramps.get(v))
        elif v.id in ramps:
            v = Vertex(v.id, "boundary", ramps[v.id])
        verts.append(v)

    vindex = {}
    for i, v in enumerate(verts):
        if v.id in vindex:
            raise DuplicateIdError(f"duplicate vertex id {v.id!r}")
        vindex[v.id] = i
        if v.is_boundary and v.ramp is None:
            raise MissingRampError(f"boundary vertex {v.id!r} has no ramp")
        if not v.is_boundary and v.ramp is not None:
            raise NetworkError(f"interior vertex {v.id!r} carries a ramp")

    eindex = {}
    for i, e in enumerate(edges):
        if e.id in eindex:
            raise DuplicateIdError(f"duplicate edge id {e.id!r}")
        eindex[e.id] = i
        for end in (e.tail, e.head):
            if end not in vindex:
                raise DanglingEndpointError(f"edge {e.id!r} references unknown vertex {end!r}")

    if not edges:
        raise NetworkError("network has no edges")

    degree = {v.id: 0 for v in verts}
    nbrs = {v.id: [] for v in verts}
    for e in edges:
        degree[e.tail] += 1
        degree[e.head] += 1
        nbrs[e.tail].append(e.head)
        nbrs[e.head].append(e.tail)

    for v in verts:
        if v.is_boundary and degree[v.id] != 1:
            raise BoundaryDegreeError(
                f"boundary vertex {v.id!r} has degree {degree[v.id]}, expected 1"
            )
        if not v.is_boundary and degree[v.id] == 1 and not allow_dead_ends:
            raise DeadEndError(f"interior vertex {v.id!r} is a dead end (degree 1)")

    seen = {verts[0].id}
    queue = deque([verts[0].id])
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    if len(seen) != len(verts):
        missing = sorted(set(vindex) - seen)
        raise DisconnectedError(f"network is disconnected; unreachable: {missing}")

    return Network(tuple(verts), tuple(edges), vindex, eindex)


def paper_network() -> Network:
    """The seven-pipe diamond network with unit pipes.

    Pressure at ``v1`` ramps from 100 down to 90 over ``t in [0, 1]``;
    pressure at ``v6`` is held at 70.
    """
    ids = [f"v{i}" for i in range(1, 7)]
    topology = [
        ("e1", "v1", "v2"),
        ("e2", "v2", "v3"),
        ("e3", "v2", "v4"),
        ("e4", "v3", "v4"),
        ("e5", "v3", "v5"),
        ("e6", "v4", "v5"),
        ("e7", "v5", "v6"),
    ]
    edges = [Edge(eid, a, b, 1.0) for eid, a, b in topology]
    ramps = {
        "v1": BoundaryRamp(90.0, 10.0, 1.0),
        "v6": BoundaryRamp(70.0, 0.0, 0.0),
    }
    return build_network(ids, edges, ramps)


def single_pipe(h0=1.0, h1=0.0, length=1.0) -> Network:
    """One pipe ``a -> b`` with constant boundary pressures ``h0`` at ``a`` and ``h1`` at ``b``."""
    return build_network(
        ["a", "b"],
        [Edge("e", "a", "b", length)],
        {"a": BoundaryRamp(h0), "b": BoundaryRamp(h1)},
    )


def network_from_dict(data, *, allow_dead_ends=False) -> Network:
    verts, ramps = [], {}
    for item in data["vertices"]:
        vid = str(item["id"])
        verts.append(vid)
        if "boundary" in item:
            b = item["boundary"]
            ramps[vid] = BoundaryRamp(
                float(b["base"]), float(b.get("amplitude", 0.0)), float(b.get("ramp_time", 0.0))
            )
    edges = [
        Edge(str(e["id"]), str(e["from"]), str(e["to"]), float(e.get("length", 1.0)))
        for e in data["edges"]
    ]
    return build_network(verts, edges, ramps, allow_dead_ends=allow_dead_ends)


def network_to_dict(net: Network) -> dict:
    verts = []
    for v in net.vertices:
        item = {"id": v.id}
        if v.is_boundary:
            r = v.ramp
            item["boundary"] = {"base": r.base, "amplitude": r.amplitude, "ramp_time": r.ramp_time}
        verts.append(item)
    edges = [{"id": e.id, "from": e.tail, "to": e.head, "length": e.length} for e in net.edges]
    return {"vertices": verts, "edges": edges}


def load_network(path, *, allow_dead_ends=False) -> Network:
    with open(Path(path), encoding="utf-8") as fh:
        return network_from_dict(json.load(fh), allow_dead_ends=allow_dead_ends)


def save_network(net: Network, path):
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, indent=2)
