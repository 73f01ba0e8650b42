"""Call graphs: parsing, validation and the all-local baselines.

A call graph is a DAG whose vertices are procedures and whose edges are
invocations carrying a program-state transfer. Graphs are read from a
strict JSON document::

    {
      "vertices": [{"id": "1", "local_energy_j": 0.5, "cycles": 1e7,
                    "offloadable": false}, ...],
      "edges": [{"from": "1", "to": "2", "state_kb": 500,
                 "epsilon_j": 0.05, "gamma_s": 0.05}, ...]
    }

``state_kb`` is converted to bits with 1 KB = 1024 * 8 bits; ``state_bits``
is taken as is. Exactly one of the two must be given per edge.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

__all__ = [
    "BITS_PER_KB",
    "CallGraph",
    "ComputeConfig",
    "Edge",
    "GraphError",
    "GraphFormatError",
    "Vertex",
    "all_local_energy",
    "all_local_time",
    "dump_call_graph",
    "load_call_graph",
    "parse_call_graph",
    "sequential_order",
]

BITS_PER_KB = 1024 * 8


class GraphError(ValueError):
    """Raised when a call graph violates a structural invariant."""


class GraphFormatError(GraphError):
    """Raised when a graph document is malformed (syntax, keys, types)."""


@dataclass(frozen=True)
class Vertex:
    id: str
    local_energy_joules: float
    cycles: float
    offloadable: bool

    def __post_init__(self):
        if not (self.local_energy_joules >= 0 and math.isfinite(self.local_energy_joules)):
            raise GraphError(f"vertex {self.id!r}: local energy must be finite and >= 0")
        if not (self.cycles >= 0 and math.isfinite(self.cycles)):
            raise GraphError(f"vertex {self.id!r}: cycles must be finite and >= 0")


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    state_bits: float
    return_decode_energy_joules: float = 0.0
    return_decode_time_seconds: float = 0.0

    def __post_init__(self):
        if self.source == self.target:
            raise GraphError(f"self-loop on vertex {self.source!r}")
        if not (self.state_bits > 0 and math.isfinite(self.state_bits)):
            raise GraphError(f"edge ({self.source}, {self.target}): state_bits must be > 0")
        if not self.return_decode_energy_joules >= 0:
            raise GraphError(f"edge ({self.source}, {self.target}): epsilon must be >= 0")
        if not self.return_decode_time_seconds >= 0:
            raise GraphError(f"edge ({self.source}, {self.target}): gamma must be >= 0")

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class ComputeConfig:
    """CPU speeds of the handset and the server, and the latency budget."""

    f_local_hz: float = 1e8
    f_server_hz: float = 1e10
    latency_budget_seconds: float = 1.0

    def __post_init__(self):
        for name in ("f_local_hz", "f_server_hz", "latency_budget_seconds"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class CallGraph:
    """Immutable, validated call graph.

    Vertices and edges keep their input order; lookups go through the
    index maps built at construction.
    """

    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    _vertex_index: dict = field(init=False, repr=False, compare=False)
    _edge_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))
        index = {}
        for i, v in enumerate(self.vertices):
            if v.id in index:
                raise GraphError(f"duplicate vertex id {v.id!r}")
            index[v.id] = i
        edge_index = {}
        for j, e in enumerate(self.edges):
            for end in (e.source, e.target):
                if end not in index:
                    raise GraphError(f"edge ({e.source}, {e.target}) references unknown vertex {end!r}")
            if e.key in edge_index:
                raise GraphError(f"duplicate edge ({e.source}, {e.target})")
            edge_index[e.key] = j
        object.__setattr__(self, "_vertex_index", index)
        object.__setattr__(self, "_edge_index", edge_index)
        # raises on cycles
        sequential_order(self)

    def __hash__(self):
        return hash((self.vertices, self.edges))

    def vertex(self, vid: str) -> Vertex:
        try:
            return self.vertices[self._vertex_index[vid]]
        except KeyError:
            raise KeyError(f"vertex {vid!r} is not in the graph") from None

    def vertex_position(self, vid: str) -> int:
        return self._vertex_index[vid]

    def edge(self, source: str, target: str) -> Edge:
        return self.edges[self._edge_index[(source, target)]]

    def has_edge(self, source: str, target: str) -> bool:
        return (source, target) in self._edge_index

    def predecessors(self, vid: str) -> list[str]:
        return [e.source for e in self.edges if e.target == vid]

    def successors(self, vid: str) -> list[str]:
        return [e.target for e in self.edges if e.source == vid]

    @property
    def offloadable_ids(self) -> list[str]:
        """Offloadable vertex ids, sorted (the enumeration order)."""
        return sorted(v.id for v in self.vertices if v.offloadable)

    def replace(self, *, vertices=None, edges=None) -> "CallGraph":
        return CallGraph(
            vertices=self.vertices if vertices is None else vertices,
            edges=self.edges if edges is None else edges,
        )


def sequential_order(g: CallGraph) -> list[str]:
    """Topological order of ``g``; ties go to the lexicographically smallest id.

    Raises
    ------
    GraphError
        If the graph has a cycle.
    """
    indegree = {v.id: 0 for v in g.vertices}
    children: dict[str, list[str]] = {v.id: [] for v in g.vertices}
    for e in g.edges:
        indegree[e.target] += 1
        children[e.source].append(e.target)
    ready = [vid for vid, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        vid = heapq.heappop(ready)
        order.append(vid)
        for child in children[vid]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, child)
    if len(order) != len(indegree):
        stuck = sorted(vid for vid, d in indegree.items() if d > 0)
        raise GraphError(f"call graph has a cycle through vertices {stuck}")
    return order


def all_local_energy(g: CallGraph) -> float:
    return math.fsum(v.local_energy_joules for v in g.vertices)


def all_local_time(g: CallGraph, cc: ComputeConfig) -> float:
    """Time to run every procedure on the handset, sum of w_v / f_l."""
    return math.fsum(v.cycles for v in g.vertices) / cc.f_local_hz


# -- file format -------------------------------------------------------------

_VERTEX_KEYS = {"id", "local_energy_j", "cycles", "offloadable"}
_EDGE_KEYS = {"from", "to", "state_bits", "state_kb", "epsilon_j", "gamma_s"}


def _number(obj: dict, key: str, where: str, default=None) -> float:
    if key not in obj:
        if default is None:
            raise GraphFormatError(f"{where}: missing key {key!r}")
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GraphFormatError(f"{where}: {key!r} must be a number, got {value!r}")
    return float(value)


def _vertex_id(value: Any, where: str) -> str:
    if isinstance(value, bool) or not isinstance(value, (str, int)):
        raise GraphFormatError(f"{where}: vertex ids must be strings, got {value!r}")
    return str(value)


def _check_keys(obj: Any, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise GraphFormatError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise GraphFormatError(f"{where}: unknown keys {unknown}")


def graph_from_dict(doc: Any) -> CallGraph:
    _check_keys(doc, {"vertices", "edges"}, "graph")
    for key in ("vertices", "edges"):
        if not isinstance(doc.get(key), list):
            raise GraphFormatError(f"graph: {key!r} must be an array")
    vertices = []
    for i, raw in enumerate(doc["vertices"]):
        where = f"vertices[{i}]"
        _check_keys(raw, _VERTEX_KEYS, where)
        if "id" not in raw:
            raise GraphFormatError(f"{where}: missing key 'id'")
        offloadable = raw.get("offloadable", True)
        if not isinstance(offloadable, bool):
            raise GraphFormatError(f"{where}: 'offloadable' must be a boolean")
        vertices.append(Vertex(
            id=_vertex_id(raw["id"], where),
            local_energy_joules=_number(raw, "local_energy_j", where),
            cycles=_number(raw, "cycles", where),
            offloadable=offloadable,
        ))
    edges = []
    for i, raw in enumerate(doc["edges"]):
        where = f"edges[{i}]"
        _check_keys(raw, _EDGE_KEYS, where)
        for key in ("from", "to"):
            if key not in raw:
                raise GraphFormatError(f"{where}: missing key {key!r}")
        if ("state_bits" in raw) == ("state_kb" in raw):
            raise GraphFormatError(f"{where}: give exactly one of 'state_bits' or 'state_kb'")
        if "state_bits" in raw:
            bits = _number(raw, "state_bits", where)
        else:
            bits = _number(raw, "state_kb", where) * BITS_PER_KB
        edges.append(Edge(
            source=_vertex_id(raw["from"], where),
            target=_vertex_id(raw["to"], where),
            state_bits=bits,
            return_decode_energy_joules=_number(raw, "epsilon_j", where, 0.0),
            return_decode_time_seconds=_number(raw, "gamma_s", where, 0.0),
        ))
    return CallGraph(vertices=tuple(vertices), edges=tuple(edges))


def parse_call_graph(text: str) -> CallGraph:
    """Parse and validate a JSON graph document.

    Raises
    ------
    GraphFormatError
        On JSON syntax errors (with line and column), unknown keys or bad
        value types.
    GraphError
        On cycles, dangling endpoints, duplicate ids/edges or non-positive
        state sizes.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return graph_from_dict(doc)


def load_call_graph(path) -> CallGraph:
    return parse_call_graph(Path(path).read_text(encoding="utf-8"))


def graph_to_dict(g: CallGraph) -> dict:
    return {
        "vertices": [
            {"id": v.id, "local_energy_j": v.local_energy_joules,
             "cycles": v.cycles, "offloadable": v.offloadable}
            for v in g.vertices
        ],
        "edges": [
            {"from": e.source, "to": e.target, "state_bits": e.state_bits,
             "epsilon_j": e.return_decode_energy_joules,
             "gamma_s": e.return_decode_time_seconds}
            for e in g.edges
        ],
    }


def dump_call_graph(g: CallGraph, indent: int | None = 2) -> str:
    return json.dumps(graph_to_dict(g), indent=indent)
