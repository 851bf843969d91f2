"""Network graph, unit-disk connectivity and the collection tree toward the sink.

Positions are in meters. Two nodes are linked when their euclidean distance
is at most the transmission range; the comparison is done on squared
distances with exact rational arithmetic so that nodes sitting exactly on
the range boundary (e.g. a 30/40/50 m triangle) are always linked.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ConfigurationError, TopologyError, UnknownNodeError

SINK_ID = 1

Link = tuple[int, int]


@dataclass(frozen=True, order=True)
class NodePosition:
    node_id: int
    x: float
    y: float


def _sq_dist(a: NodePosition, b: NodePosition) -> Fraction:
    dx = Fraction(a.x) - Fraction(b.x)
    dy = Fraction(a.y) - Fraction(b.y)
    return dx * dx + dy * dy


@dataclass(frozen=True)
class NetworkGraph:
    """Immutable node set plus the ordered link set within ``tx_range``."""

    nodes: tuple[NodePosition, ...]
    links: tuple[Link, ...]
    tx_range: float
    if_range: float
    _pos: dict = field(init=False, repr=False, compare=False)
    _nbrs: dict = field(init=False, repr=False, compare=False)
    _link_idx: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_pos", {p.node_id: p for p in self.nodes})
        nbrs: dict[int, list[int]] = {p.node_id: [] for p in self.nodes}
        for a, b in self.links:
            nbrs[a].append(b)
        object.__setattr__(self, "_nbrs", {k: tuple(sorted(v)) for k, v in nbrs.items()})
        object.__setattr__(self, "_link_idx", {l: i for i, l in enumerate(self.links)})

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(p.node_id for p in self.nodes)

    @property
    def sink(self) -> int:
        return SINK_ID

    def __contains__(self, node_id) -> bool:
        return node_id in self._pos

    def position(self, node_id: int) -> NodePosition:
        try:
            return self._pos[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def neighbors(self, node_id: int) -> tuple[int, ...]:
        if node_id not in self._nbrs:
            raise UnknownNodeError(node_id)
        return self._nbrs[node_id]

    def has_link(self, src: int, dst: int) -> bool:
        return dst in self._nbrs.get(src, ())

    def distance(self, a: int, b: int) -> float:
        return float(np.sqrt(float(_sq_dist(self.position(a), self.position(b)))))

    def in_interference_range(self, a: int, b: int) -> bool:
        r = Fraction(self.if_range)
        return _sq_dist(self.position(a), self.position(b)) <= r * r

    def link_index(self, link: Link) -> int:
        """Position of ``link`` in the canonical (sorted) link ordering."""
        try:
            return self._link_idx[link]
        except KeyError:
            raise TopologyError(f"link {link} is not in the graph") from None

    def adjacency_matrix(self) -> np.ndarray:
        """0/1 matrix indexed by position in ``node_ids``."""
        ids = self.node_ids
        idx = {n: i for i, n in enumerate(ids)}
        adj = np.zeros((len(ids), len(ids)))
        for a, b in self.links:
            adj[idx[a], idx[b]] = 1.0
        return adj

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": p.node_id, "x": p.x, "y": p.y} for p in self.nodes],
            "tx_range_m": self.tx_range,
            "if_range_m": self.if_range,
        }

    def fingerprint(self) -> str:
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def build_graph(
    positions: Sequence[NodePosition], tx_range: float, if_range: float | None = None
) -> NetworkGraph:
    """Unit-disk graph over ``positions``; returned even when disconnected."""
    if if_range is None:
        if_range = tx_range
    if len(positions) < 2:
        raise ConfigurationError("a topology needs at least two nodes")
    if not tx_range > 0:
        raise ConfigurationError(f"tx_range must be positive, got {tx_range}")
    if if_range < tx_range:
        raise ConfigurationError("if_range must be >= tx_range")
    ids = [p.node_id for p in positions]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate node ids in {sorted(ids)}")
    if any(i < 1 for i in ids):
        raise ConfigurationError("node ids must be >= 1")
    if SINK_ID not in ids:
        raise ConfigurationError(f"node {SINK_ID} (the sink) is missing")
    coords = [(Fraction(p.x), Fraction(p.y)) for p in positions]
    if len(set(coords)) != len(coords):
        raise ConfigurationError("two nodes share the same position")

    nodes = tuple(sorted(positions))
    r2 = Fraction(tx_range) ** 2
    links = tuple(
        (a.node_id, b.node_id)
        for a in nodes
        for b in nodes
        if a.node_id != b.node_id and _sq_dist(a, b) <= r2
    )
    return NetworkGraph(nodes=nodes, links=links, tx_range=float(tx_range), if_range=float(if_range))


@dataclass(frozen=True)
class ForwardingTree:
    """Single-parent routing toward ``sink``; ``parent`` omits the sink."""

    parent: dict
    sink: int = SINK_ID
    _children: dict = field(init=False, repr=False, compare=False)
    _hops: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kids: dict[int, list[int]] = {n: [] for n in set(self.parent) | {self.sink}}
        for c, p in self.parent.items():
            if p not in kids:
                raise TopologyError(f"parent {p} of node {c} is not in the tree")
            kids[p].append(c)
        object.__setattr__(self, "_children", {n: tuple(sorted(v)) for n, v in kids.items()})
        object.__setattr__(self, "_hops", {n: len(path_links(self, n)) for n in kids})

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(sorted(self._children))

    @property
    def edges(self) -> tuple[Link, ...]:
        return tuple(sorted(self.parent.items()))

    def children(self, node_id: int) -> tuple[int, ...]:
        try:
            return self._children[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def hops(self, node_id: int) -> int:
        try:
            return self._hops[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def bottom_up(self) -> list[int]:
        """Nodes ordered deepest first, so children precede their parents."""
        return sorted(self._hops, key=lambda n: (-self._hops[n], n))

    def max_hops(self) -> int:
        return max(self._hops.values())


def build_forwarding_tree(g: NetworkGraph) -> ForwardingTree:
    """Shortest-hop tree rooted at the sink, ties to the lowest parent id."""
    sink = g.sink
    depth = {sink: 0}
    queue = deque([sink])
    while queue:
        cur = queue.popleft()
        for nb in g.neighbors(cur):
            if nb not in depth:
                depth[nb] = depth[cur] + 1
                queue.append(nb)
    missing = [n for n in g.node_ids if n not in depth]
    if missing:
        raise TopologyError(f"node {missing[0]} cannot reach the sink (unreachable: {missing})")

    parent = {}
    for n in g.node_ids:
        if n == sink:
            continue
        # links are symmetric, so neighbors one hop closer are valid parents
        parent[n] = min(nb for nb in g.neighbors(n) if depth[nb] == depth[n] - 1)
    return ForwardingTree(parent=parent, sink=sink)


def path_links(tree: ForwardingTree, n: int) -> list[Link]:
    """(child, parent) links from ``n`` up to the sink; empty for the sink."""
    if n != tree.sink and n not in tree.parent:
        raise UnknownNodeError(n)
    out = []
    seen = {n}
    while n != tree.sink:
        p = tree.parent[n]
        if p in seen:
            raise TopologyError(f"cycle in forwarding tree at node {p}")
        seen.add(p)
        out.append((n, p))
        n = p
    return out


# ---------------------------------------------------------------- topology io


def graph_from_dict(data: dict) -> NetworkGraph:
    try:
        positions = [NodePosition(int(d["id"]), float(d["x"]), float(d["y"])) for d in data["nodes"]]
        tx = float(data["tx_range_m"])
        ifr = float(data.get("if_range_m", tx))
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed topology: missing {exc}") from None
    return build_graph(positions, tx, ifr)


def load_topology(path: str | Path) -> NetworkGraph:
    with open(path) as fh:
        return graph_from_dict(json.load(fh))


def save_topology(g: NetworkGraph, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(g.to_dict(), fh, indent=2)


def default_topology() -> NetworkGraph:
    """The bundled ten-node layout: the sink at the origin below three rows of three nodes."""
    text = resources.files("tschrl.data").joinpath("grid10_topology.json").read_text()
    return graph_from_dict(json.loads(text))


def positions_from_array(arr: Iterable) -> list[NodePosition]:
    """Rows of ``(id, x, y)`` into node positions."""
    return [NodePosition(int(r[0]), float(r[1]), float(r[2])) for r in arr]
