"""Directed footpath network with bidirectional-stream pairing.

A :class:`Network` is immutable once built.  Link attributes are stored as
read-only numpy arrays ordered by link id, so a flow or cost vector is just
a float array aligned with ``network.link_ids``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DanglingReference,
    DuplicateOD,
    InvalidInput,
    MissingMirror,
    NonPositiveAttribute,
    NonPositivePeriod,
    UnknownLink,
)

SECONDS_PER_HOUR = 3600.0


class NodeKind(str, Enum):
    INTERSECTION = "intersection"
    MIDBLOCK = "midblock"
    BLOCK_CENTROID = "block_centroid"
    EXTERNAL_CENTROID = "external_centroid"
    CONNECTOR = "connector"

    @property
    def is_centroid(self) -> bool:
        return self in (NodeKind.BLOCK_CENTROID, NodeKind.EXTERNAL_CENTROID)


class LinkKind(str, Enum):
    FOOTPATH = "footpath"
    CROSSING = "crossing"
    CONNECTOR = "connector"


@dataclass(frozen=True)
class Node:
    id: int
    x: float
    y: float
    kind: NodeKind = NodeKind.INTERSECTION

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Link:
    """One direction of a footpath, crossing or connector.

    ``capacity`` is in pedestrians per metre of width per hour and
    ``free_flow_time`` in seconds.  ``mirror`` may be left as ``None`` to be
    resolved by reversed endpoints in :func:`build_network`.
    """

    id: int
    from_node: int
    to_node: int
    length: float
    width: float
    capacity: float
    free_flow_time: float
    kind: LinkKind = LinkKind.FOOTPATH
    mirror: int | None = None

    @property
    def free_flow_speed(self) -> float:
        return self.length / self.free_flow_time


@dataclass(frozen=True)
class DemandTable:
    """OD trips (pedestrians) over an analysis period given in seconds."""

    entries: tuple[tuple[int, int, float], ...]
    period: float = 3600.0

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((int(o), int(d), float(q)) for o, d, q in self.entries))
        if not self.period > 0:
            raise NonPositivePeriod(f"NonPositivePeriod: {self.period}")
        seen = set()
        for o, d, q in self.entries:
            if not q > 0:
                raise InvalidInput(f"demand must be positive, got {q} for {o}->{d}")
            if o == d:
                raise InvalidInput(f"origin equals destination ({o})")
            if (o, d) in seen:
                raise DuplicateOD(f"DuplicateOD: {o}->{d}")
            seen.add((o, d))

    @classmethod
    def from_pairs(cls, pairs: dict[tuple[int, int], float], period: float = 3600.0) -> "DemandTable":
        return cls(tuple((o, d, q) for (o, d), q in pairs.items()), period)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def total(self) -> float:
        return float(sum(q for _, _, q in self.entries))

    def scaled(self, factor: float) -> "DemandTable":
        return DemandTable(tuple((o, d, q * factor) for o, d, q in self.entries if q * factor > 0), self.period)


@dataclass(frozen=True)
class Path:
    links: tuple[int, ...]
    od: tuple[int, int]
    flow: float = 0.0

    def cost(self, network: "Network", costs) -> float:
        """Sum of ``costs`` (aligned with ``network.link_ids``) along the path."""
        times = getattr(costs, "times", costs)
        idx = [network.link_index(i) for i in self.links]
        return float(np.sum(np.asarray(times)[idx]))

    def with_flow(self, flow: float) -> "Path":
        return Path(self.links, self.od, float(flow))


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Network:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    flow_scale: float = 1.0
    # derived arrays, filled in __post_init__
    link_ids: np.ndarray = field(init=False, repr=False)
    node_ids: np.ndarray = field(init=False, repr=False)
    tail: np.ndarray = field(init=False, repr=False)
    head: np.ndarray = field(init=False, repr=False)
    length: np.ndarray = field(init=False, repr=False)
    width: np.ndarray = field(init=False, repr=False)
    capacity: np.ndarray = field(init=False, repr=False)
    tau: np.ndarray = field(init=False, repr=False)
    mirror_index: np.ndarray = field(init=False, repr=False)
    stream_index: np.ndarray = field(init=False, repr=False)
    centroid_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = tuple(sorted(self.nodes, key=lambda n: n.id))
        links = tuple(sorted(self.links, key=lambda l: l.id))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "links", links)
        node_pos = {n.id: i for i, n in enumerate(nodes)}
        link_pos = {l.id: i for i, l in enumerate(links)}
        object.__setattr__(self, "_node_pos", node_pos)
        object.__setattr__(self, "_link_pos", link_pos)
        set_ = lambda name, value: object.__setattr__(self, name, value)
        set_("link_ids", _readonly([l.id for l in links], np.int64))
        set_("node_ids", _readonly([n.id for n in nodes], np.int64))
        set_("tail", _readonly([node_pos[l.from_node] for l in links], np.int64))
        set_("head", _readonly([node_pos[l.to_node] for l in links], np.int64))
        set_("length", _readonly([l.length for l in links]))
        set_("width", _readonly([l.width for l in links]))
        set_("capacity", _readonly([l.capacity for l in links]))
        set_("tau", _readonly([l.free_flow_time for l in links]))
        mirror = [link_pos[l.mirror] for l in links]
        set_("mirror_index", _readonly(mirror, np.int64))
        set_("stream_index", _readonly([min(i, m) for i, m in enumerate(mirror)], np.int64))
        set_("centroid_mask", _readonly([n.kind.is_centroid for n in nodes], bool))

    # lookups -----------------------------------------------------------
    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_streams(self) -> int:
        return self.n_links // 2

    def link_index(self, link_id: int) -> int:
        try:
            return self._link_pos[int(link_id)]
        except KeyError:
            raise UnknownLink(link_id) from None

    def node_index(self, node_id: int) -> int:
        try:
            return self._node_pos[int(node_id)]
        except KeyError:
            raise DanglingReference(f"DanglingReference: node {node_id}") from None

    def has_node(self, node_id: int) -> bool:
        return int(node_id) in self._node_pos

    def link(self, link_id: int) -> Link:
        return self.links[self.link_index(link_id)]

    def node(self, node_id: int) -> Node:
        return self.nodes[self.node_index(node_id)]

    def find_link(self, from_node: int, to_node: int) -> Link:
        """First link (lowest id) from ``from_node`` to ``to_node``."""
        for l in self.links:
            if l.from_node == from_node and l.to_node == to_node:
                return l
        raise UnknownLink(f"{from_node}->{to_node}")

    def streams(self) -> list[tuple[int, int]]:
        return [stream_of(self, l.id) for l in self.links if l.id < l.mirror]

    def with_flow_scale(self, flow_scale: float) -> "Network":
        return Network(self.nodes, self.links, float(flow_scale))

    def __repr__(self):
        return f"Network(nodes={self.n_nodes}, links={self.n_links}, flow_scale={self.flow_scale})"


def _auto_mirror(links: Sequence[Link]) -> list[Link]:
    """Fill in missing mirror ids by pairing reversed endpoints in id order."""
    explicit = {l.id: l.mirror for l in links if l.mirror is not None}
    taken = set(explicit) | set(explicit.values())
    pool: dict[tuple[int, int], list[int]] = {}
    for l in sorted(links, key=lambda l: l.id):
        if l.id not in taken:
            pool.setdefault((l.from_node, l.to_node), []).append(l.id)
    resolved = dict(explicit)
    for a, b in explicit.items():
        resolved.setdefault(b, a)
    for l in sorted(links, key=lambda l: l.id):
        if l.id in resolved:
            continue
        candidates = [c for c in pool.get((l.to_node, l.from_node), []) if c not in resolved and c != l.id]
        if not candidates:
            raise MissingMirror(l.id)
        twin = candidates[0]
        resolved[l.id] = twin
        resolved[twin] = l.id
    return [l if l.mirror is not None else Link(**{**l.__dict__, "mirror": resolved[l.id]}) for l in links]


def build_network(
    nodes: Iterable[Node],
    links: Iterable[Link],
    demand: DemandTable | None = None,
    flow_scale: float = 1.0,
) -> Network:
    """Validate nodes, links and (optionally) demand and return a :class:`Network`."""
    nodes = list(nodes)
    links = list(links)
    node_ids = [n.id for n in nodes]
    if len(set(node_ids)) != len(node_ids):
        raise InvalidInput("duplicate node id")
    link_ids = [l.id for l in links]
    if len(set(link_ids)) != len(link_ids):
        raise InvalidInput("duplicate link id")
    if not flow_scale > 0:
        raise NonPositiveAttribute(f"NonPositiveAttribute: flow_scale={flow_scale}")
    known = set(node_ids)
    for n in nodes:
        if not (np.isfinite(n.x) and np.isfinite(n.y)):
            raise InvalidInput(f"node {n.id} has a non-finite position")
    for l in links:
        if l.from_node not in known or l.to_node not in known:
            raise DanglingReference(f"DanglingReference: link {l.id} references an unknown node")
        if l.from_node == l.to_node:
            raise InvalidInput(f"link {l.id} is a self-loop")
        for name in ("length", "width", "capacity", "free_flow_time"):
            if not getattr(l, name) > 0:
                raise NonPositiveAttribute(f"NonPositiveAttribute: link {l.id} {name}={getattr(l, name)}")

    links = _auto_mirror(links)
    by_id = {l.id: l for l in links}
    for l in links:
        m = by_id.get(l.mirror)
        if m is None:
            raise DanglingReference(f"DanglingReference: link {l.id} mirror {l.mirror} does not exist")
        if m.mirror != l.id or m.id == l.id:
            raise MissingMirror(l.id)
        if m.from_node != l.to_node or m.to_node != l.from_node:
            raise MissingMirror(l.id)
        for name in ("length", "width", "capacity", "free_flow_time"):
            if not np.isclose(getattr(l, name), getattr(m, name), rtol=1e-9, atol=0.0):
                raise InvalidInput(f"link {l.id} and mirror {m.id} differ in {name}")

    if demand is not None:
        for o, d, _ in demand.entries:
            if o not in known or d not in known:
                raise DanglingReference(f"DanglingReference: demand {o}->{d} references an unknown node")
    return Network(tuple(nodes), tuple(links), float(flow_scale))


def stream_of(network: Network, link_id: int) -> tuple[int, int]:
    """The ordered pair ``(link_id, mirror_id)`` of the stream containing ``link_id``."""
    link = network.link(link_id)
    return (link.id, link.mirror)


def volumes_to_flows(volumes, network: Network, period: float, flow_scale: float | None = None) -> np.ndarray:
    """Convert per-link volumes (pedestrians per period) into ped/m/hr.

    ``x = volume / (width * period_in_hours) * flow_scale``; the network's own
    ``flow_scale`` is used unless one is passed explicitly.
    """
    if not period > 0:
        raise NonPositivePeriod(f"NonPositivePeriod: {period}")
    volumes = np.asarray(volumes, dtype=float)
    if np.any(volumes < 0):
        raise InvalidInput("volumes must be non-negative")
    scale = network.flow_scale if flow_scale is None else float(flow_scale)
    return volumes / (network.width * (period / SECONDS_PER_HOUR)) * scale


def flows_to_volumes(flows, network: Network, period: float, flow_scale: float | None = None) -> np.ndarray:
    """Inverse of :func:`volumes_to_flows`."""
    if not period > 0:
        raise NonPositivePeriod(f"NonPositivePeriod: {period}")
    scale = network.flow_scale if flow_scale is None else float(flow_scale)
    return np.asarray(flows, dtype=float) * network.width * (period / SECONDS_PER_HOUR) / scale
