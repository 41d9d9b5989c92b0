"""Footpath network generation from road centerlines.

The pipeline turns a planar road layout (metres) into a bidirectional
pedestrian graph:

1. offset every road to a left and a right footpath side;
2. add corner (intersection) nodes where roads meet, and external centroids
   at road ends on the layout boundary;
3. split sides into links between those nodes;
4. put a midblock node on every footpath link longer than 12 m and a
   centroid in every enclosed block;
5. connect each block centroid to its nearest midblock node per quadrant;
6. mirror every link.

Crossing links join the two corners on either side of each road arm at a
junction of three or more roads.  Signal delay is represented only through
the lower crossing speed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from shapely import STRtree
from shapely.geometry import LineString, Point, Polygon
from shapely.ops import substring

from .errors import DegenerateOffset, EmptyInput, HalfStreamClosure, InvalidInput
from .network import Link, LinkKind, Network, Node, NodeKind, build_network

MIDBLOCK_MIN_LENGTH = 12.0
MAX_MERGE_DEFLECTION = 45.0  # degrees
_ROUND = 6


@dataclass(frozen=True)
class Centerline:
    id: int
    coords: tuple[tuple[float, float], ...]
    road_class: str = "road"

    def __post_init__(self):
        coords = tuple((float(x), float(y)) for x, y in self.coords)
        object.__setattr__(self, "coords", coords)
        if len(coords) < 2:
            raise InvalidInput(f"centerline {self.id} needs at least two vertices")
        for a, b in zip(coords, coords[1:]):
            if a == b:
                raise InvalidInput(f"centerline {self.id} has a zero-length segment at {a}")

    @property
    def length(self) -> float:
        return _polyline_length(self.coords)


@dataclass(frozen=True)
class GenConfig:
    offset_distance: float = 5.0
    footpath_width: float = 2.0
    default_capacity: float = 4847.0
    default_speed: float = 1.46
    crossing_speed: float = 1.0

    def __post_init__(self):
        for name in ("offset_distance", "footpath_width", "default_capacity", "default_speed", "crossing_speed"):
            if not getattr(self, name) > 0:
                raise InvalidInput(f"{name} must be positive")
        if self.crossing_speed > self.default_speed:
            raise InvalidInput("crossing_speed must not exceed default_speed")

    @property
    def midblock_min_length(self) -> float:
        return MIDBLOCK_MIN_LENGTH


@dataclass
class GenReport:
    node_counts: dict = field(default_factory=dict)
    link_counts: dict = field(default_factory=dict)
    dropped: list = field(default_factory=list)  # (feature id, reason)
    notes: list = field(default_factory=list)
    geometry: dict = field(default_factory=dict, repr=False)  # link id -> polyline

    def to_text(self) -> str:
        lines = []
        for kind, n in sorted(self.node_counts.items()):
            lines.append(f"nodes.{kind} = {n}")
        for kind, n in sorted(self.link_counts.items()):
            lines.append(f"links.{kind} = {n}")
        lines.append(f"dropped_features = {len(self.dropped)}")
        for fid, reason in self.dropped:
            lines.append(f"dropped.{fid} = {reason}")
        for note in self.notes:
            lines.append(f"note = {note}")
        return "\n".join(lines) + "\n"


# -- small geometry helpers -------------------------------------------------


def _polyline_length(coords) -> float:
    a = np.asarray(coords, dtype=float)
    return float(np.sum(np.hypot(*np.diff(a, axis=0).T)))


def _key(p) -> tuple[float, float]:
    return (round(float(p[0]), _ROUND) + 0.0, round(float(p[1]), _ROUND) + 0.0)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.hypot(*v)


def _left(v):
    return np.array([-v[1], v[0]])


def _angle(v) -> float:
    return math.atan2(v[1], v[0]) % (2 * math.pi)


# -- simplification ---------------------------------------------------------


def _node_lines(lines: Sequence[Centerline]) -> list[tuple[int, tuple, str]]:
    """Split every line where it meets another one.  Returns (source id, coords, class)."""
    geoms = [LineString(l.coords) for l in lines]
    tree = STRtree(geoms)
    cuts: list[set[float]] = [set() for _ in lines]
    for i, g in enumerate(geoms):
        for j in tree.query(g, predicate="intersects"):
            if j <= i:
                continue
            inter = g.intersection(geoms[j])
            pts = []
            for part in getattr(inter, "geoms", [inter]):
                if part.is_empty:
                    continue
                if part.geom_type == "Point":
                    pts.append(part)
                elif not part.boundary.is_empty:
                    pts.extend(part.boundary.geoms)
            for p in pts:
                cuts[i].add(g.project(p))
                cuts[j].add(geoms[j].project(p))
    pieces = []
    for line, g, cut in zip(lines, geoms, cuts):
        stops = sorted(d for d in cut if 1e-9 < d < g.length - 1e-9)
        bounds = [0.0] + stops + [g.length]
        for a, b in zip(bounds, bounds[1:]):
            if b - a <= 1e-9:
                continue
            piece = substring(g, a, b) if (a, b) != (0.0, g.length) else g
            coords = [_key(c) for c in piece.coords]
            dedup = [coords[0]] + [c for prev, c in zip(coords, coords[1:]) if c != prev]
            if len(dedup) >= 2:
                pieces.append((line.id, tuple(dedup), line.road_class))
    return pieces


def _drop_collinear(coords, tol=1e-9):
    out = [coords[0]]
    for i in range(1, len(coords) - 1):
        a = np.subtract(coords[i], out[-1])
        b = np.subtract(coords[i + 1], coords[i])
        cross = a[0] * b[1] - a[1] * b[0]
        if abs(cross) <= tol * np.hypot(*a) * np.hypot(*b) and np.dot(a, b) > 0:
            continue
        out.append(coords[i])
    out.append(coords[-1])
    return tuple(out)


def simplify(centerlines: Iterable[Centerline], report: GenReport | None = None) -> list[Centerline]:
    """Node crossing roads, keep the largest connected component and merge pass-through segments.

    Pieces meeting at a vertex shared by exactly two pieces of the same road
    class are joined unless the road turns by more than 45 degrees there.
    Collinear interior vertices are removed.
    """
    lines = list(centerlines)
    if not lines:
        raise EmptyInput("EmptyInput: no centerlines")
    pieces = _node_lines(lines)

    # connected components over shared endpoints
    parent: dict = {}

    def find(a):
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for _, coords, _ in pieces:
        parent[find(coords[0])] = find(coords[-1])
    comps: dict = {}
    for p in pieces:
        comps.setdefault(find(p[1][0]), []).append(p)
    best = max(comps.values(), key=lambda ps: (len(ps), sum(_polyline_length(c) for _, c, _ in ps)))
    kept_ids = {p[0] for p in best}
    dropped = sorted({p[0] for ps in comps.values() if ps is not best for p in ps} - kept_ids)
    if report is not None:
        report.dropped.extend((fid, "disconnected component") for fid in dropped)

    # merge at degree-2 vertices of the same class
    segs = {i: [src, list(coords), cls] for i, (src, coords, cls) in enumerate(best)}
    changed = True
    while changed:
        changed = False
        incident: dict = {}
        for i, (_, coords, _) in segs.items():
            incident.setdefault(coords[0], []).append(i)
            incident.setdefault(coords[-1], []).append(i)
        for node, ids in incident.items():
            if len(ids) != 2 or ids[0] == ids[1]:
                continue
            a, b = ids
            if segs[a][2] != segs[b][2]:
                continue
            ca, cb = segs[a][1], segs[b][1]
            if ca[-1] != node:
                ca = ca[::-1]
            if cb[0] != node:
                cb = cb[::-1]
            if ca[0] == cb[-1]:
                continue  # would close a ring
            u, v = np.subtract(ca[-1], ca[-2]), np.subtract(cb[1], cb[0])
            if np.dot(u, v) < math.cos(math.radians(MAX_MERGE_DEFLECTION)) * np.hypot(*u) * np.hypot(*v):
                continue  # a real corner, not a pass-through
            segs[min(a, b)] = [min(segs[a][0], segs[b][0]), ca + cb[1:], segs[a][2]]
            del segs[max(a, b)]
            changed = True
            break

    out = []
    used: set[int] = set()
    next_id = max(l.id for l in lines) + 1
    for i in sorted(segs, key=lambda i: (segs[i][0], i)):
        src, coords, cls = segs[i]
        if src in used:
            src, next_id = next_id, next_id + 1
        used.add(src)
        out.append(Centerline(src, _drop_collinear(tuple(coords)), cls))
    return sorted(out, key=lambda l: l.id)


# -- offsetting -------------------------------------------------------------


def _offset_side(coords: np.ndarray, distance: float) -> np.ndarray:
    d = np.diff(coords, axis=0)
    lengths = np.hypot(d[:, 0], d[:, 1])
    normals = np.stack([-d[:, 1], d[:, 0]], axis=1) / lengths[:, None]
    pts = [coords[0] + distance * normals[0]]
    for j in range(1, len(coords) - 1):
        n0, n1 = normals[j - 1], normals[j]
        denom = 1.0 + float(np.dot(n0, n1))
        if denom < 1e-9:
            raise DegenerateOffset("DegenerateOffset: polyline reverses on itself")
        pts.append(coords[j] + distance * (n0 + n1) / denom)
    pts.append(coords[-1] + distance * normals[-1])
    return np.array(pts)


def _check_offset(original: np.ndarray, side: np.ndarray, fid):
    d0 = np.diff(original, axis=0)
    d1 = np.diff(side, axis=0)
    if np.any(np.sum(d0 * d1, axis=1) <= 0):
        raise DegenerateOffset(f"DegenerateOffset: offset of feature {fid} exceeds its curvature radius")
    if len(side) > 2 and not LineString(side).is_simple:
        raise DegenerateOffset(f"DegenerateOffset: offset of feature {fid} self-intersects")


def offset(centerline: Centerline, distance: float) -> tuple[list, list]:
    """Left and right parallel polylines at ``distance`` with mitred joins."""
    if not distance > 0:
        raise InvalidInput("offset distance must be positive")
    coords = np.asarray(centerline.coords, dtype=float)
    left = _offset_side(coords, distance)
    right = _offset_side(coords, -distance)
    _check_offset(coords, left, centerline.id)
    _check_offset(coords, right, centerline.id)
    return [tuple(map(float, p)) for p in left], [tuple(map(float, p)) for p in right]


# -- graph construction -----------------------------------------------------


@dataclass
class _Builder:
    config: GenConfig
    positions: dict = field(default_factory=dict)  # node key -> (x, y)
    kinds: dict = field(default_factory=dict)  # node key -> NodeKind
    segs: list = field(default_factory=list)  # [a key, b key, coords, LinkKind]

    def node(self, key, xy, kind):
        if key not in self.positions:
            self.positions[key] = (float(xy[0]), float(xy[1]))
            self.kinds[key] = kind
        return key

    def seg(self, a, b, coords, kind):
        self.segs.append([a, b, [tuple(map(float, c)) for c in coords], kind])


def _arms(lines: Sequence[Centerline]):
    arms: dict = {}
    for li, line in enumerate(lines):
        c = np.asarray(line.coords)
        arms.setdefault(_key(c[0]), []).append((li, 0, _unit(c[1] - c[0])))
        arms.setdefault(_key(c[-1]), []).append((li, 1, _unit(c[-2] - c[-1])))
    for node in arms:
        arms[node].sort(key=lambda a: (_angle(a[2]), lines[a[0]].id, a[1]))
    return arms


def _on_boundary(p, bbox, tol) -> bool:
    xmin, ymin, xmax, ymax = bbox
    return min(abs(p[0] - xmin), abs(p[0] - xmax), abs(p[1] - ymin), abs(p[1] - ymax)) <= tol + 1e-9


def _quadrant(dx: float, dy: float) -> str:
    az = math.degrees(math.atan2(dx, dy)) % 360.0  # clockwise from north
    if 45 <= az < 135:
        return "right"
    if 135 <= az < 225:
        return "bottom"
    if 225 <= az < 315:
        return "left"
    return "top"


def _faces(b: _Builder):
    """Planar faces of the segment arrangement as lists of half-edges (seg index, forward?)."""
    out: dict = {}
    for si, (a, bb, coords, _) in enumerate(b.segs):
        out.setdefault(a, []).append((_angle(np.subtract(coords[1], coords[0])), si, True))
        out.setdefault(bb, []).append((_angle(np.subtract(coords[-2], coords[-1])), si, False))
    for node in out:
        out[node].sort()
    position = {}
    for node, hs in out.items():
        for i, (_, si, fwd) in enumerate(hs):
            position[(si, fwd)] = (node, i)
    seen = set()
    faces = []
    for start in sorted(position):
        if start in seen:
            continue
        face = []
        h = start
        while h not in seen:
            seen.add(h)
            face.append(h)
            si, fwd = h
            twin = (si, not fwd)
            node, i = position[twin]
            hs = out[node]
            _, nsi, nfwd = hs[(i - 1) % len(hs)]
            h = (nsi, nfwd)
        faces.append(face)
    return faces


def _face_ring(b: _Builder, face):
    ring = []
    nodes = []
    for si, fwd in face:
        a, bb, coords, _ = b.segs[si]
        cs = coords if fwd else coords[::-1]
        ring.extend(cs[:-1])
        nodes.append(a if fwd else bb)
    return ring, nodes


def build_footpath_graph(centerlines: Iterable[Centerline], config: GenConfig = GenConfig()):
    """Generate the footpath :class:`Network` and a :class:`GenReport` from simplified centerlines."""
    report = GenReport()
    d = config.offset_distance
    lines = []
    offsets = {}
    for line in centerlines:
        try:
            offsets[line.id] = offset(line, d)
        except DegenerateOffset as exc:
            report.dropped.append((line.id, str(exc)))
            continue
        lines.append(line)
    if not lines:
        raise EmptyInput("EmptyInput: no usable centerlines")

    allc = np.concatenate([np.asarray(l.coords) for l in lines])
    bbox = (*allc.min(axis=0), *allc.max(axis=0))
    b = _Builder(config)
    arms = _arms(lines)
    # step 2: corner nodes, boundary centroids, dead ends
    left_of: dict = {}
    right_of: dict = {}
    for node in sorted(arms):
        hs = arms[node]
        m = len(hs)
        p = np.asarray(node, dtype=float)
        if m == 1:
            li, end, u = hs[0]
            boundary = _on_boundary(p, bbox, d)
            kind = NodeKind.EXTERNAL_CENTROID if boundary else NodeKind.INTERSECTION
            lk = b.node(("end", node, "L"), p + d * _left(u), kind)
            rk = b.node(("end", node, "R"), p - d * _left(u), kind)
            left_of[(li, end)], right_of[(li, end)] = lk, rk
            if not boundary:
                b.seg(rk, lk, [b.positions[rk], b.positions[lk]], LinkKind.CROSSING)
            continue
        corners = []
        for i in range(m):
            a0 = _angle(hs[i][2])
            gap = (_angle(hs[(i + 1) % m][2]) - a0) % (2 * math.pi)
            if gap < 1e-9:
                raise DegenerateOffset(f"DegenerateOffset: overlapping road arms at {node}")
            bis = a0 + gap / 2
            dist = d / math.sin(gap / 2)
            corners.append(b.node(("corner", node, i), p + dist * np.array([math.cos(bis), math.sin(bis)]), NodeKind.INTERSECTION))
        for i, (li, end, _) in enumerate(hs):
            left_of[(li, end)] = corners[i]
            right_of[(li, end)] = corners[i - 1]
        if m >= 3:
            for i in range(m):
                a, c = corners[i - 1], corners[i]
                b.seg(a, c, [b.positions[a], b.positions[c]], LinkKind.CROSSING)

    # steps 1 and 3: footpath sides between corner/end nodes
    sides = []
    for li, line in enumerate(lines):
        left, right = offsets[line.id]
        start_l, start_r = left_of[(li, 0)], right_of[(li, 0)]
        end_l, end_r = right_of[(li, 1)], left_of[(li, 1)]
        for a, z, interior in ((start_l, end_l, left[1:-1]), (start_r, end_r, right[1:-1])):
            coords = [b.positions[a], *interior, b.positions[z]]
            coords = [c for k, c in enumerate(coords) if k == 0 or _key(c) != _key(coords[k - 1])]
            if len(coords) < 2 or _polyline_length(coords) <= 0:
                report.dropped.append((line.id, "footpath side collapsed to zero length"))
                continue
            center = np.asarray(line.coords)
            if np.dot(np.subtract(coords[-1], coords[0]), center[-1] - center[0]) <= 0 and len(coords) == 2:
                report.dropped.append((line.id, "footpath side reversed; road shorter than twice the offset"))
                continue
            sides.append((a, z, coords, line.id))

    # step 4a: midblock nodes on long footpath links, splitting them (step 5)
    for a, z, coords, fid in sides:
        g = LineString(coords)
        if g.length > MIDBLOCK_MIN_LENGTH:
            mid = g.interpolate(0.5, normalized=True)
            mk = b.node(("mid", a, z), (mid.x, mid.y), NodeKind.MIDBLOCK)
            b.seg(a, mk, list(substring(g, 0, g.length / 2).coords), LinkKind.FOOTPATH)
            b.seg(mk, z, list(substring(g, g.length / 2, g.length).coords), LinkKind.FOOTPATH)
        else:
            b.seg(a, z, coords, LinkKind.FOOTPATH)

    # step 4b: block centroids in enclosed faces that contain no road
    road_points = [Point(LineString(l.coords).interpolate(0.5, normalized=True)) for l in lines]
    road_points += [Point(n) for n in arms]
    tree = STRtree(road_points)
    n_blocks = 0
    for face in _faces(b):
        ring, face_nodes = _face_ring(b, face)
        if len(ring) < 3:
            continue
        poly = Polygon(ring)
        if not poly.is_valid or poly.area <= 1e-9 or not _is_ccw(ring):
            continue
        if len(tree.query(poly, predicate="contains")):
            continue
        centre = poly.centroid if poly.contains(poly.centroid) else poly.representative_point()
        mids = sorted({k for k in face_nodes if b.kinds[k] is NodeKind.MIDBLOCK}, key=lambda k: b.positions[k])
        if not mids:
            report.notes.append(f"block at ({centre.x:.2f}, {centre.y:.2f}) has no midblock node; no centroid")
            continue
        ck = b.node(("block", _key((centre.x, centre.y))), (centre.x, centre.y), NodeKind.BLOCK_CENTROID)
        n_blocks += 1
        best: dict = {}
        for k in mids:
            px, py = b.positions[k]
            q = _quadrant(px - centre.x, py - centre.y)
            dist = math.hypot(px - centre.x, py - centre.y)
            if q not in best or dist < best[q][0]:
                best[q] = (dist, k)
        for q in sorted(best):
            k = best[q][1]
            b.seg(ck, k, [b.positions[ck], b.positions[k]], LinkKind.CONNECTOR)
        if len(best) < 4:
            report.notes.append(
                f"block at ({centre.x:.2f}, {centre.y:.2f}) has {len(best)} of 4 quadrants: {','.join(sorted(best))}"
            )

    network = _emit(b, report)
    report.notes.insert(0, f"blocks = {n_blocks}")
    return network, report


def _is_ccw(ring) -> bool:
    a = np.asarray(ring)
    x, y = a[:, 0], a[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)) > 0


def _emit(b: _Builder, report: GenReport) -> Network:
    cfg = b.config
    used = set()
    for a, z, _, _ in b.segs:
        used.add(a)
        used.add(z)
    keys = sorted(used, key=lambda k: (_key(b.positions[k]), b.kinds[k].value))
    ids = {k: i + 1 for i, k in enumerate(keys)}
    nodes = [Node(ids[k], *b.positions[k], b.kinds[k]) for k in keys]
    segs = []
    for a, z, coords, kind in b.segs:
        ia, iz = ids[a], ids[z]
        if ia > iz:
            ia, iz, coords = iz, ia, coords[::-1]
        segs.append((ia, iz, kind.value, round(_polyline_length(coords), 9), coords, kind))
    segs.sort(key=lambda s: s[:4])
    links = []
    for k, (ia, iz, _, length, coords, kind) in enumerate(segs):
        if length <= 0:
            report.dropped.append((f"link {ia}-{iz}", "zero length"))
            continue
        speed = cfg.crossing_speed if kind is LinkKind.CROSSING else cfg.default_speed
        fwd, bwd = 2 * k + 1, 2 * k + 2
        common = dict(length=length, width=cfg.footpath_width, capacity=cfg.default_capacity, free_flow_time=length / speed, kind=kind)
        links.append(Link(fwd, ia, iz, mirror=bwd, **common))
        links.append(Link(bwd, iz, ia, mirror=fwd, **common))
        report.geometry[fwd] = coords
        report.geometry[bwd] = coords[::-1]
    report.node_counts = {k.value: sum(n.kind is k for n in nodes) for k in NodeKind if any(n.kind is k for n in nodes)}
    report.link_counts = {k.value: sum(l.kind is k for l in links) for k in LinkKind if any(l.kind is k for l in links)}
    return build_network(nodes, links)


def generate(centerlines: Iterable[Centerline], config: GenConfig = GenConfig()):
    """``simplify`` followed by ``build_footpath_graph``; the report carries both stages' drops."""
    pre = GenReport()
    simple = simplify(centerlines, pre)
    network, report = build_footpath_graph(simple, config)
    report.dropped = pre.dropped + report.dropped
    return network, report


# -- scenario edits ---------------------------------------------------------


def close_links(network: Network, link_ids: Iterable[int]) -> Network:
    """A new network without ``link_ids`` (and their mirrors) or the nodes left isolated."""
    closing = set()
    half = []
    requested = {int(i) for i in link_ids}
    for lid in sorted(requested):
        link = network.link(lid)
        closing.add(link.id)
        if link.mirror not in requested:
            half.append(lid)
        closing.add(link.mirror)
    if half:
        warnings.warn(
            f"closing mirrors of links {half} as well", HalfStreamClosure, stacklevel=2
        )
    links = [l for l in network.links if l.id not in closing]
    used = {l.from_node for l in links} | {l.to_node for l in links}
    nodes = [n for n in network.nodes if n.id in used]
    return build_network(nodes, links, flow_scale=network.flow_scale)
