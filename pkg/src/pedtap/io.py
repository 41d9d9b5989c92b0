"""File formats: network, demand, results, geometry, observations and configuration."""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
from importlib import resources
from pathlib import Path as FsPath
from typing import Iterable

import numpy as np
import yaml
from shapely import wkt
from shapely.errors import ShapelyError

from .assignment import AssignmentResult
from .calibration import ObservationSet
from .errors import EmptyInput, InvalidInput
from .netgen import Centerline
from .network import DemandTable, Link, LinkKind, Network, Node, NodeKind, build_network

NODE_FIELDS = ["id", "x", "y", "kind"]
LINK_FIELDS = [
    "id",
    "from",
    "to",
    "length_m",
    "width_m",
    "capacity_ped_per_m_hr",
    "free_flow_speed_m_s",
    "kind",
    "mirror_id",
]
DEMAND_FIELDS = ["origin", "destination", "demand_ped"]
RESULT_FIELDS = ["link_id", "volume_ped", "flow_ped_per_m_hr", "travel_time_s"]
PATH_FIELDS = ["origin", "destination", "path_rank", "link_sequence", "flow_ped", "cost_s"]
OBS_FIELDS = ["density_ped_m2", "speed_m_s", "travel_time_s", "ref_flow", "counter_flow"]


def fmt(x) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x == 0:
        return "0"
    return repr(x)


# -- generic csv ------------------------------------------------------------


def read_rows(path, required: list[str]) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise InvalidInput(f"{path}: missing columns {missing}")
            return list(reader)
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc}") from exc


def write_rows(path, fields: list[str], rows: Iterable[Iterable]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow(["" if v is None else v if isinstance(v, str) else fmt(v) for v in row])


def _num(row: dict, key: str, path, cast=float):
    try:
        v = cast(row[key])
    except (TypeError, ValueError) as exc:
        raise InvalidInput(f"{path}: bad {key} value {row.get(key)!r}") from exc
    if cast is float and not math.isfinite(v):
        raise InvalidInput(f"{path}: non-finite {key}")
    return v


# -- network and demand -----------------------------------------------------


def read_network(nodes_path, links_path, flow_scale: float = 1.0) -> Network:
    nodes = []
    for r in read_rows(nodes_path, NODE_FIELDS):
        try:
            kind = NodeKind(r["kind"].strip())
        except ValueError as exc:
            raise InvalidInput(f"{nodes_path}: unknown node kind {r['kind']!r}") from exc
        nodes.append(Node(_num(r, "id", nodes_path, int), _num(r, "x", nodes_path), _num(r, "y", nodes_path), kind))
    links = []
    for r in read_rows(links_path, LINK_FIELDS[:-1]):
        length = _num(r, "length_m", links_path)
        speed = _num(r, "free_flow_speed_m_s", links_path)
        if speed <= 0:
            raise InvalidInput(f"{links_path}: free_flow_speed_m_s must be positive")
        try:
            kind = LinkKind(r["kind"].strip())
        except ValueError as exc:
            raise InvalidInput(f"{links_path}: unknown link kind {r['kind']!r}") from exc
        mirror = (r.get("mirror_id") or "").strip()
        links.append(
            Link(
                _num(r, "id", links_path, int),
                _num(r, "from", links_path, int),
                _num(r, "to", links_path, int),
                length,
                _num(r, "width_m", links_path),
                _num(r, "capacity_ped_per_m_hr", links_path),
                length / speed,
                kind,
                int(mirror) if mirror else None,
            )
        )
    return build_network(nodes, links, flow_scale=flow_scale)


def write_network(network: Network, directory) -> tuple[FsPath, FsPath]:
    directory = FsPath(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nodes_path, links_path = directory / "nodes.csv", directory / "links.csv"
    write_rows(nodes_path, NODE_FIELDS, ((n.id, n.x, n.y, n.kind.value) for n in network.nodes))
    write_rows(
        links_path,
        LINK_FIELDS,
        (
            (l.id, l.from_node, l.to_node, l.length, l.width, l.capacity, l.free_flow_speed, l.kind.value, l.mirror)
            for l in network.links
        ),
    )
    return nodes_path, links_path


def read_demand(path, period: float = 3600.0) -> DemandTable:
    rows = read_rows(path, DEMAND_FIELDS)
    entries = tuple(
        (_num(r, "origin", path, int), _num(r, "destination", path, int), _num(r, "demand_ped", path)) for r in rows
    )
    return DemandTable(entries, period)


def write_demand(demand: DemandTable, path):
    write_rows(path, DEMAND_FIELDS, demand.entries)


# -- assignment outputs -----------------------------------------------------


def write_link_results(result: AssignmentResult, path):
    write_rows(
        path,
        RESULT_FIELDS,
        zip(result.link_ids.tolist(), result.link_volumes, result.link_flows, result.link_times),
    )


def read_link_results(path) -> dict[int, float]:
    """``link_id -> volume_ped``."""
    return {_num(r, "link_id", path, int): _num(r, "volume_ped", path) for r in read_rows(path, RESULT_FIELDS)}


def path_rows(result: AssignmentResult, network: Network, min_flow: float = 0.0):
    """Path table rows, ranked by flow (descending) within each OD pair."""
    by_od: dict = {}
    for p in result.paths:
        if p.flow > min_flow:
            by_od.setdefault(p.od, []).append(p)
    rows = []
    for od in sorted(by_od):
        ranked = sorted(by_od[od], key=lambda p: (-p.flow, p.links))
        for rank, p in enumerate(ranked, start=1):
            seq = " ".join(str(l) for l in p.links)
            rows.append((od[0], od[1], rank, seq, p.flow, p.cost(network, result.link_times)))
    return rows


def write_paths(result: AssignmentResult, network: Network, path):
    write_rows(path, PATH_FIELDS, path_rows(result, network))


def write_gap_history(result: AssignmentResult, path):
    write_rows(path, ["iteration", "relative_gap"], enumerate(result.gap_history.tolist(), start=1))


def write_kv(data: dict, path):
    with open(path, "w") as fh:
        for k, v in data.items():
            fh.write(f"{k} = {v if isinstance(v, str) else fmt(v)}\n")


def read_kv(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    return out


# -- geometry ---------------------------------------------------------------


def _lines_from_geometry(geom: dict, fid, road_class) -> list[Centerline]:
    kind = geom.get("type")
    if kind == "LineString":
        return [Centerline(fid, tuple(tuple(c[:2]) for c in geom["coordinates"]), road_class)]
    if kind == "MultiLineString":
        return [
            Centerline(fid, tuple(tuple(c[:2]) for c in part), road_class) for part in geom["coordinates"]
        ]
    raise InvalidInput(f"feature {fid}: unsupported geometry type {kind!r}")


def read_centerlines(path) -> list[Centerline]:
    """Road centerlines from GeoJSON (``.geojson``/``.json``) or CSV with ``id,wkt_linestring,road_class``."""
    path = FsPath(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc}") from exc
    lines: list[Centerline] = []
    if path.suffix.lower() in (".geojson", ".json"):
        try:
            data = json.loads(text) if text.strip() else {"features": []}
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{path}: invalid JSON: {exc}") from exc
        features = data.get("features", []) if data.get("type") != "Feature" else [data]
        for i, feat in enumerate(features, start=1):
            props = feat.get("properties") or {}
            fid = int(feat.get("id", props.get("id", i)))
            if feat.get("geometry") is None:
                raise InvalidInput(f"feature {fid} has no geometry")
            lines.extend(_lines_from_geometry(feat["geometry"], fid, str(props.get("road_class", "road"))))
    else:
        for r in read_rows(path, ["id", "wkt_linestring", "road_class"]):
            fid = _num(r, "id", path, int)
            try:
                geom = wkt.loads(r["wkt_linestring"])
            except ShapelyError as exc:
                raise InvalidInput(f"{path}: bad WKT for id {fid}") from exc
            lines.extend(_lines_from_geometry(geom.__geo_interface__, fid, r["road_class"] or "road"))
    if not lines:
        raise EmptyInput(f"EmptyInput: no centerlines in {path}")
    ids = [l.id for l in lines]
    if len(set(ids)) != len(ids):
        # multi-part features: renumber parts after the largest id
        nxt = max(ids) + 1
        seen = set()
        fixed = []
        for l in lines:
            if l.id in seen:
                l, nxt = Centerline(nxt, l.coords, l.road_class), nxt + 1
            seen.add(l.id)
            fixed.append(l)
        lines = fixed
    return lines


def write_centerlines_geojson(lines: Iterable[Centerline], path):
    features = [
        {
            "type": "Feature",
            "id": l.id,
            "properties": {"road_class": l.road_class},
            "geometry": {"type": "LineString", "coordinates": [list(c) for c in l.coords]},
        }
        for l in lines
    ]
    FsPath(path).write_text(json.dumps({"type": "FeatureCollection", "features": features}, indent=1) + "\n")


def write_links_geojson(network: Network, path, geometry: dict | None = None):
    """Links as LineStrings; ``geometry`` maps link id to a polyline, straight lines otherwise."""
    geometry = geometry or {}
    features = []
    for l in network.links:
        coords = geometry.get(l.id) or [network.node(l.from_node).position, network.node(l.to_node).position]
        features.append(
            {
                "type": "Feature",
                "id": l.id,
                "properties": {
                    "from": l.from_node,
                    "to": l.to_node,
                    "kind": l.kind.value,
                    "mirror_id": l.mirror,
                    "length_m": l.length,
                },
                "geometry": {"type": "LineString", "coordinates": [[float(x), float(y)] for x, y in coords]},
            }
        )
    FsPath(path).write_text(json.dumps({"type": "FeatureCollection", "features": features}, indent=1) + "\n")


# -- observations -----------------------------------------------------------


def read_observations(path) -> ObservationSet:
    rows = read_rows(path, OBS_FIELDS[:3])
    cols = {k: [] for k in OBS_FIELDS}
    for r in rows:
        for k in OBS_FIELDS[:3]:
            cols[k].append(_num(r, k, path))
        for k in OBS_FIELDS[3:]:
            v = (r.get(k) or "").strip()
            cols[k].append(float(v) if v else float("nan"))
    return ObservationSet(*(np.array(cols[k], dtype=float) for k in OBS_FIELDS))


def write_observations(obs: ObservationSet, path):
    write_rows(
        path,
        OBS_FIELDS,
        (
            [d, s, t] + ["" if math.isnan(x) else x for x in (r, c)]
            for d, s, t, r, c in zip(obs.density, obs.speed, obs.travel_time, obs.ref_flow, obs.counter_flow)
        ),
    )


# -- configuration ----------------------------------------------------------


def default_config() -> dict:
    text = resources.files("pedtap").joinpath("defaults.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in base:
            raise InvalidInput(f"unknown config key {where}{k}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise InvalidInput(f"config key {where}{k} must be a mapping")
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the YAML file at ``path``, then ``overrides``; unknown keys are rejected."""
    config = default_config()
    if path is not None:
        user = load_yaml(path) or {}
        if not isinstance(user, dict):
            raise InvalidInput(f"config {path} must be a mapping")
        config = _merge(config, user)
    if overrides:
        config = _merge(config, overrides)
    return config


def load_yaml(path):
    try:
        return yaml.safe_load(FsPath(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise InvalidInput(f"cannot read {path}: {exc}") from exc


def dump_yaml(data: dict, path):
    FsPath(path).write_text(yaml.safe_dump(data, sort_keys=False))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()
