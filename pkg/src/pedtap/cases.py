"""Ready-made networks: the four-node toy network and a jittered lattice for scale tests."""
from __future__ import annotations

import numpy as np

from .network import DemandTable, Link, LinkKind, Network, Node, NodeKind, build_network

TOY_NODES = {"A": 1, "B": 2, "C": 3, "D": 4}
TOY_LINKS = {"A-B": 1, "B-A": 2, "C-A": 3, "A-C": 4, "D-B": 5, "B-D": 6, "D-C": 7, "C-D": 8}
TOY_LENGTH = 12.0
TOY_WIDTH = 1.0
TOY_SPEED = 1.46
TOY_CAPACITY = 4847.0
TOY_PERIOD = 60.0
# ped/m/hr per (ped per minute per metre) that reproduces the published toy travel times
TOY_FLOW_SCALE = 3.0


def toy_network(flow_scale: float = TOY_FLOW_SCALE) -> Network:
    """Square A-B-D-C with 12 m, 1 m wide links walked at 1.46 m/s."""
    pos = {"A": (0.0, 12.0), "B": (12.0, 12.0), "C": (0.0, 0.0), "D": (12.0, 0.0)}
    nodes = [Node(TOY_NODES[k], *pos[k], NodeKind.INTERSECTION) for k in "ABCD"]
    tau = TOY_LENGTH / TOY_SPEED
    links = []
    for name, lid in TOY_LINKS.items():
        a, b = name.split("-")
        mirror = TOY_LINKS[f"{b}-{a}"]
        links.append(
            Link(lid, TOY_NODES[a], TOY_NODES[b], TOY_LENGTH, TOY_WIDTH, TOY_CAPACITY, tau, LinkKind.FOOTPATH, mirror)
        )
    return build_network(nodes, links, flow_scale=flow_scale)


def toy_demand(case: int = 1) -> DemandTable:
    """Case 1: 10 pedestrians C->B.  Cases 2 and 3 add 8 pedestrians B->A."""
    entries = [(TOY_NODES["C"], TOY_NODES["B"], 10.0)]
    if case in (2, 3):
        entries.append((TOY_NODES["B"], TOY_NODES["A"], 8.0))
    elif case != 1:
        raise ValueError(f"unknown toy case {case}")
    return DemandTable(tuple(entries), TOY_PERIOD)


def grid_network(
    rows: int = 55,
    cols: int = 55,
    spacing: float = 20.0,
    jitter: float = 2.0,
    diagonals: bool = True,
    width: float = 2.0,
    capacity: float = 4847.0,
    speed: float = 1.46,
    seed: int = 0,
    flow_scale: float = 1.0,
) -> Network:
    """Lattice of intersections with orthogonal and (optionally) diagonal footpaths.

    Node positions are jittered so link lengths, and hence costs, are not
    exactly tied.  55 x 55 with diagonals gives 3,025 nodes and ~23,500 links.
    """
    rng = np.random.default_rng(seed)
    xy = np.stack(np.meshgrid(np.arange(cols) * spacing, np.arange(rows) * spacing), axis=-1).reshape(-1, 2)
    xy = xy + rng.uniform(-jitter, jitter, size=xy.shape)
    nodes = [Node(i + 1, float(x), float(y), NodeKind.INTERSECTION) for i, (x, y) in enumerate(xy)]

    def nid(r, c):
        return r * cols + c

    pairs = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                pairs.append((nid(r, c), nid(r, c + 1)))
            if r + 1 < rows:
                pairs.append((nid(r, c), nid(r + 1, c)))
            if diagonals and r + 1 < rows and c + 1 < cols:
                pairs.append((nid(r, c), nid(r + 1, c + 1)))
                pairs.append((nid(r, c + 1), nid(r + 1, c)))
    links = []
    for k, (a, b) in enumerate(pairs):
        length = float(np.hypot(*(xy[a] - xy[b])))
        tau = length / speed
        fwd, bwd = 2 * k + 1, 2 * k + 2
        links.append(Link(fwd, a + 1, b + 1, length, width, capacity, tau, LinkKind.FOOTPATH, bwd))
        links.append(Link(bwd, b + 1, a + 1, length, width, capacity, tau, LinkKind.FOOTPATH, fwd))
    return build_network(nodes, links, flow_scale=flow_scale)


def random_demand(
    network: Network,
    n_pairs: int = 400,
    n_origins: int = 40,
    low: float = 50.0,
    high: float = 400.0,
    period: float = 3600.0,
    seed: int = 0,
) -> DemandTable:
    """``n_pairs`` OD pairs spread over ``n_origins`` distinct origins."""
    rng = np.random.default_rng(seed)
    ids = np.asarray(network.node_ids)
    origins = rng.choice(ids, size=n_origins, replace=False)
    per = int(np.ceil(n_pairs / n_origins))
    entries = []
    for o in origins:
        dests = rng.choice(ids[ids != o], size=per, replace=False)
        for d in dests:
            entries.append((int(o), int(d), float(rng.uniform(low, high))))
    return DemandTable(tuple(entries[:n_pairs]), period)
