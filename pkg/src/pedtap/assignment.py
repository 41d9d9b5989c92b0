"""User-equilibrium assignment with bidirectional link costs.

The solver is the classical method of successive averages: every iteration
loads all demand on current shortest paths (all-or-nothing) and blends that
loading into the running volumes with step ``1/k``.  Convergence is judged
by the relative gap computed with expected link costs.

Centroid nodes may only start or end a path.  The router enforces this by
splitting every centroid into an "out" copy (tail of its outgoing links) and
an "in" copy (head of its incoming links), so no shortest path can pass
through one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import InvalidInput, Unreachable, ZeroTSTT
from .network import DemandTable, Network, Path, volumes_to_flows
from .pvdf import PvdfConfig, expected_time, lognormal_params, sigma

log = logging.getLogger(__name__)

_TIE_RTOL = 1e-12


class Mode(str, Enum):
    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 1000
    gap_tolerance: float = 1e-4
    mode: Mode | None = None  # None: follow the pVDF family
    samples_per_iteration: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidInput("max_iterations must be >= 1")
        if not self.gap_tolerance > 0:
            raise InvalidInput("gap_tolerance must be positive")
        if self.samples_per_iteration < 1:
            raise InvalidInput("samples_per_iteration must be >= 1")
        if self.mode is not None:
            object.__setattr__(self, "mode", Mode(self.mode))


@dataclass(frozen=True)
class CostView:
    """Per-link travel times in seconds, aligned with ``network.link_ids``."""

    times: np.ndarray

    def __getitem__(self, i):
        return self.times[i]


@dataclass
class AssignmentResult:
    link_ids: np.ndarray
    link_volumes: np.ndarray
    link_flows: np.ndarray
    link_times: np.ndarray
    paths: list[Path]
    gap_history: np.ndarray
    iterations: int
    converged: bool
    total_demand: float = 0.0
    tstt: float = field(init=False)

    def __post_init__(self):
        self.tstt = float(np.dot(self.link_volumes, self.link_times))

    @property
    def final_gap(self) -> float:
        return float(self.gap_history[-1])

    def volume(self, network: Network, link_id: int) -> float:
        return float(self.link_volumes[network.link_index(link_id)])

    def time(self, network: Network, link_id: int) -> float:
        return float(self.link_times[network.link_index(link_id)])


# -- costs ------------------------------------------------------------------


def _check_flows(network: Network, flows) -> np.ndarray:
    flows = np.asarray(flows, dtype=float)
    if flows.shape != (network.n_links,):
        raise InvalidInput(f"InvalidFlow: expected {network.n_links} link flows, got shape {flows.shape}")
    if np.any(~np.isfinite(flows)) or np.any(flows < 0):
        raise InvalidInput("InvalidFlow: flows must be finite and non-negative")
    return flows


def _expected_times(network: Network, flows: np.ndarray, config: PvdfConfig) -> np.ndarray:
    return expected_time(flows, flows[network.mirror_index], network.tau, network.capacity, config)


def _sampled_times(network: Network, flows: np.ndarray, config: PvdfConfig, rng: np.random.Generator) -> np.ndarray:
    counter = flows[network.mirror_index]
    mean = expected_time(flows, counter, network.tau, network.capacity, config)
    std = sigma(flows, counter, network.tau, network.capacity, config.sigma)
    mu, s = lognormal_params(mean, std)
    # one draw per stream, shared by both directions
    z = rng.standard_normal(network.n_links)[network.stream_index]
    return np.exp(mu + s * z)


def link_costs(
    network: Network,
    flows,
    config: PvdfConfig,
    rng: np.random.Generator | None = None,
    stochastic: bool | None = None,
) -> CostView:
    """Link travel times at ``flows`` (ped/m/hr).

    Deterministic use returns expected pVDF values.  With a stochastic family
    and a random generator, one correlated realisation per stream is drawn.
    """
    flows = _check_flows(network, flows)
    if stochastic is None:
        stochastic = config.family.stochastic and rng is not None
    if stochastic:
        if rng is None:
            raise InvalidInput("stochastic costs need a random generator")
        return CostView(_sampled_times(network, flows, config, rng))
    return CostView(_expected_times(network, flows, config))


# -- routing ----------------------------------------------------------------


class _Router:
    """Batched shortest paths on the centroid-split graph with lexicographic tie-breaking."""

    def __init__(self, network: Network):
        self.network = network
        n = network.n_nodes
        centroids = np.flatnonzero(network.centroid_mask)
        in_index = np.arange(n)
        in_index[centroids] = n + np.arange(len(centroids))
        self.n_exp = n + len(centroids)
        self.in_index = in_index
        self.src = np.asarray(network.tail)
        self.dst = in_index[np.asarray(network.head)]
        pair = self.src * self.n_exp + self.dst
        self.has_parallel = len(np.unique(pair)) < network.n_links
        self._pair = pair
        self._static_lookup = None
        if not self.has_parallel:
            self._static_lookup = dict(zip(zip(self.src.tolist(), self.dst.tolist()), range(network.n_links)))
        order = np.argsort(self.dst, kind="stable")
        self.in_links = order
        self.in_ptr = np.searchsorted(self.dst[order], np.arange(self.n_exp + 1))

    def _select(self, costs: np.ndarray) -> np.ndarray:
        """Indices of links kept in the graph: the cheapest (then lowest id) of each parallel group."""
        if not self.has_parallel:
            return np.arange(len(costs))
        order = np.lexsort((np.arange(len(costs)), costs, self._pair))
        first = np.ones(len(order), dtype=bool)
        first[1:] = self._pair[order][1:] != self._pair[order][:-1]
        return np.sort(order[first])

    def trees(self, costs: np.ndarray, origins: Sequence[int]):
        """Shortest-path trees from each origin node index.

        Returns ``(dist, parent_link)`` where ``parent_link[r, v]`` is the link
        index entering expanded node ``v`` on the tie-broken path, -1 if none.
        """
        costs = np.asarray(costs, dtype=float)
        if np.any(~(costs > 0)) or np.any(~np.isfinite(costs)):
            raise InvalidInput("link costs must be positive and finite")
        sel = self._select(costs)
        graph = csr_matrix((costs[sel], (self.src[sel], self.dst[sel])), shape=(self.n_exp, self.n_exp))
        dist, pred = dijkstra(graph, directed=True, indices=np.asarray(origins), return_predecessors=True)
        dist = np.atleast_2d(dist)
        pred = np.atleast_2d(pred)
        if self._static_lookup is not None:
            lookup = self._static_lookup
        else:
            lookup = dict(zip(zip(self.src[sel].tolist(), self.dst[sel].tolist()), sel.tolist()))
        keep = np.zeros(len(costs), dtype=bool)
        keep[sel] = True
        parent = np.full(dist.shape, -1, dtype=np.int64)
        for r in range(dist.shape[0]):
            d = dist[r]
            ok = np.flatnonzero(pred[r] >= 0)
            parent[r, ok] = [lookup[(u, v)] for u, v in zip(pred[r, ok].tolist(), ok.tolist())]
            reach = keep & np.isfinite(d[self.src])
            tight = reach & (d[self.src] + costs <= d[self.dst] * (1.0 + _TIE_RTOL))
            counts = np.bincount(self.dst[tight], minlength=self.n_exp)
            if np.any(counts > 1):
                self._lexicographic(d, costs, tight, parent[r], origins[r])
        return dist, parent

    def _lexicographic(self, d, costs, tight, parent_row, origin):
        """Re-pick parents so each node's path is the lexicographically smallest link sequence.

        Lexicographically minimal shortest paths have minimal prefixes, so the
        labels can be built in order of distance from the origin.
        """
        order = np.argsort(d, kind="stable")
        order = order[np.isfinite(d[order])]
        labels: dict[int, tuple] = {int(origin): ()}
        src = self.src
        for v in order.tolist():
            if v == origin:
                continue
            best = None
            best_link = -1
            for a in self.in_links[self.in_ptr[v] : self.in_ptr[v + 1]].tolist():
                if not tight[a]:
                    continue
                base = labels.get(int(src[a]))
                if base is None:
                    continue
                cand = base + (a,)
                if best is None or cand < best:
                    best, best_link = cand, a
            if best is not None:
                labels[v] = best
                parent_row[v] = best_link

    def path(self, parent_row: np.ndarray, origin: int, dest_exp: int) -> list[int] | None:
        links = []
        v = dest_exp
        while v != origin:
            a = parent_row[v]
            if a < 0:
                return None
            links.append(int(a))
            v = int(self.src[a])
        links.reverse()
        return links


@dataclass
class _Demand:
    """Demand grouped by origin node index."""

    origins: list[int]
    dests: list[list[tuple[int, float, tuple[int, int]]]]
    total: float


def _group_demand(network: Network, demand: DemandTable) -> _Demand:
    missing = [(o, d) for o, d, _ in demand.entries if not (network.has_node(o) and network.has_node(d))]
    if missing:
        raise Unreachable(missing)
    by_origin: dict[int, list] = {}
    for o, d, q in demand.entries:
        by_origin.setdefault(network.node_index(o), []).append((network.node_index(d), q, (o, d)))
    origins = sorted(by_origin)
    return _Demand(origins, [by_origin[o] for o in origins], demand.total)


def _load(router: _Router, costs: np.ndarray, demand: _Demand):
    """All-or-nothing loading; returns volumes, per-OD path (link indices) and shortest costs."""
    volumes = np.zeros(router.network.n_links)
    paths = []
    sp_costs = []
    if not demand.origins:
        return volumes, paths, sp_costs
    dist, parent = router.trees(costs, demand.origins)
    unreachable = []
    for r, origin in enumerate(demand.origins):
        for dest, q, od in demand.dests[r]:
            dest_exp = router.in_index[dest]
            if not np.isfinite(dist[r, dest_exp]):
                unreachable.append(od)
                continue
            links = router.path(parent[r], origin, dest_exp)
            volumes[links] += q
            paths.append((od, q, tuple(links)))
            sp_costs.append(dist[r, dest_exp])
    if unreachable:
        raise Unreachable(unreachable)
    return volumes, paths, np.asarray(sp_costs)


def _costs_array(network: Network, costs) -> np.ndarray:
    times = np.asarray(getattr(costs, "times", costs), dtype=float)
    if times.shape != (network.n_links,):
        raise InvalidInput(f"expected {network.n_links} link costs, got shape {times.shape}")
    return times


def shortest_path(network: Network, costs, origin: int, destination: int) -> Path:
    """Minimum-cost path, ties broken by the lexicographically smallest link-id sequence."""
    if origin == destination:
        raise InvalidInput("origin and destination must differ")
    if not (network.has_node(origin) and network.has_node(destination)):
        raise Unreachable([(origin, destination)])
    router = _Router(network)
    o = network.node_index(origin)
    dist, parent = router.trees(_costs_array(network, costs), [o])
    dest_exp = router.in_index[network.node_index(destination)]
    if not np.isfinite(dist[0, dest_exp]):
        raise Unreachable([(origin, destination)])
    links = router.path(parent[0], o, dest_exp)
    return Path(tuple(int(network.link_ids[a]) for a in links), (origin, destination), 0.0)


def all_or_nothing(network: Network, costs, demand: DemandTable) -> np.ndarray:
    """Load each OD's demand entirely on its shortest path under ``costs``."""
    volumes, _, _ = _load(_Router(network), _costs_array(network, costs), _group_demand(network, demand))
    return volumes


def _gap(volumes, costs, sp_costs, demand_q) -> float:
    tstt = float(np.dot(volumes, costs))
    if tstt <= 0:
        raise ZeroTSTT("ZeroTSTT: total system travel time is zero")
    return (tstt - float(np.dot(demand_q, sp_costs))) / tstt


def relative_gap(network: Network, volumes, demand: DemandTable, costs) -> float:
    """``(TSTT - sum q_rs * shortest_rs) / TSTT`` at fixed ``costs``."""
    times = _costs_array(network, costs)
    grouped = _group_demand(network, demand)
    _, paths, sp = _load(_Router(network), times, grouped)
    q = np.array([p[1] for p in paths])
    return _gap(np.asarray(volumes, dtype=float), times, sp, q)


# -- MSA --------------------------------------------------------------------


class _PathStore:
    def __init__(self):
        self.index: dict[tuple, int] = {}
        self.keys: list[tuple] = []
        self.ods: list[tuple[int, int]] = []
        self.flows = np.zeros(64)

    def add(self, od, links: tuple, amount: float):
        key = (od, links)
        i = self.index.get(key)
        if i is None:
            i = len(self.keys)
            self.index[key] = i
            self.keys.append(links)
            self.ods.append(od)
            if i >= len(self.flows):
                self.flows = np.concatenate([self.flows, np.zeros(len(self.flows))])
        self.flows[i] += amount

    def scale(self, factor: float):
        self.flows[: len(self.keys)] *= factor

    def link_volumes(self, n_links: int) -> np.ndarray:
        volumes = np.zeros(n_links)
        for links, f in zip(self.keys, self.flows):
            volumes[list(links)] += f
        return volumes


def solve(
    network: Network,
    demand: DemandTable,
    pvdf_config: PvdfConfig = PvdfConfig(),
    solver_config: SolverConfig = SolverConfig(),
    initial_costs=None,
) -> AssignmentResult:
    """Solve the user equilibrium with MSA.

    ``initial_costs`` replaces free-flow costs for the first all-or-nothing
    loading (a warm start).  Non-convergence is reported through
    ``result.converged``, never raised.
    """
    mode = solver_config.mode
    if mode is None:
        mode = Mode.STOCHASTIC if pvdf_config.family.stochastic else Mode.DETERMINISTIC
    stochastic = mode is Mode.STOCHASTIC
    if stochastic and not pvdf_config.family.stochastic:
        raise InvalidInput(f"stochastic mode needs a stochastic family, got {pvdf_config.family.value}")
    grouped = _group_demand(network, demand)
    period = demand.period
    n = network.n_links

    def expected(volumes):
        return _expected_times(network, volumes_to_flows(volumes, network, period), pvdf_config)

    if grouped.total == 0:
        zero = np.zeros(n)
        return AssignmentResult(
            np.asarray(network.link_ids), zero, zero.copy(), expected(zero), [], np.array([0.0]), 1, True, 0.0
        )

    router = _Router(network)
    rng = np.random.default_rng(solver_config.seed)
    n_samples = solver_config.samples_per_iteration if stochastic else 1
    store = _PathStore()

    def routing_load(volumes, first_costs=None):
        if first_costs is not None:
            y, paths, _ = _load(router, first_costs, grouped)
            return y, paths, 1
        if not stochastic:
            y, paths, _ = _load(router, expected(volumes), grouped)
            return y, paths, 1
        flows = volumes_to_flows(volumes, network, period)
        y = np.zeros(n)
        paths = []
        for _ in range(n_samples):
            yi, pi, _ = _load(router, _sampled_times(network, flows, pvdf_config, rng), grouped)
            y += yi / n_samples
            paths.extend(pi)
        return y, paths, n_samples

    start = None if initial_costs is None else _costs_array(network, initial_costs)
    volumes, paths, share = routing_load(np.zeros(n), start)
    for od, q, links in paths:
        store.add(od, links, q / share)

    history = []
    converged = False
    k = 1
    while True:
        costs = expected(volumes)
        y_det, paths_det, sp = _load(router, costs, grouped)
        q = np.array([p[1] for p in paths_det])
        gap = _gap(volumes, costs, sp, q)
        history.append(gap)
        if gap <= solver_config.gap_tolerance:
            converged = True
            break
        if k >= solver_config.max_iterations:
            break
        k += 1
        if stochastic:
            y, paths, share = routing_load(volumes)
        else:
            y, paths, share = y_det, paths_det, 1
        step = 1.0 / k
        volumes = volumes + step * (y - volumes)
        store.scale(1.0 - step)
        for od, qq, links in paths:
            store.add(od, links, step * qq / share)

    final = store.link_volumes(n)
    link_ids = np.asarray(network.link_ids)
    out_paths = [
        Path(tuple(int(link_ids[a]) for a in links), od, float(f))
        for links, od, f in zip(store.keys, store.ods, store.flows)
    ]
    flows = volumes_to_flows(final, network, period)
    log.debug("MSA finished after %d iterations, gap %.3e, %d paths", k, history[-1], len(out_paths))
    return AssignmentResult(
        link_ids,
        final,
        flows,
        _expected_times(network, flows, pvdf_config),
        out_paths,
        np.asarray(history),
        k,
        converged,
        grouped.total,
    )


def total_system_travel_time(result: AssignmentResult) -> float:
    return float(np.dot(result.link_volumes, result.link_times))


def summary(result: AssignmentResult, empty_tol: float = 1e-9) -> dict:
    """Network-level measures: TSTT, average link volume, path counts, average trip time, empty links."""
    path_flows = np.array([p.flow for p in result.paths]) if result.paths else np.zeros(0)
    tstt = total_system_travel_time(result)
    return {
        "tstt_s": tstt,
        "average_link_volume_ped": float(np.mean(result.link_volumes)) if len(result.link_volumes) else 0.0,
        "total_paths": len(result.paths),
        "average_path_volume_ped": float(np.mean(path_flows)) if len(path_flows) else 0.0,
        "average_trip_time_s": tstt / result.total_demand if result.total_demand > 0 else 0.0,
        "empty_links": int(np.sum(result.link_volumes <= empty_tol)),
        "iterations": result.iterations,
        "relative_gap": result.final_gap,
        "converged": result.converged,
    }
