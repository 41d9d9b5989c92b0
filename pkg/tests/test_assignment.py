import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pedtap import (
    DemandTable,
    Family,
    Link,
    Node,
    NodeKind,
    PvdfConfig,
    SolverConfig,
    all_or_nothing,
    build_network,
    link_costs,
    relative_gap,
    shortest_path,
    solve,
    summary,
    total_system_travel_time,
)
from pedtap.cases import TOY_LINKS as L, TOY_NODES as N, toy_demand, toy_network
from pedtap.errors import InvalidInput, Unreachable, ZeroTSTT
from pedtap.network import volumes_to_flows

TIGHT = SolverConfig(max_iterations=20000, gap_tolerance=1e-7)


def free_flow(net):
    return np.asarray(net.tau)


def test_shortest_path_tie_breaks_lexicographically():
    net = toy_network()
    p = shortest_path(net, free_flow(net), N["C"], N["B"])
    # C-A-B (3, 1) and C-D-B (8, 5) tie; (3, 1) is lexicographically smaller
    assert p.links == (L["C-A"], L["A-B"])
    assert p.cost(net, free_flow(net)) == pytest.approx(2 * 12 / 1.46)


def test_shortest_path_follows_costs():
    net = toy_network()
    costs = free_flow(net).copy()
    costs[net.link_index(L["C-A"])] *= 2
    assert shortest_path(net, costs, N["C"], N["B"]).links == (L["C-D"], L["D-B"])


def test_all_or_nothing_and_gap():
    net = toy_network()
    dem = toy_demand(1)
    v = all_or_nothing(net, free_flow(net), dem)
    assert v.sum() == pytest.approx(20)
    assert relative_gap(net, v, dem, free_flow(net)) == pytest.approx(0, abs=1e-12)
    # loading the longer path at free-flow costs leaves a positive gap
    costs = free_flow(net).copy()
    costs[net.link_index(L["C-A"])] *= 2
    assert relative_gap(net, v, dem, costs) > 0
    with pytest.raises(ZeroTSTT):
        relative_gap(net, np.zeros(8), dem, free_flow(net))


def test_link_costs_deterministic_and_sampled():
    net = toy_network()
    flows = np.full(8, 600.0)
    det = link_costs(net, flows, PvdfConfig())
    assert np.allclose(det.times, det.times[0])
    cfg = PvdfConfig(Family.STOCH_SYMMETRIC)
    a = link_costs(net, flows, cfg, np.random.default_rng(3)).times
    b = link_costs(net, flows, cfg, np.random.default_rng(3)).times
    assert np.array_equal(a, b)
    # both directions of a stream share their draw, equal flows give equal times
    for lid, mirror in net.streams():
        assert a[net.link_index(lid)] == pytest.approx(a[net.link_index(mirror)])
    with pytest.raises(InvalidInput):
        link_costs(net, np.full(7, 1.0), PvdfConfig())
    with pytest.raises(InvalidInput):
        link_costs(net, np.full(8, -1.0), PvdfConfig())


def test_case1_symmetric_split():
    net = toy_network()
    r = solve(net, toy_demand(1), PvdfConfig(), TIGHT)
    assert r.converged
    for name in ("A-B", "C-A", "D-B", "C-D"):
        assert r.volume(net, L[name]) == pytest.approx(5.0, abs=1e-9)
    assert total_system_travel_time(r) == pytest.approx(4 * 5 * r.link_times[0])


def test_case2_reproduces_published_times():
    # regression on the documented toy flow scale, not an acceptance gate
    net = toy_network()
    r = solve(net, toy_demand(2), PvdfConfig(), TIGHT)
    assert r.converged
    assert r.volume(net, L["C-A"]) == pytest.approx(2.413, abs=2e-3)
    assert r.time(net, L["A-B"]) == pytest.approx(9.35, abs=0.02)
    assert r.time(net, L["C-A"]) == pytest.approx(8.28, abs=0.02)
    assert r.time(net, L["D-B"]) == pytest.approx(8.81, abs=0.02)


def test_path_flows_conserve_demand():
    net = toy_network()
    dem = toy_demand(2)
    r = solve(net, dem, PvdfConfig(), SolverConfig(max_iterations=300, gap_tolerance=1e-6))
    per_od = {}
    for p in r.paths:
        per_od[p.od] = per_od.get(p.od, 0.0) + p.flow
    for o, d, q in dem.entries:
        assert per_od[(o, d)] == pytest.approx(q, rel=1e-12)
    rebuilt = np.zeros(net.n_links)
    for p in r.paths:
        for lid in p.links:
            rebuilt[net.link_index(lid)] += p.flow
    assert np.allclose(rebuilt, r.link_volumes)
    assert np.allclose(r.link_flows, volumes_to_flows(r.link_volumes, net, dem.period))


def test_gap_history_and_nonconvergence_flag():
    r = solve(toy_network(), toy_demand(2), PvdfConfig(), SolverConfig(max_iterations=5, gap_tolerance=1e-12))
    assert not r.converged
    assert r.iterations == 5 and len(r.gap_history) == 5
    assert summary(r)["converged"] is False


def test_zero_demand_converges_immediately():
    net = toy_network()
    r = solve(net, DemandTable((), 60), PvdfConfig())
    assert r.converged and r.iterations == 1 and r.tstt == 0
    assert np.allclose(r.link_times, net.tau)


def test_unreachable_lists_pairs():
    nodes = [Node(1, 0, 0), Node(2, 10, 0), Node(3, 50, 0), Node(4, 60, 0)]
    links = [
        Link(1, 1, 2, 10, 1, 4847, 7, mirror=2),
        Link(2, 2, 1, 10, 1, 4847, 7, mirror=1),
        Link(3, 3, 4, 10, 1, 4847, 7, mirror=4),
        Link(4, 4, 3, 10, 1, 4847, 7, mirror=3),
    ]
    net = build_network(nodes, links)
    with pytest.raises(Unreachable) as exc:
        solve(net, DemandTable(((1, 2, 5.0), (1, 4, 3.0))))
    assert exc.value.pairs == [(1, 4)]
    assert "1->4" in str(exc.value)
    with pytest.raises(Unreachable):
        solve(net, DemandTable(((1, 99, 5.0),)))


def test_centroids_are_never_through_nodes():
    # 1 -- 2(centroid) -- 3 is short, 1 -- 4 -- 3 is long
    nodes = [Node(1, 0, 0), Node(2, 10, 0, NodeKind.BLOCK_CENTROID), Node(3, 20, 0), Node(4, 10, 30)]
    links = []
    for k, (a, b, length) in enumerate([(1, 2, 10), (2, 3, 10), (1, 4, 32), (4, 3, 32)]):
        links.append(Link(2 * k + 1, a, b, length, 1, 4847, length / 1.46, mirror=2 * k + 2))
        links.append(Link(2 * k + 2, b, a, length, 1, 4847, length / 1.46, mirror=2 * k + 1))
    net = build_network(nodes, links)
    assert shortest_path(net, net.tau, 1, 3).links == (5, 7)
    assert shortest_path(net, net.tau, 1, 2).links == (1,)
    assert shortest_path(net, net.tau, 2, 3).links == (3,)


def test_stochastic_requires_stochastic_family():
    with pytest.raises(InvalidInput):
        solve(toy_network(), toy_demand(2), PvdfConfig(), SolverConfig(mode="stochastic"))


def test_stochastic_is_seed_deterministic():
    cfg = PvdfConfig(Family.STOCH_SYMMETRIC)
    sc = SolverConfig(max_iterations=60, gap_tolerance=1e-9, seed=11)
    a = solve(toy_network(), toy_demand(2), cfg, sc)
    b = solve(toy_network(), toy_demand(2), cfg, sc)
    assert np.array_equal(a.link_volumes, b.link_volumes)
    assert [p.links for p in a.paths] == [p.links for p in b.paths]


def test_warm_start_uses_initial_costs():
    net = toy_network()
    costs = free_flow(net).copy()
    costs[net.link_index(L["C-A"])] *= 3
    r = solve(net, toy_demand(1), PvdfConfig(), SolverConfig(max_iterations=1), initial_costs=costs)
    assert r.volume(net, L["C-D"]) == pytest.approx(10)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 40), st.floats(0.5, 40))
def test_equilibrium_path_costs_equalise(q1, q2):
    net = toy_network()
    dem = DemandTable(((N["C"], N["B"], q1), (N["B"], N["A"], q2)), 60)
    r = solve(net, dem, PvdfConfig(), SolverConfig(max_iterations=20000, gap_tolerance=1e-6))
    used = [p for p in r.paths if p.od == (N["C"], N["B"]) and p.flow > 1e-3 * q1]
    costs = [p.cost(net, r.link_times) for p in used]
    assert max(costs) <= min(costs) * 1.01
