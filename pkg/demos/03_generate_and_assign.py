"""
From road centerlines to an assigned footpath network
=====================================================

A small street lattice is turned into a sidewalk graph with corners,
crossings, midblock nodes and block centroids, then loaded with demand.
"""
from collections import Counter

from pedtap import Centerline, DemandTable, NodeKind, PvdfConfig, SolverConfig, generate, solve, summary

###############################################################################
# Three east-west and three north-south streets, 120 m apart.

lines = []
for i in range(3):
    lines.append(Centerline(2 * i + 1, ((0, 120 * i), (240, 120 * i))))
    lines.append(Centerline(2 * i + 2, ((120 * i, 0), (120 * i, 240))))

net, report = generate(lines)
print(report.to_text())
print(Counter(n.kind.value for n in net.nodes))

###############################################################################
# Every block centroid sends 2500 pedestrians an hour to the opposite block.

blocks = sorted(n.id for n in net.nodes if n.kind is NodeKind.BLOCK_CENTROID)
demand = DemandTable(tuple((o, d, 2500.0) for o, d in zip(blocks, reversed(blocks))))
result = solve(net, demand, PvdfConfig(), SolverConfig(gap_tolerance=1e-6))
print(summary(result))

###############################################################################
# All four trips meet at the central crossings. Even when loaded, a 10 m
# crossing stays far cheaper than walking around a 120 m block, so each OD
# pair keeps a single path.

busiest = sorted(zip(result.link_volumes, result.link_ids), reverse=True)[:5]
for v, lid in busiest:
    link = net.link(lid)
    print(f"link {lid} ({link.kind.value}) carries {v:.1f} ped")
