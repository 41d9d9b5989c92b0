"""
Four-node toy network
=====================

Two origins send pedestrians to B over a square of bidirectional footpaths.
We solve three demand cases and look at how counter-flow shapes the result.
"""
import numpy as np

from pedtap import Family, PvdfConfig, SolverConfig, solve
from pedtap.cases import TOY_LINKS, toy_demand, toy_network

net = toy_network()
names = {v: k for k, v in TOY_LINKS.items()}
tight = SolverConfig(max_iterations=20000, gap_tolerance=1e-7)

###############################################################################
# Case 1: one-way demand. Both routes C-A-B and C-D-B are identical, so the
# ten pedestrians split evenly and every link has the same travel time.

r1 = solve(net, toy_demand(1), PvdfConfig(), tight)
for lid in net.link_ids:
    print(f"{names[lid]}  volume {r1.volume(net, lid):5.2f}  time {r1.time(net, lid):.4f} s")

###############################################################################
# Case 2 adds eight pedestrians walking B to A. With the symmetric pVDF the
# opposing walkers count the same as same-direction ones, so C-A-B looks
# busier and the split drifts towards C-D-B.

r2 = solve(net, toy_demand(2), PvdfConfig(), tight)
for p in r2.paths:
    print(p.od, [names[l] for l in p.links], round(p.flow, 4), round(p.cost(net, r2.link_times), 4))

###############################################################################
# Case 3 uses the asymmetric pVDF, which treats the reference flow and the
# counter flow separately. The minor direction on A-B is now slower than the
# major direction B-A.

r3 = solve(net, toy_demand(3), PvdfConfig(Family.DET_ASYMMETRIC), tight)
print("iterations", r3.iterations, "gap", f"{r3.final_gap:.1e}")
print("A-B", round(r3.time(net, TOY_LINKS["A-B"]), 3), "s   B-A", round(r3.time(net, TOY_LINKS["B-A"]), 3), "s")

###############################################################################
# Stochastic assignment samples link times every iteration, so the result
# depends on the seed. The spread over a few seeds is small.

vols = []
for seed in range(5):
    r = solve(net, toy_demand(2), PvdfConfig(Family.STOCH_SYMMETRIC), SolverConfig(max_iterations=200, seed=seed))
    vols.append(r.volume(net, TOY_LINKS["C-A"]))
print("stochastic C-A volume over seeds:", np.round(vols, 3))
