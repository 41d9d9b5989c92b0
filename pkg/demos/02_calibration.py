"""
Calibrating link performance from observations
==============================================

We fabricate a noisy density / speed / travel-time survey from a known
speed law and recover the parameters with the calibration chain.
"""
import numpy as np

from pedtap import ObservationSet, SpeedLaw, calibrate, capacity, critical_density, quasi_density
from pedtap.pvdf import eval_det_symmetric

rng = np.random.default_rng(11)
truth = SpeedLaw(u_f=1.34, theta=1.9, gamma=1.7)
tau = 0.685  # free-flow time of the observed segment, s

###############################################################################
# Forty density levels, four observations each. Travel times follow the
# symmetric pVDF with 3% multiplicative noise.

k = np.repeat(np.linspace(0.1, 4.0, 40), 4)
speed = truth.speed(k) * (1 + 0.01 * rng.standard_normal(k.size))
q = quasi_density(k, capacity(truth), critical_density(truth))
t = eval_det_symmetric(q / 2, q / 2, tau, capacity(truth)) * (1 + 0.03 * rng.standard_normal(k.size))
obs = ObservationSet.from_arrays(density=k, speed=speed, travel_time=t)

###############################################################################
# ``calibrate`` fits the speed law first, derives critical density and
# capacity from it, then fits the pVDF families and the spread curve.

run = calibrate(obs, tau)
print("speed law", run.speed_law)
print(f"critical density {run.critical_density:.3f} ped/m2, capacity {run.capacity:.0f} ped/m/hr")
print("symmetric", {k: round(v, 3) for k, v in run.symmetric.params.items()}, f"R2 {run.symmetric.r_squared:.3f}")
print("sigma", {k: round(v, 3) for k, v in run.sigma.params.items()})

###############################################################################
# The result plugs straight into the solver.

cfg = run.pvdf_config("stoch_symmetric")
print(cfg.to_dict())
