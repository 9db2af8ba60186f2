"""
Letting the damping go to zero
==============================

Damped solutions approach the undamped one as the damping coefficient
shrinks.  Each run shares grid, step and datum, so the distances below
measure the damping alone.
"""

from sphereflow import FlowParams
from sphereflow.experiments import SweepPlan, viscosity_sweep

plan = SweepPlan(eps_list=(0.2, 0.1, 0.05, 0.025, 0.0), n=129, t_final=0.2,
                 params=FlowParams(dt=2e-4), monitor_stride=200)
result = viscosity_sweep(plan)

# %%
# Halving the damping roughly halves the distance: the limit is approached
# at first order.
for eps, d in result.distances.items():
    print(f"eps = {eps:<6g} L2 distance to the undamped run {d:.4e}")
print("observed orders", [round(p, 3) for p in result.orders])
print("monotone:", result.monotone())

# %%
# The damped runs lose energy while the undamped one keeps it.
for eps in (0.2, 0.0):
    energies = [r.dirichlet_energy for r in result.trajectories[eps].records]
    print(f"eps = {eps:g}: energy {energies[0]:.6f} -> {energies[-1]:.6f}")
