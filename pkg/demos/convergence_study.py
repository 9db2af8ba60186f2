"""
Second-order convergence in space
=================================

Refine the grid with ``dt`` tied to ``h²`` and compare each final field
with the next finer one on the shared nodes.
"""

from sphereflow.compatibility import InitialDataSpec
from sphereflow.experiments import mesh_convergence

res = mesh_convergence([33, 65, 129, 257], InitialDataSpec(amplitudes=(1.0,)), t_final=0.05, dt_ratio=1.0)
for n, dt, err in zip(res.n_list, res.dts, res.errors):
    print(f"N = {n:4d}  dt = {dt:.2e}  distance to next grid {err:.3e}")
print("field orders      ", [round(p, 3) for p in res.field_orders])
print("energy drifts     ", [f"{d:.2e}" for d in res.drifts["dirichlet_energy"]])
print("energy drift order", [round(p, 3) for p in res.drift_orders["dirichlet_energy"]])
