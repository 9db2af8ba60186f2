"""
Which initial data are compatible with the boundary?
====================================================

Smooth solutions need more than ``∂u/∂ν = 0`` at t = 0.  The checks here
test normal derivatives of ever higher order, each against a tolerance
that scales with the grid spacing.
"""

import numpy as np

from sphereflow import BoxGrid, SphereField
from sphereflow.compatibility import (InitialDataSpec, check_cc0, check_cc1_intrinsic, check_cc_strong,
                                      check_cc_tilde, generate_initial_data)

grid = BoxGrid.uniform(129)


def summary(name, u):
    print(name)
    for report in (check_cc0(u), check_cc1_intrinsic(u), check_cc_strong(u, 2), check_cc_tilde(u, 2)):
        levels = ", ".join(f"{j}: {report.max_residual(j):.1e}" for j in sorted(report.residuals))
        print(f"  {report.condition:<15} {'pass' if report.passed else 'FAIL'}   {levels}")


# %%
# Data that are constant near the boundary pass everything exactly.
summary("constant near the boundary",
        generate_initial_data(InitialDataSpec("constant_near_boundary", (0.9, 0.2), 0.2, 0.5), grid))

# %%
# Cosine profiles are even about both ends, so every odd normal derivative
# vanishes and the residuals are pure truncation error.
summary("cosine profile", generate_initial_data(InitialDataSpec(amplitudes=(0.5, 0.3)), grid))

# %%
# A great-circle arc leaves the boundary at an angle and fails at once.
summary("geodesic", generate_initial_data(InitialDataSpec("geodesic", (2.0,)), grid))

# %%
# Subtler: bend the profile by x³(1-x)³.  The slope still vanishes at the
# ends, but the third derivative does not, so the first-order conditions
# catch it.
x = grid.axis_coords(0)
theta = 0.5 * np.cos(np.pi * x) + 0.2 * x**3 * (1 - x) ** 3
summary("cubic bend", SphereField(grid, np.stack([np.sin(theta), 0 * x, np.cos(theta)], axis=-1)))
