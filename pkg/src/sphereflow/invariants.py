"""Monitored functionals: energy, the 1D Q-invariant, Sobolev seminorms, fluxes."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .geometry import SphereField, cross, dot, schrodinger_rhs, tension_field
from .grid import (BoxGrid, boundary_normal_derivative, grad_norm_sq, integrate,
                   laplacian_neumann, partial_derivative)


@dataclass
class InvariantRecord:
    t: float
    sphere_violation: float
    dirichlet_energy: float
    q_value: Optional[float] = None
    h2_identity_residual: Optional[float] = None
    sobolev: dict = field(default_factory=dict)
    boundary_flux_max: float = 0.0
    eps_dissipation_rate: Optional[float] = None
    kinetic: Optional[float] = None


def _require_1d(u: SphereField) -> None:
    if u.grid.dims != 1:
        raise ValueError("the Q-invariant is defined for 1D grids only")


def dirichlet_energy(u: SphereField) -> float:
    """``∫ |∇u|²`` with the mirror central gradient and trapezoid quadrature."""
    return integrate(u.grid, grad_norm_sq(u.grid, u.values))


def sbp_energy(u: SphereField) -> float:
    """``-<u, L u>`` in the trapezoid inner product, ``L`` the Neumann Laplacian.

    Equals the forward-difference energy ``sum |u[i+1] - u[i]|² / h`` per
    axis.  This is the quadratic form the midpoint rule conserves exactly;
    :func:`dirichlet_energy` differs from it by O(h²).
    """
    grid, v = u.grid, u.values
    return -integrate(grid, dot(v, laplacian_neumann(grid, v)))


def q_invariant(u: SphereField, eps: float = 0.0, route: str = "rhs") -> float:
    """``∫|∂t u|² - ¼ ∫|∂x u|⁴`` for the undamped 1D flow.

    ``∂t u`` is taken from the spatial right-hand side ``u × Δu``
    (``route="rhs"``), never from a time difference.  ``route="tension"``
    uses ``|τ(u)|²`` and ``route="identity"`` uses ``|Δu|² - <u, Δu>²``;
    all three agree on S² up to O(h²).
    """
    _require_1d(u)
    if eps != 0.0:
        raise ValueError("Q is conserved only for eps = 0")
    grid, v = u.grid, u.values
    if route == "rhs":
        ut2 = np.sum(schrodinger_rhs(u) ** 2, axis=-1)
    elif route == "tension":
        ut2 = np.sum(tension_field(u) ** 2, axis=-1)
    elif route == "identity":
        lap = laplacian_neumann(grid, v)
        ut2 = dot(lap, lap) - dot(v, lap) ** 2
    else:
        raise ValueError(f"unknown route {route!r}")
    gx2 = grad_norm_sq(grid, v)
    return integrate(grid, ut2) - 0.25 * integrate(grid, gx2**2)


def h2_identity_residual(u: SphereField, q0: float, eps: float = 0.0) -> float:
    """``| ∫|u_xx|² - (5/4)∫|u_x|⁴ - q0 |``, zero along exact undamped 1D flows."""
    _require_1d(u)
    if eps != 0.0:
        raise ValueError("the H2 identity holds only for eps = 0")
    grid, v = u.grid, u.values
    uxx = partial_derivative(grid, v, 0, 2)
    gx2 = grad_norm_sq(grid, v)
    return abs(integrate(grid, np.sum(uxx**2, axis=-1)) - 1.25 * integrate(grid, gx2**2) - q0)


class SobolevNorm(NamedTuple):
    seminorm: float
    surrogate: Optional[float]


def _seminorm_sq(grid: BoxGrid, f: np.ndarray, k: int) -> float:
    if k == 0:
        return integrate(grid, np.sum(f.reshape(grid.shape + (-1,)) ** 2, axis=-1))
    # ordered multi-indices grouped by per-axis counts
    counts = Counter(tuple(np.bincount(idx, minlength=grid.dims))
                     for idx in itertools.product(range(grid.dims), repeat=k))
    total = 0.0
    for per_axis, mult in counts.items():
        d = f
        for axis, n in enumerate(per_axis):
            if n:
                d = partial_derivative(grid, d, axis, int(n))
        total += mult * integrate(grid, np.sum(d.reshape(grid.shape + (-1,)) ** 2, axis=-1))
    return total


def sobolev_seminorm(u: SphereField, k: int) -> SobolevNorm:
    """Discrete ``(∫|∂^k u|²)^½`` and, for k >= 2, ``‖u‖_L² + ‖Δu‖_{H^(k-2)}``."""
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    grid, v = u.grid, u.values
    semi = float(np.sqrt(_seminorm_sq(grid, v, k)))
    if k == 1:
        return SobolevNorm(semi, None)
    lap = laplacian_neumann(grid, v)
    lap_norm = np.sqrt(sum(_seminorm_sq(grid, lap, j) for j in range(k - 1)))
    return SobolevNorm(semi, float(np.sqrt(_seminorm_sq(grid, v, 0)) + lap_norm))


def eps_dissipation_rate(u: SphereField, eps: float) -> float:
    """Predicted energy derivative ``-2 eps ∫ |τ(u)|²`` of the damped flow."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0,1] for the dissipation rate")
    return -2.0 * eps * integrate(u.grid, np.sum(tension_field(u) ** 2, axis=-1))


def boundary_flux_max(u: SphereField) -> float:
    """Largest componentwise second-order normal derivative over all boundary nodes."""
    faces = boundary_normal_derivative(u.grid, u.values, order=2)
    return float(max(np.max(np.abs(v)) for v in faces.values()))


def kinetic_term(u: SphereField, eps: float = 0.0) -> float:
    """``∫ |∂t u|²`` with ``∂t u`` from the right-hand side."""
    ut = schrodinger_rhs(u)
    if eps:
        ut = ut + eps * tension_field(u)
    return integrate(u.grid, np.sum(ut**2, axis=-1))


class InvariantMonitor:
    """Builds an :class:`InvariantRecord` per state; remembers Q(0) for the H² identity."""

    def __init__(self, eps: float = 0.0, q0: Optional[float] = None,
                 sobolev_orders=(1, 2, 3), with_kinetic: bool = False):
        self.eps = eps
        self.q0 = q0
        self.sobolev_orders = tuple(sobolev_orders)
        self.with_kinetic = with_kinetic

    def __call__(self, state) -> InvariantRecord:
        u = state.u
        one_d_flow = u.grid.dims == 1 and self.eps == 0.0
        q = q_invariant(u) if one_d_flow else None
        if one_d_flow and self.q0 is None:
            self.q0 = q
        return InvariantRecord(
            t=float(state.t),
            sphere_violation=u.sphere_violation(),
            dirichlet_energy=dirichlet_energy(u),
            q_value=q,
            h2_identity_residual=h2_identity_residual(u, self.q0) if one_d_flow else None,
            sobolev={k: sobolev_seminorm(u, k).seminorm for k in self.sobolev_orders},
            boundary_flux_max=boundary_flux_max(u),
            eps_dissipation_rate=eps_dissipation_rate(u, self.eps) if self.eps > 0 else None,
            kinetic=kinetic_term(u, self.eps) if self.with_kinetic else None,
        )


def relative_drift(values, floor: float = 1e-12) -> float:
    """``max_t |v(t) - v(0)| / max(|v(0)|, floor)``."""
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(v - v[0])) / max(abs(v[0]), floor))
