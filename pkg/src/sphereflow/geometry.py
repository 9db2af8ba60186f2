"""S^2 geometry kernels: cross products, tangent projection, tension field and flow fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BoxGrid, GridError, grad_norm_sq, laplacian_neumann

SPHERE_TOL = 1e-9
TANGENCY_TOL = 1e-9


class ConstraintError(ValueError):
    """A field left the unit sphere, or a vector field is not tangent."""


@dataclass
class SphereField:
    """Grid-sampled map into S^2; ``values`` has shape ``grid.shape + (3,)``."""

    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape + (3,):
            raise GridError(f"values shape {self.values.shape} does not match {self.grid.shape + (3,)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite entries in sphere field")

    def sphere_violation(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.values, axis=-1) - 1.0)))

    def check(self, tol: float = SPHERE_TOL) -> "SphereField":
        viol = self.sphere_violation()
        if viol > tol:
            raise ConstraintError(f"| |u| - 1 | = {viol:.3e} exceeds sphere_tol {tol:.1e}")
        return self

    def normalized(self) -> "SphereField":
        return SphereField(self.grid, normalize(self.values))

    def copy(self) -> "SphereField":
        return SphereField(self.grid, self.values.copy())


def normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", a, b)


def cross(a, b) -> np.ndarray:
    """Right-handed cross product, broadcast over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def project_tangent(u, v, tol: float = SPHERE_TOL) -> np.ndarray:
    """Return ``v - <v, u> u``, the component of ``v`` tangent to the sphere at ``u``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    viol = np.max(np.abs(np.linalg.norm(u, axis=-1) - 1.0))
    if viol > tol:
        raise ConstraintError(f"base point off the sphere by {viol:.3e}")
    return v - dot(v, u)[..., None] * u


def _values(u) -> tuple[BoxGrid, np.ndarray]:
    if not isinstance(u, SphereField):
        raise TypeError("expected a SphereField")
    return u.grid, u.values


def tension_field(u: SphereField, project: bool = True) -> np.ndarray:
    """Tension field ``Δu + |∇u|² u`` of a sphere-valued field.

    With ``project=True`` (the default) the result is projected onto the
    tangent planes, so it is exactly tangent.  The unprojected value is
    tangent only up to the O(h²) truncation error.
    """
    grid, v = _values(u)
    tau = laplacian_neumann(grid, v) + grad_norm_sq(grid, v)[..., None] * v
    if project:
        tau = project_tangent(v, tau, tol=np.inf)
    return tau


def schrodinger_rhs(u: SphereField) -> np.ndarray:
    """``u × Δu`` with the Neumann Laplacian."""
    grid, v = _values(u)
    return cross(v, laplacian_neumann(grid, v))


def llg_rhs(u: SphereField, eps: float) -> np.ndarray:
    """Gilbert-damped right-hand side ``eps τ(u) + u × Δu``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0,1]")
    rhs = schrodinger_rhs(u)
    if eps == 0.0:
        return rhs
    return eps * tension_field(u) + rhs


def covariant_derivative(u: SphereField, X, axis: int = 0, tol: float = TANGENCY_TOL) -> np.ndarray:
    """Pull-back covariant derivative ``P(u) ∂X`` along ``axis``.

    The ambient derivative is central in the interior and second-order
    one-sided at the boundary nodes, so no parity of ``X`` is assumed.
    """
    grid, v = _values(u)
    X = np.asarray(X, dtype=float)
    if X.shape != v.shape:
        raise GridError("tangent field must match the base field shape")
    off = np.max(np.abs(dot(X, v)), initial=0.0)
    if off > tol:
        raise ConstraintError(f"X is not tangent along u (max |<X,u>| = {off:.3e})")
    dX = np.gradient(X, grid.spacing[axis], axis=axis, edge_order=2)
    return project_tangent(v, dX, tol=np.inf)
