"""Boundary compatibility checks for initial data, the V1/V2 fields, and admissible data generators.

Residuals of analytically vanishing quantities are pure truncation error,
so every check uses a mesh-dependent tolerance ``c0 * h**2``, relaxed by
one power of ``h`` per derivative beyond the first:
``tol(h, j) = c0 * h**(2 - max(j - 1, 0))`` where ``j`` counts the
derivatives inside the normal derivative.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import SphereField, cross, dot, project_tangent, schrodinger_rhs, tension_field
from .grid import (MAX_DERIVATIVE_ORDER, BoxGrid, boundary_normal_derivative, gradient_neumann,
                   grad_norm_sq, laplacian_neumann)

C0 = 10.0
EXTRAPOLATION_DEGREE = 3
ADMISSIBLE_FAMILIES = ("constant_near_boundary", "mirror_symmetric_profile")
# geodesic data violate the Neumann condition; kept for negative tests
FAMILIES = ADMISSIBLE_FAMILIES + ("geodesic",)


@dataclass
class CompatReport:
    """Per-level boundary residuals of one compatibility condition.

    ``residuals[j]`` holds the residual magnitude at every boundary node for
    level ``j``; the report passes iff each level stays within
    ``tolerance_used[j]``.
    """

    condition: str
    residuals: dict
    tolerance_used: dict
    note: str = ""

    @property
    def failed_levels(self) -> list:
        return [j for j in sorted(self.residuals) if self.max_residual(j) > self.tolerance_used[j]]

    @property
    def passed(self) -> bool:
        return not self.failed_levels

    @property
    def first_failure(self) -> Optional[int]:
        failed = self.failed_levels
        return failed[0] if failed else None

    def max_residual(self, level: Optional[int] = None) -> float:
        if level is None:
            return max((self.max_residual(j) for j in self.residuals), default=0.0)
        return float(np.max(self.residuals[level], initial=0.0))


def graded_tolerance(h: float, j: int, c0: float = C0) -> float:
    return c0 * h ** (2 - max(j - 1, 0))


def _central_valid(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Central difference on the nodes where it needs no ghost values."""
    hi = np.take(f, np.arange(2, f.shape[axis]), axis=axis)
    lo = np.take(f, np.arange(0, f.shape[axis] - 2), axis=axis)
    return (hi - lo) / (2.0 * h)


def _extrapolation_weights(offset: int, degree: int) -> np.ndarray:
    nodes = np.arange(offset, offset + degree + 1, dtype=float)
    w = np.ones(degree + 1)
    for i, xi in enumerate(nodes):
        for j, xj in enumerate(nodes):
            if i != j:
                w[i] *= (0.0 - xj) / (xi - xj)
    return w


def _extrapolate_to_faces(g: np.ndarray, axis: int, offset: int,
                          degree: int = EXTRAPOLATION_DEGREE) -> tuple[np.ndarray, np.ndarray]:
    """Polynomial extrapolation of a field known on nodes ``offset..N-1-offset`` to both end nodes."""
    if g.shape[axis] < degree + 1:
        raise ValueError("grid too coarse to extrapolate to the boundary")
    w = _extrapolation_weights(offset, degree)
    low = sum(c * np.take(g, i, axis=axis) for i, c in enumerate(w))
    high = sum(c * np.take(g, g.shape[axis] - 1 - i, axis=axis) for i, c in enumerate(w))
    return low, high


def _normal_derivative_at_faces(f: np.ndarray, axis: int, order: int, h: float):
    """``order``-th derivative along ``axis`` at both faces, assuming no boundary parity."""
    g = f
    for _ in range(order):
        g = _central_valid(g, h, axis)
    return _extrapolate_to_faces(g, axis, order)


def _magnitude(v: np.ndarray) -> np.ndarray:
    return np.ravel(np.linalg.norm(np.asarray(v), axis=-1))


def _face_residuals(faces) -> np.ndarray:
    return np.concatenate([_magnitude(v) for v in faces])


def check_cc0(u0: SphereField, order: int = 4, c0: float = C0) -> CompatReport:
    """Zero normal derivative of the initial data on the boundary."""
    faces = boundary_normal_derivative(u0.grid, u0.values, order=order)
    return CompatReport("CC0", {0: _face_residuals(faces.values())},
                        {0: graded_tolerance(u0.grid.h, 0, c0)})


def _normal_covariant(u0: SphereField, X: np.ndarray, order: int) -> np.ndarray:
    grid = u0.grid
    faces = boundary_normal_derivative(grid, X, order=order)
    out = []
    for (axis, side), dX in faces.items():
        base = np.take(u0.values, 0 if side == 0 else grid.shape[axis] - 1, axis=axis)
        out.append(project_tangent(base, dX, tol=np.inf))
    return _face_residuals(out)


def _skip_boundary_weights(degree: int = 4) -> np.ndarray:
    """Weights for ``f'(0)`` from ``f(h), ..., f((degree+1) h)``, exact for degree-``degree`` polynomials."""
    nodes = np.arange(1, degree + 2, dtype=float)
    rhs = np.zeros(degree + 1)
    rhs[1] = 1.0
    return np.linalg.solve(np.vander(nodes, degree + 1, increasing=True).T, rhs)


def _normal_covariant_interior(u0: SphereField, X: np.ndarray) -> np.ndarray:
    """Like :func:`_normal_covariant` but ignoring the boundary node of ``X``.

    ``X`` built with the mirror Laplacian is even-reflected at the boundary
    node itself, which would hide exactly the defect being tested.
    """
    grid = u0.grid
    w = _skip_boundary_weights()
    out = []
    for axis in range(grid.dims):
        n, h = grid.shape[axis], grid.spacing[axis]
        if n < w.size + 1:
            raise ValueError("grid too coarse for the boundary derivative")
        # the stencil gives d/dx at x=0 and -d/dx at x=1; outward flips both
        lo = -sum(c * np.take(X, 1 + i, axis=axis) for i, c in enumerate(w)) / h
        hi = -sum(c * np.take(X, n - 2 - i, axis=axis) for i, c in enumerate(w)) / h
        out.append(project_tangent(np.take(u0.values, 0, axis=axis), lo, tol=np.inf))
        out.append(project_tangent(np.take(u0.values, n - 1, axis=axis), hi, tol=np.inf))
    return _face_residuals(out)


def check_cc1_intrinsic(u0: SphereField, order: int = 4, c0: float = C0) -> CompatReport:
    """Order-1 condition: ``∇̃_ν u0 = 0`` and ``∇̃_ν τ(u0) = 0`` on the boundary.

    The verdict does not involve the damping parameter.
    """
    h = u0.grid.h
    cc0 = check_cc0(u0, order, c0)
    if not cc0.passed:
        return CompatReport("CC1_intrinsic", cc0.residuals, cc0.tolerance_used,
                            note="CC0 failed; higher levels not evaluated")
    tau = tension_field(u0)
    residuals = {0: _normal_covariant(u0, u0.values, order),
                 1: _normal_covariant_interior(u0, tau)}
    return CompatReport("CC1_intrinsic", residuals,
                        {0: graded_tolerance(h, 0, c0), 1: graded_tolerance(h, 2, c0)})


def _multi_indices(dims: int, j: int):
    """Distinct per-axis derivative counts of total order ``j``."""
    seen = set()
    for idx in itertools.product(range(dims), repeat=j):
        counts = tuple(int(c) for c in np.bincount(np.array(idx, dtype=int), minlength=dims))
        if counts not in seen:
            seen.add(counts)
            yield counts


def check_cc_strong(u0: SphereField, k: int, c0: float = C0, all_partials: bool = False,
                    cap: int = MAX_DERIVATIVE_ORDER) -> CompatReport:
    """Strong condition of order k: ``∂_ν ∂^j u0 = 0`` on the boundary for ``1 <= j <= 2k``.

    Level 0 (``∂_ν u0``) is included as the prerequisite.  By default only
    partials with an even number of normal derivatives are tested, i.e.
    those whose normal derivative has odd total normal order; these vanish
    for every evenly reflectable field.  ``all_partials=True`` tests every
    partial, which additionally forces even normal derivatives to vanish.
    """
    grid = u0.grid
    if 2 * k + 1 > cap:
        raise ValueError(f"k={k} needs derivatives of order {2 * k + 1} > cap {cap}")
    residuals, tols = {}, {}
    for j in range(0, 2 * k + 1):
        level = []
        for counts in _multi_indices(grid.dims, j) if j else [(0,) * grid.dims]:
            for axis in range(grid.dims):
                if j and counts[axis] % 2 and not all_partials:
                    continue
                f = u0.values
                for other, n in enumerate(counts):
                    if other != axis:
                        for _ in range(n):
                            f = np.gradient(f, grid.spacing[other], axis=other, edge_order=2)
                lo, hi = _normal_derivative_at_faces(f, axis, counts[axis] + 1, grid.spacing[axis])
                level.append(_magnitude(lo))
                level.append(_magnitude(hi))
        if level:
            residuals[j] = np.concatenate(level)
            tols[j] = graded_tolerance(grid.h, j, c0)
    return CompatReport(f"CC_strong({k})", residuals, tols)


def covariant_ladder(u0: SphereField, order: int) -> list:
    """``[∇̃_x u0, ∇̃_x² u0, ...]`` up to ``order`` on a 1D grid.

    Uses ``∇̃_x^n u0 = ∇̃_x^(n-1) (∂_x u0)``.  Level ``n`` is returned on the
    nodes ``n .. N-1-n`` where the central stencils need no boundary data.
    """
    grid = u0.grid
    if grid.dims != 1:
        raise ValueError("the covariant ladder is implemented for 1D grids")
    h = grid.spacing[0]
    ladder, X = [], u0.values
    for n in range(1, order + 1):
        X = _central_valid(X, h, 0)
        X = project_tangent(u0.values[n:grid.shape[0] - n], X, tol=np.inf)
        ladder.append(X)
    return ladder


def check_cc_tilde(u0: SphereField, k: int, c0: float = C0,
                   cap: int = MAX_DERIVATIVE_ORDER) -> CompatReport:
    """1D intrinsic condition: ``∇̃_x^(2j+1) u0 = 0`` at both ends for ``0 <= j <= k``."""
    grid = u0.grid
    if grid.dims != 1:
        raise ValueError("CC_tilde is defined on 1D grids only")
    if 2 * k + 1 > cap:
        raise ValueError(f"k={k} needs derivatives of order {2 * k + 1} > cap {cap}")
    ladder = covariant_ladder(u0, 2 * k + 1)
    residuals, tols = {}, {}
    for j in range(k + 1):
        n = 2 * j + 1
        lo, hi = _extrapolate_to_faces(ladder[n - 1], 0, n)
        residuals[j] = np.array([np.linalg.norm(lo), np.linalg.norm(hi)])
        tols[j] = graded_tolerance(grid.h, 2 * j, c0)
    return CompatReport(f"CC_tilde({k})", residuals, tols)


@dataclass
class ImplicationReport:
    strong: CompatReport
    tilde: CompatReport

    @property
    def holds(self) -> bool:
        return self.tilde.passed or not self.strong.passed


def implication_check(u0: SphereField, k: int, c0: float = C0) -> ImplicationReport:
    """Check that passing CC_strong(k) entails passing CC_tilde(k) on the same data."""
    return ImplicationReport(check_cc_strong(u0, k, c0), check_cc_tilde(u0, k, c0))


def compute_v1(u0: SphereField, eps: float) -> np.ndarray:
    """First time derivative at t = 0: ``eps τ(u0) + u0 × Δu0``."""
    rhs = schrodinger_rhs(u0)
    return rhs if eps == 0 else eps * tension_field(u0) + rhs


def compute_v2(u0: SphereField, eps: float) -> np.ndarray:
    """Second time derivative at t = 0 from the extrinsic form of the damped flow."""
    grid, u = u0.grid, u0.values
    v1 = compute_v1(u0, eps)
    lap_u = laplacian_neumann(grid, u)
    lap_v1 = laplacian_neumann(grid, v1)
    v2 = cross(v1, lap_u) + cross(u, lap_v1)
    if eps:
        grads_u = gradient_neumann(grid, u)
        grads_v = gradient_neumann(grid, v1)
        mixed = sum(dot(gv, gu) for gv, gu in zip(grads_v, grads_u))
        v2 = v2 + eps * (lap_v1 + 2.0 * mixed[..., None] * u
                         + grad_norm_sq(grid, u)[..., None] * v1)
    return v2


@dataclass(frozen=True)
class InitialDataSpec:
    """Parameters of an admissible initial datum.

    ``amplitudes`` are the cosine-mode coefficients of the polar angle;
    ``twist`` adds an azimuthal rotation; ``blend_width`` is the width of
    the constant collar for the ``constant_near_boundary`` family.  For
    ``geodesic`` the first amplitude is the angular frequency.
    """

    family: str = "mirror_symmetric_profile"
    amplitudes: tuple = (0.5,)
    blend_width: float = 0.2
    twist: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in np.atleast_1d(self.amplitudes)))
        if not self.amplitudes or not all(np.isfinite(self.amplitudes)):
            raise ValueError("amplitudes must be a non-empty list of finite numbers")
        if not 0.0 < self.blend_width < 0.5:
            raise ValueError("blend_width must lie in (0, 0.5)")


def smooth_bump(s: np.ndarray, width: float) -> np.ndarray:
    """C-infinity bump on [0, 1], identically 0 within ``width`` of either end and 1 at the centre."""
    r = (np.asarray(s, dtype=float) - 0.5) / (0.5 - width)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def generate_initial_data(spec: InitialDataSpec, grid: BoxGrid) -> SphereField:
    """Sample an exactly unit-norm initial field of the requested family."""
    coords = grid.coords()
    x0 = coords[0]
    modes = sum(a * np.cos(n * np.pi * x0) for n, a in enumerate(spec.amplitudes, start=1))
    if spec.family == "geodesic":
        w = spec.amplitudes[0]
        return SphereField(grid, np.stack([np.cos(w * x0), np.sin(w * x0), np.zeros_like(x0)], axis=-1))
    if spec.family == "mirror_symmetric_profile":
        polar = modes
        azimuth = spec.twist * np.cos(np.pi * x0)
    else:
        bump = np.ones(grid.shape)
        for c in coords:
            bump = bump * smooth_bump(c, spec.blend_width)
        shape = sum(a * np.cos((n - 1) * np.pi * x0) for n, a in enumerate(spec.amplitudes, start=1))
        polar = bump * shape
        azimuth = spec.twist * x0
    values = np.stack([np.sin(polar) * np.cos(azimuth),
                       np.sin(polar) * np.sin(azimuth),
                       np.cos(polar)], axis=-1)
    return SphereField(grid, values)


def random_admissible_spec(rng: np.random.Generator, family: Optional[str] = None) -> InitialDataSpec:
    """Draw random parameters for an admissible datum."""
    family = family or rng.choice(ADMISSIBLE_FAMILIES)
    n_modes = int(rng.integers(1, 4))
    amps = tuple(rng.uniform(-1.0, 1.0, n_modes) / np.arange(1, n_modes + 1))
    return InitialDataSpec(str(family), amps, float(rng.uniform(0.1, 0.3)), float(rng.uniform(-1.0, 1.0)))
