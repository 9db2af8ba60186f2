"""Uniform node-centred box grids on [0, 1]^m with mirror-ghost Neumann stencils.

Field arrays carry the grid axes first; any trailing axes (e.g. the three
components of a vector field) are broadcast over.  Homogeneous Neumann
conditions are realised by even reflection about the boundary nodes, i.e.
the ghost value ``f[-1]`` equals ``f[1]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

MAX_DERIVATIVE_ORDER = 6

# one-sided first-derivative weights, by order of accuracy
_ONE_SIDED = {
    1: np.array([-1.0, 1.0]),
    2: np.array([-1.5, 2.0, -0.5]),
    4: np.array([-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25]),
}


class GridError(ValueError):
    """Raised when a grid is too small for the requested stencil."""


@dataclass(frozen=True)
class BoxGrid:
    """Uniform tensor grid on the unit box including boundary nodes.

    Parameters
    ----------
    shape : tuple of int
        Number of nodes per axis; the dimension is ``len(shape)``.
    """

    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        object.__setattr__(self, "shape", shape)
        if not 1 <= len(shape) <= 3:
            raise GridError(f"dims must be 1, 2 or 3, got {len(shape)}")
        if min(shape) < 3:
            raise GridError(f"need at least 3 nodes per axis, got {shape}")

    @classmethod
    def uniform(cls, n: int, dims: int = 1) -> "BoxGrid":
        return cls((n,) * dims)

    @property
    def dims(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / (n - 1) for n in self.shape)

    @property
    def h(self) -> float:
        """Largest spacing over the axes."""
        return max(self.spacing)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.shape[axis])

    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape``, one per axis."""
        return tuple(np.meshgrid(*(self.axis_coords(a) for a in range(self.dims)), indexing="ij"))

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights (boundary weight 1/2 per axis)."""
        w = np.ones(())
        for a, n in enumerate(self.shape):
            wa = np.full(n, self.spacing[a])
            wa[[0, -1]] *= 0.5
            w = np.multiply.outer(w, wa)
        return w

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Sparse mirror-ghost Neumann Laplacian acting on flattened scalar fields."""
        mats = []
        for a, n in enumerate(self.shape):
            h2 = self.spacing[a] ** 2
            main = np.full(n, -2.0)
            upper = np.ones(n - 1)
            lower = np.ones(n - 1)
            upper[0] = 2.0
            lower[-1] = 2.0
            mats.append(sp.diags([lower, main, upper], [-1, 0, 1]) / h2)
        eye = [sp.identity(n) for n in self.shape]
        total = sp.csr_matrix((self.size, self.size))
        for a in range(self.dims):
            factors = eye[:a] + [mats[a]] + eye[a + 1:]
            term = factors[0]
            for f in factors[1:]:
                term = sp.kron(term, f)
            total = total + term
        return total.tocsr()


def _check_field(grid: BoxGrid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[: grid.dims] != grid.shape:
        raise GridError(f"field shape {f.shape} does not match grid {grid.shape}")
    return f


def _take(f: np.ndarray, axis: int, sl) -> np.ndarray:
    idx = [slice(None)] * f.ndim
    idx[axis] = sl
    return f[tuple(idx)]


def _put(out: np.ndarray, axis: int, sl, value) -> None:
    idx = [slice(None)] * out.ndim
    idx[axis] = sl
    out[tuple(idx)] = value


def _mirror_pad(f: np.ndarray, axis: int, width: int) -> np.ndarray:
    pad = [(0, 0)] * f.ndim
    pad[axis] = (width, width)
    return np.pad(f, pad, mode="reflect")


def second_difference(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Compact second difference along ``axis`` with mirror ghosts."""
    n = f.shape[axis]
    if n < 3:
        raise GridError("need at least 3 nodes along the differenced axis")
    out = np.empty_like(f)
    c = _take(f, axis, slice(1, -1))
    interior = _take(f, axis, slice(2, None)) - 2.0 * c + _take(f, axis, slice(None, -2))
    _put(out, axis, slice(1, -1), interior)
    _put(out, axis, 0, 2.0 * (_take(f, axis, 1) - _take(f, axis, 0)))
    _put(out, axis, -1, 2.0 * (_take(f, axis, -2) - _take(f, axis, -1)))
    return out / h**2


def laplacian_neumann(grid: BoxGrid, f: np.ndarray) -> np.ndarray:
    """Second-order Neumann Laplacian of a scalar or vector field.

    Boundary nodes use the mirror ghost, which gives ``2 (f[1] - f[0]) / h**2``
    at ``x = 0`` in 1D.  Data with non-zero normal derivative therefore
    produce an O(1/h) boundary value; that blow-up is intended and flags
    incompatible data.
    """
    f = _check_field(grid, f)
    out = second_difference(f, 0, grid.spacing[0])
    for a in range(1, grid.dims):
        out += second_difference(f, a, grid.spacing[a])
    return out


def central_difference(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Central first difference with mirror ghosts (zero at the boundary nodes)."""
    out = np.zeros_like(f)
    diff = _take(f, axis, slice(2, None)) - _take(f, axis, slice(None, -2))
    _put(out, axis, slice(1, -1), diff / (2.0 * h))
    return out


def gradient_neumann(grid: BoxGrid, f: np.ndarray) -> list[np.ndarray]:
    """Per-axis central derivatives; the normal component vanishes on each boundary face."""
    f = _check_field(grid, f)
    return [central_difference(f, a, grid.spacing[a]) for a in range(grid.dims)]


def grad_norm_sq(grid: BoxGrid, f: np.ndarray) -> np.ndarray:
    """Nodewise ``|grad f|**2`` summed over axes and trailing components."""
    f = _check_field(grid, f)
    extra = tuple(range(grid.dims, f.ndim))
    return sum(np.sum(g * g, axis=extra) for g in gradient_neumann(grid, f))


def integrate(grid: BoxGrid, f: np.ndarray) -> float:
    """Composite trapezoid rule over the unit box."""
    f = _check_field(grid, f)
    if f.ndim != grid.dims:
        raise GridError("integrate expects a scalar field")
    return float(np.sum(grid.weights * f))


def boundary_normal_derivative(grid: BoxGrid, f: np.ndarray, order: int = 2) -> dict:
    """One-sided estimate of the outward normal derivative on every boundary face.

    Returns a dict keyed by ``(axis, side)`` with ``side`` 0 for the face at
    ``x_axis = 0`` and 1 for ``x_axis = 1``.  Each value has the field shape
    with ``axis`` removed.
    """
    f = _check_field(grid, f)
    if order not in _ONE_SIDED:
        raise ValueError(f"order must be one of {sorted(_ONE_SIDED)}")
    w = _ONE_SIDED[order]
    out = {}
    for a in range(grid.dims):
        if grid.shape[a] < len(w):
            raise GridError(f"order-{order} stencil needs {len(w)} nodes on axis {a}")
        h = grid.spacing[a]
        low = sum(c * _take(f, a, i) for i, c in enumerate(w)) / h
        high = sum(c * _take(f, a, -1 - i) for i, c in enumerate(w)) / h
        # the stencils estimate d/dx at x=0 and -d/dx at x=1; outward is -x on the low face
        out[(a, 0)] = -low
        out[(a, 1)] = -high
    return out


def partial_derivative(grid: BoxGrid, f: np.ndarray, axis: int, order: int,
                       cap: int = MAX_DERIVATIVE_ORDER) -> np.ndarray:
    """``order``-th derivative along ``axis`` of the even (mirror) extension of ``f``.

    Pairs of derivatives use the compact second difference, an odd remainder
    the central first difference.  Odd derivatives therefore vanish on the
    boundary nodes.
    """
    f = _check_field(grid, f)
    if order < 0 or order > cap:
        raise ValueError(f"derivative order {order} outside [0, {cap}]")
    if order == 0:
        return f.copy()
    n, h = grid.shape[axis], grid.spacing[axis]
    width = order // 2 + order % 2
    if width >= n:
        raise GridError(f"axis {axis} too short for a derivative of order {order}")
    g = _mirror_pad(f, axis, width)
    for _ in range(order // 2):
        g = (_take(g, axis, slice(2, None)) - 2.0 * _take(g, axis, slice(1, -1))
             + _take(g, axis, slice(None, -2))) / h**2
    if order % 2:
        g = (_take(g, axis, slice(2, None)) - _take(g, axis, slice(None, -2))) / (2.0 * h)
    return g
