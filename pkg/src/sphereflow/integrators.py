"""Time stepping for ∂t u = eps τ(u) + u × Δu on the sphere.

Two schemes are provided:

* ``rk4_projected``: classical explicit RK4 followed by nodewise
  renormalisation.  Subject to the ``dt <= cfl_constant * h**2`` limit.
* ``implicit_midpoint``: ``u+ = u + dt F((u + u+)/2)``.  At ``eps = 0`` the
  increment is ``dt m × Δm`` with ``m`` the midpoint, so ``|u+| = |u|``
  nodewise up to the nonlinear-solver tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import SPHERE_TOL, SphereField, cross, dot, normalize
from .grid import BoxGrid, laplacian_neumann

log = logging.getLogger(__name__)

SCHEMES = ("rk4_projected", "implicit_midpoint")
SOLVERS = ("newton", "fixed_point")


class IntegrationError(RuntimeError):
    """Base class for time-stepping failures."""


class IntegrationBlowup(IntegrationError):
    def __init__(self, t: float, max_increment: float):
        super().__init__(f"non-finite state at t={t:.6g} (max |Δu| = {max_increment:.3e})")
        self.t = t
        self.max_increment = max_increment


class StepFailure(IntegrationError):
    def __init__(self, t: float, iters: int, residual: float):
        super().__init__(
            f"midpoint solve did not converge at t={t:.6g} after {iters} iterations "
            f"(residual {residual:.3e}); try a smaller dt")
        self.t = t
        self.iters = iters
        self.residual = residual


class CFLError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    eps: float = 0.0
    scheme: str = "implicit_midpoint"
    dt: float = 1e-4
    fp_tol: float = 1e-12
    fp_max_iters: int = 200
    renormalize_each_step: Optional[bool] = None
    renormalize_stages: bool = False
    cfl_constant: float = 0.25
    override_cfl: bool = False
    solver: str = "newton"

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0,1]")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.dt == 0 or not np.isfinite(self.dt):
            raise ValueError("dt must be finite and non-zero")
        if self.fp_tol <= 0 or self.fp_max_iters < 1:
            raise ValueError("fp_tol must be > 0 and fp_max_iters >= 1")

    @property
    def renormalize(self) -> bool:
        if self.renormalize_each_step is not None:
            return self.renormalize_each_step
        return not (self.scheme == "implicit_midpoint" and self.eps == 0.0)

    def check_cfl(self, grid: BoxGrid) -> None:
        """Enforce ``|dt| <= cfl_constant * h**2`` for the explicit scheme."""
        if self.scheme != "rk4_projected" or self.override_cfl:
            return
        limit = self.cfl_constant * min(grid.spacing) ** 2
        if abs(self.dt) > limit:
            raise CFLError(
                f"dt <= cfl_constant * h^2 violated: dt={abs(self.dt):.3e} > {limit:.3e} "
                f"(set override_cfl to bypass)")


@dataclass
class FlowState:
    t: float
    u: SphereField
    step_count: int = 0
    iterations: int = 0


def flow_field(grid: BoxGrid, v: np.ndarray, eps: float) -> np.ndarray:
    """Array kernel of the right-hand side, valid off the sphere as well.

    The damping term is ``Δv - <v, Δv> v / |v|**2``, which equals the
    projected tension field on unit fields and keeps ``<v, F(v)> = 0``
    identically.
    """
    lap = laplacian_neumann(grid, v)
    rhs = cross(v, lap)
    if eps:
        rhs += eps * (lap - (dot(v, lap) / dot(v, v))[..., None] * v)
    return rhs


def _finite_or_raise(v: np.ndarray, ref: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(v)):
        with np.errstate(invalid="ignore"):
            inc = np.nanmax(np.abs(v - ref)) if np.any(np.isfinite(v - ref)) else np.inf
        raise IntegrationBlowup(t, float(inc))


def step_rk4_projected(state: FlowState, params: FlowParams) -> FlowState:
    grid = state.u.grid
    params.check_cfl(grid)
    dt, eps = params.dt, params.eps
    u = state.u.values
    renorm_stage = normalize if params.renormalize_stages else (lambda x: x)

    k1 = flow_field(grid, u, eps)
    k2 = flow_field(grid, renorm_stage(u + 0.5 * dt * k1), eps)
    k3 = flow_field(grid, renorm_stage(u + 0.5 * dt * k2), eps)
    k4 = flow_field(grid, renorm_stage(u + dt * k3), eps)
    new = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _finite_or_raise(new, u, state.t)
    if params.renormalize:
        new = normalize(new)
    return FlowState(state.t + dt, SphereField(grid, new), state.step_count + 1, 4)


def _cross_blocks(a: np.ndarray) -> np.ndarray:
    """Stack of 3x3 matrices ``[a]_x`` with ``[a]_x b = a × b``."""
    z = np.zeros(a.shape[0])
    a0, a1, a2 = a[:, 0], a[:, 1], a[:, 2]
    return np.stack([np.stack([z, -a2, a1], -1),
                     np.stack([a2, z, -a0], -1),
                     np.stack([-a1, a0, z], -1)], 1)


def _block_diag(blocks: np.ndarray) -> sp.bsr_matrix:
    n = blocks.shape[0]
    return sp.bsr_matrix((blocks, np.arange(n), np.arange(n + 1)), shape=(3 * n, 3 * n))


class MidpointSolver:
    """Nonlinear solver for the implicit midpoint stage equation on one grid.

    The unknown is the midpoint ``m`` in ``m - u - (dt/2) F(m) = 0``.  The
    Newton variant keeps the last LU factorisation and reuses it while it
    still contracts (a chord iteration), refactoring at the current iterate
    otherwise.
    """

    def __init__(self, grid: BoxGrid):
        self.grid = grid
        self.lap3 = sp.kron(grid.laplacian_matrix, sp.identity(3), format="bsr")
        self._lu = None
        self._lu_key = None
        self._last_increment = None

    def reset(self):
        self._lu = None
        self._last_increment = None

    def _jacobian(self, m: np.ndarray, eps: float, dt: float):
        m2 = m.reshape(-1, 3)
        lap = (self.lap3 @ m2.ravel()).reshape(-1, 3)
        near = -_cross_blocks(lap)
        far = _cross_blocks(m2)
        if eps:
            eye = np.broadcast_to(np.eye(3), far.shape)
            near = near - eps * (np.einsum("ni,nj->nij", m2, lap)
                                 + dot(m2, lap)[:, None, None] * eye)
            far = far + eps * (eye - np.einsum("ni,nj->nij", m2, m2))
        dF = _block_diag(near) + _block_diag(far) @ self.lap3
        jac = sp.identity(m2.size, format="csc") - (0.5 * dt) * dF.tocsc()
        return splu(jac.tocsc())

    def solve(self, u: np.ndarray, params: FlowParams, t: float = 0.0) -> tuple[np.ndarray, int]:
        grid, eps, dt, tol = self.grid, params.eps, params.dt, params.fp_tol
        half = 0.5 * dt

        def residual(m):
            # a diverging iterate overflows; that is reported as StepFailure below
            with np.errstate(over="ignore", invalid="ignore"):
                return m - u - half * flow_field(grid, m, eps)

        def r_fixed(m):
            with np.errstate(over="ignore", invalid="ignore"):
                return half * flow_field(grid, m, eps)

        m = u.copy()
        if self._last_increment is not None and self._last_increment.shape == u.shape:
            m += 0.5 * self._last_increment
        r = residual(m)
        rnorm = float(np.max(np.abs(r)))
        if rnorm > tol:
            m = u.copy()
            r = residual(m)
            rnorm = float(np.max(np.abs(r)))
        iters = 1
        key = (eps, dt)
        if self._lu_key != key:
            self._lu = None
        while rnorm > tol:
            if iters >= params.fp_max_iters:
                raise StepFailure(t, iters, rnorm)
            if params.solver == "fixed_point":
                m_new = u + r_fixed(m)
            else:
                if self._lu is None:
                    self._lu = self._jacobian(m, eps, dt)
                    self._lu_key = key
                delta = self._lu.solve(r.ravel()).reshape(u.shape)
                m_new = m - delta
            r_new = residual(m_new)
            rn_new = float(np.max(np.abs(r_new)))
            iters += 1
            if not np.isfinite(rn_new):
                raise StepFailure(t, iters, rn_new)
            if params.solver == "newton" and rn_new > 0.25 * rnorm and rn_new > tol:
                # stale factorisation: refresh at the better of the two iterates
                if rn_new < rnorm:
                    m, r, rnorm = m_new, r_new, rn_new
                self._lu = self._jacobian(m, eps, dt)
                self._lu_key = key
                continue
            m, r, rnorm = m_new, r_new, rn_new
        new = 2.0 * m - u
        self._last_increment = new - u
        return new, iters


def step_implicit_midpoint(state: FlowState, params: FlowParams,
                           solver: Optional[MidpointSolver] = None) -> FlowState:
    grid = state.u.grid
    params.check_cfl(grid)
    if solver is None or solver.grid != grid:
        solver = MidpointSolver(grid)
    u = state.u.values
    new, iters = solver.solve(u, params, state.t)
    _finite_or_raise(new, u, state.t)
    if params.renormalize:
        new = normalize(new)
    return FlowState(state.t + params.dt, SphereField(grid, new), state.step_count + 1, iters)


@dataclass
class Trajectory:
    """Sampled states and invariant records; ``failure`` is set when a step failed."""

    states: list = field(default_factory=list)
    records: list = field(default_factory=list)
    failure: Optional[str] = None

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(zip(self.states, self.records))

    @property
    def final(self) -> Optional[FlowState]:
        return self.states[-1] if self.states else None

    @property
    def ok(self) -> bool:
        return self.failure is None


def advance(state: FlowState, params: FlowParams, t_final: float, monitor_stride: int = 1,
            monitor: Optional[Callable] = None, sphere_tol: float = SPHERE_TOL) -> Trajectory:
    """Step from ``state.t`` to exactly ``t_final``, recording every ``monitor_stride`` steps.

    The initial state and the final state are always recorded.  The last
    step is shortened so the final time is hit exactly.  Renormalised steps
    must land within ``sphere_tol`` of the sphere; unrenormalised midpoint
    steps must change no nodal norm by more than ``10 * fp_tol``.  A failing step ends
    the run; the trajectory recorded so far is returned with ``failure``
    set.
    """
    from .invariants import InvariantMonitor

    if monitor_stride < 1:
        raise ValueError("monitor_stride must be >= 1")
    traj = Trajectory()
    if t_final <= state.t:
        if t_final < state.t:
            raise ValueError("t_final must not precede the current time")
        return traj
    params.check_cfl(state.u.grid)
    if monitor is None:
        monitor = InvariantMonitor(params.eps)
    solver = MidpointSolver(state.u.grid)
    step = step_rk4_projected if params.scheme == "rk4_projected" else None

    traj.states.append(state)
    traj.records.append(monitor(state))
    n_steps = int(np.ceil((t_final - state.t) / params.dt - 1e-9))
    for i in range(n_steps):
        remaining = t_final - state.t
        p = params if i < n_steps - 1 else replace(params, dt=remaining, override_cfl=True)
        try:
            prev = state
            if step is None:
                state = step_implicit_midpoint(state, p, solver)
            else:
                state = step(state, p)
            if p.renormalize:
                viol = state.u.sphere_violation()
                if viol > sphere_tol:
                    raise IntegrationError(
                        f"sphere constraint violated at t={state.t:.6g}: {viol:.3e} > {sphere_tol:.1e}")
            else:
                # without renormalisation only the per-step norm change is controlled
                change = float(np.max(np.abs(np.linalg.norm(state.u.values, axis=-1)
                                             - np.linalg.norm(prev.u.values, axis=-1))))
                if change > 10.0 * p.fp_tol:
                    raise IntegrationError(
                        f"nodewise norm changed by {change:.3e} > 10*fp_tol at t={state.t:.6g}")
        except IntegrationError as exc:
            log.warning("integration stopped: %s", exc)
            traj.failure = str(exc)
            return traj
        if i == n_steps - 1:
            state.t = t_final
        if (i + 1) % monitor_stride == 0 or i == n_steps - 1:
            traj.states.append(state)
            traj.records.append(monitor(state))
    return traj
