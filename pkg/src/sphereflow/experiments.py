"""Study drivers: vanishing-viscosity sweep, mesh convergence, long runs, perturbation growth."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .compatibility import InitialDataSpec, check_cc0, check_cc_tilde, generate_initial_data, smooth_bump
from .geometry import SphereField, normalize, project_tangent, tension_field
from .grid import BoxGrid, integrate
from .integrators import FlowParams, FlowState, Trajectory, advance
from .invariants import InvariantMonitor, relative_drift, sobolev_seminorm

log = logging.getLogger(__name__)

DEFAULT_EPS_LIST = (0.1, 0.05, 0.025, 0.0125, 0.0)
# twice the sup-ratio 0.4287 observed for theta = 0.5 cos(pi x), N=512, dt=2.5e-5, T=2
BOUND_CONSTANT = 0.8574


def l2_distance(a: SphereField, b: SphereField) -> float:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return float(np.sqrt(integrate(a.grid, np.sum((a.values - b.values) ** 2, axis=-1))))


def _run(u0: SphereField, params: FlowParams, t_final: float, stride: int, eps_monitor=None):
    monitor = InvariantMonitor(params.eps if eps_monitor is None else eps_monitor)
    return advance(FlowState(0.0, u0), params, t_final, stride, monitor)


@dataclass
class SweepPlan:
    eps_list: tuple = DEFAULT_EPS_LIST
    n: int = 256
    dims: int = 1
    t_final: float = 0.25
    params: FlowParams = field(default_factory=FlowParams)
    initial: InitialDataSpec = field(default_factory=InitialDataSpec)
    monitor_stride: int = 100

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if list(eps) != sorted(eps, reverse=True):
            raise ValueError("eps_list must be sorted in descending order")
        if 0.0 not in eps:
            raise ValueError("eps_list must contain 0 as the reference")
        self.eps_list = eps


@dataclass
class SweepResult:
    eps_list: tuple
    finals: dict
    distances: dict
    orders: list
    trajectories: dict
    failure: Optional[str] = None

    def monotone(self, slack: float = 0.05) -> bool:
        """Distances nonincreasing as eps decreases, within a relative slack."""
        d = [self.distances[e] for e in self.eps_list if e in self.distances]
        return all(b <= a * (1.0 + slack) + 1e-15 for a, b in zip(d, d[1:]))


def _sweep_member(args):
    u0, params, t_final, stride = args
    return _run(u0, params, t_final, stride)


def viscosity_sweep(plan: SweepPlan, max_workers: Optional[int] = None) -> SweepResult:
    """Run every eps on the same grid, time step and datum; measure L² distance to eps = 0 at T."""
    grid = BoxGrid.uniform(plan.n, plan.dims)
    u0 = generate_initial_data(plan.initial, grid)
    jobs = [(u0, replace(plan.params, eps=e), plan.t_final, plan.monitor_stride) for e in plan.eps_list]
    if max_workers and max_workers > 1:
        with ProcessPoolExecutor(max_workers) as pool:
            trajs = list(pool.map(_sweep_member, jobs))
    else:
        trajs = []
        for job in jobs:
            trajs.append(_sweep_member(job))
            if not trajs[-1].ok:
                break

    trajectories, finals, failure = {}, {}, None
    for e, tr in zip(plan.eps_list, trajs):
        trajectories[e] = tr
        if not tr.ok:
            failure = f"eps={e}: {tr.failure}"
            break
        finals[e] = tr.final.u
    distances = {}
    if 0.0 in finals:
        distances = {e: l2_distance(finals[e], finals[0.0]) for e in finals}
    positive = [e for e in plan.eps_list if e > 0 and e in distances]
    orders = []
    for a, b in zip(positive, positive[1:]):
        da, db = distances[a], distances[b]
        orders.append(float(np.log(da / db) / np.log(a / b)) if da > 0 and db > 0 else float("nan"))
    return SweepResult(plan.eps_list, finals, distances, orders, trajectories, failure)


@dataclass
class ConvergenceResult:
    n_list: tuple
    dts: list
    errors: list
    field_orders: list
    drifts: dict
    drift_orders: dict
    failure: Optional[str] = None


def _restrict(fine: SphereField, coarse_grid: BoxGrid) -> np.ndarray:
    step = [(nf - 1) // (nc - 1) for nf, nc in zip(fine.grid.shape, coarse_grid.shape)]
    return fine.values[tuple(slice(None, None, s) for s in step)]


def _order(a: float, b: float, ratio: float = 2.0) -> float:
    if not (a > 0 and b > 0):
        return float("nan")
    return float(np.log(a / b) / np.log(ratio))


def mesh_convergence(n_list: Sequence[int], initial: InitialDataSpec, t_final: float,
                     eps: float = 0.0, dt_ratio: float = 1.0, dims: int = 1,
                     scheme: str = "implicit_midpoint", monitor_stride: int = 10,
                     reference_n: Optional[int] = None) -> ConvergenceResult:
    """Pairwise Richardson orders of the final field and of the invariant drifts.

    ``dt = dt_ratio * h**2`` on every grid, so halving ``h`` quarters ``dt``.
    Grids must nest: ``n_{i+1} - 1 = 2**p (n_i - 1)``.  Without
    ``reference_n`` the field error of grid i is its distance to grid i+1
    on the coarse nodes; undefined orders (zero errors) are reported as NaN.
    """
    n_list = tuple(int(n) for n in n_list)
    all_n = n_list + ((reference_n,) if reference_n else ())
    for a, b in zip(all_n, all_n[1:]):
        if (b - 1) % (a - 1) or ((b - 1) // (a - 1)) & ((b - 1) // (a - 1) - 1):
            raise ValueError("grid sizes must nest dyadically: n_{i+1} - 1 = 2^p (n_i - 1)")
    finals, dts = [], []
    drifts = {"dirichlet_energy": [], "q_value": []}
    failure = None
    for n in all_n:
        grid = BoxGrid.uniform(n, dims)
        dt = dt_ratio * min(grid.spacing) ** 2
        params = FlowParams(eps=eps, scheme=scheme, dt=dt, override_cfl=True)
        tr = _run(generate_initial_data(initial, grid), params, t_final, monitor_stride)
        if not tr.ok:
            failure = f"n={n}: {tr.failure}"
            break
        dts.append(dt)
        finals.append(tr.final.u)
        if n in n_list:
            drifts["dirichlet_energy"].append(relative_drift([r.dirichlet_energy for r in tr.records]))
            if tr.records[0].q_value is not None:
                drifts["q_value"].append(relative_drift([r.q_value for r in tr.records]))
    if not drifts["q_value"]:
        drifts.pop("q_value")
    errors = []
    if failure is None:
        if reference_n:
            ref = finals[-1]
            for f in finals[:-1]:
                errors.append(l2_distance(f, SphereField(f.grid, _restrict(ref, f.grid))))
        else:
            for c, f in zip(finals, finals[1:]):
                errors.append(l2_distance(c, SphereField(c.grid, _restrict(f, c.grid))))
    ratios = [(b - 1) / (a - 1) for a, b in zip(n_list, n_list[1:])]
    field_orders = [_order(a, b, r) for a, b, r in zip(errors, errors[1:], ratios)]
    drift_orders = {k: [_order(a, b, r) for a, b, r in zip(v, v[1:], ratios)] for k, v in drifts.items()}
    return ConvergenceResult(n_list, dts, errors, field_orders, drifts, drift_orders, failure)


@dataclass
class LongRunResult:
    times: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray
    kinetic: np.ndarray
    bound: float
    sup_value: float
    flatness: float
    verdict: str
    failure: Optional[str] = None


def bound_terms(u0: SphereField) -> tuple[float, float]:
    """``(‖u0‖²_H1 + 1)³`` and ``∫|τ(u0)|²``, the two ingredients of the H² bound."""
    h1_sq = integrate(u0.grid, np.sum(u0.values**2, axis=-1)) + sobolev_seminorm(u0, 1).seminorm ** 2
    tau_sq = integrate(u0.grid, np.sum(tension_field(u0) ** 2, axis=-1))
    return (h1_sq + 1.0) ** 3, tau_sq


def global_existence_proxy(u0: SphereField, t_long: float = 10.0, record_stride: int = 100,
                           params: Optional[FlowParams] = None, constant: float = BOUND_CONSTANT,
                           flat_window: float = 1.0, require_compat: bool = True) -> LongRunResult:
    """Long undamped 1D run recording H¹, H², H³ seminorms and ``∫|u_t|²``.

    PASS iff the run completes and ``sup_t (∫|u_xx|² + ∫|u_t|²)`` stays
    below ``constant * (‖u0‖²_H1 + 1)³ + ∫|τ(u0)|²``.  ``flatness`` is the
    ratio of the overall H² maximum to its maximum over ``t <= flat_window``.
    """
    if u0.grid.dims != 1:
        raise ValueError("the long-run proxy is 1D only")
    params = params or FlowParams(eps=0.0, dt=1e-4)
    if params.eps != 0.0:
        raise ValueError("the long-run proxy runs the undamped flow (eps = 0)")
    if require_compat and not check_cc_tilde(u0, 2).passed:
        raise ValueError("initial data fail CC_tilde(2)")
    growth, tau_sq = bound_terms(u0)
    bound = constant * growth + tau_sq
    monitor = InvariantMonitor(0.0, with_kinetic=True)
    tr = advance(FlowState(0.0, u0), params, t_long, record_stride, monitor)
    rec = tr.records
    times = np.array([r.t for r in rec])
    h1, h2, h3 = (np.array([r.sobolev[k] for r in rec]) for k in (1, 2, 3))
    kinetic = np.array([r.kinetic for r in rec])
    sup_value = float(np.max(h2**2 + kinetic)) if len(rec) else 0.0
    early = h2[times <= flat_window]
    flatness = float(np.max(h2) / np.max(early)) if len(early) and np.max(early) > 0 else 1.0
    ok = tr.ok and np.all(np.isfinite(h2)) and sup_value <= bound
    return LongRunResult(times, h1, h2, h3, kinetic, bound, sup_value, flatness,
                         "PASS" if ok else "FAIL", tr.failure)


@dataclass
class StabilityReport:
    times: list
    ratios: list
    delta: float
    identical: bool
    cc0_passed: bool
    boundary_flux_max: float
    failure: Optional[str] = None


def perturb(u0: SphereField, delta: float, profile: str = "bump",
            direction=(1.0, 1.0, 0.0)) -> SphereField:
    """Add a tangent perturbation of L² size ``delta`` and renormalise.

    ``profile="bump"`` is supported away from the boundary and keeps the
    compatibility conditions; ``profile="ramp"`` grows linearly in ``x`` and
    breaks the Neumann condition.
    """
    grid = u0.grid
    x = grid.coords()
    if profile == "bump":
        shape = np.prod([smooth_bump(c, 0.2) for c in x], axis=0)
    elif profile == "ramp":
        shape = x[0]
    else:
        raise ValueError(f"unknown profile {profile!r}")
    v = project_tangent(u0.values, shape[..., None] * np.asarray(direction, dtype=float), tol=1e-6)
    norm = np.sqrt(integrate(grid, np.sum(v**2, axis=-1)))
    if delta == 0.0 or norm == 0.0:
        return u0.copy()
    return SphereField(grid, normalize(u0.values + (delta / norm) * v))


def perturbation_stability(u0: SphereField, delta: float, times: Sequence[float],
                           params: Optional[FlowParams] = None, profile: str = "bump") -> StabilityReport:
    """Amplification ``‖u(T; u0) - u(T; ũ0)‖ / ‖ũ0 - u0‖`` at each requested time."""
    params = params or FlowParams(eps=0.0, dt=1e-4)
    pert = perturb(u0, delta, profile)
    delta_eff = l2_distance(pert, u0)
    cc0 = check_cc0(pert)
    if not cc0.passed:
        warnings.warn(f"perturbed datum fails CC0 (residual {cc0.max_residual():.3e})", RuntimeWarning)
    identical = delta_eff == 0.0
    a, b = FlowState(0.0, u0), FlowState(0.0, pert)
    out_times, ratios, flux = [], [], 0.0
    for t in sorted(times):
        ta = advance(a, params, t, monitor_stride=10**9)
        tb = advance(b, params, t, monitor_stride=10**9, monitor=InvariantMonitor(params.eps))
        for tr in (ta, tb):
            if not tr.ok:
                return StabilityReport(out_times, ratios, delta_eff, identical, cc0.passed, flux, tr.failure)
        if len(ta):
            a, b = ta.final, tb.final
            flux = max(flux, max(r.boundary_flux_max for r in tb.records))
        dist = l2_distance(a.u, b.u)
        out_times.append(float(t))
        ratios.append(float("nan") if identical else dist / delta_eff)
    return StabilityReport(out_times, ratios, delta_eff, identical, cc0.passed, flux)
