import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sphereflow.compatibility import (ADMISSIBLE_FAMILIES, C0, InitialDataSpec, check_cc0, check_cc1_intrinsic,
                                      check_cc_strong, check_cc_tilde, compute_v1, compute_v2,
                                      covariant_ladder, generate_initial_data, graded_tolerance,
                                      implication_check, random_admissible_spec, smooth_bump)
from sphereflow.geometry import SphereField, cross, llg_rhs, tension_field
from sphereflow.grid import BoxGrid, grad_norm_sq, laplacian_neumann

from conftest import geodesic, theta_field


def polar_field(n, theta):
    g = BoxGrid((n,))
    th = theta(g.axis_coords(0))
    return SphereField(g, np.stack([np.sin(th), 0 * th, np.cos(th)], axis=-1))


def cubic_bend(beta):
    # θ' vanishes at both ends but θ'''(0) = 6β and θ'''(1) = -6β
    return lambda x: 0.5 * np.cos(np.pi * x) + beta * x**3 * (1 - x) ** 3


def test_graded_tolerance():
    h = 0.01
    assert graded_tolerance(h, 0) == graded_tolerance(h, 1) == C0 * h**2
    assert graded_tolerance(h, 2) == pytest.approx(C0 * h)
    assert graded_tolerance(h, 3) == pytest.approx(C0)
    assert graded_tolerance(h, 4) == pytest.approx(C0 / h)


def test_smooth_bump():
    s = np.linspace(0, 1, 101)
    b = smooth_bump(s, 0.2)
    assert np.all(b[s <= 0.2] == 0) and np.all(b[s >= 0.8] == 0)
    assert b[50] == 1.0
    assert np.all((b >= 0) & (b <= 1))


def test_initial_data_spec_validation():
    with pytest.raises(ValueError):
        InitialDataSpec("helix")
    with pytest.raises(ValueError):
        InitialDataSpec(amplitudes=())
    with pytest.raises(ValueError):
        InitialDataSpec(amplitudes=(np.inf,))
    with pytest.raises(ValueError):
        InitialDataSpec(blend_width=0.5)
    assert InitialDataSpec(amplitudes=0.3).amplitudes == (0.3,)


@pytest.mark.parametrize("shape", [(65,), (33, 17), (17, 9, 9)])
@pytest.mark.parametrize("family", ADMISSIBLE_FAMILIES)
def test_generated_data_are_unit(shape, family):
    u = generate_initial_data(InitialDataSpec(family, (0.7, -0.2), 0.2, 0.5), BoxGrid(shape))
    assert u.sphere_violation() <= 1e-15


def test_constant_collar_residuals_vanish_exactly():
    u = generate_initial_data(InitialDataSpec("constant_near_boundary", (0.8, 0.3), 0.2, 0.7), BoxGrid((129,)))
    for report in (check_cc0(u), check_cc1_intrinsic(u), check_cc_strong(u, 2), check_cc_tilde(u, 2)):
        assert report.passed and report.max_residual() <= 1e-12


@pytest.mark.parametrize("n", [65, 129, 257])
def test_mirror_profile_passes_every_check(n):
    u = theta_field(n)
    for report in (check_cc0(u), check_cc1_intrinsic(u), check_cc_strong(u, 1), check_cc_strong(u, 2),
                   check_cc_tilde(u, 1), check_cc_tilde(u, 2)):
        assert report.passed, (report.condition, report.failed_levels)


def test_mirror_profile_residuals_converge():
    res = [check_cc_strong(theta_field(n), 1).max_residual(2) for n in (65, 129, 257)]
    assert np.log2(res[0] / res[1]) >= 1.8 and np.log2(res[1] / res[2]) >= 1.8


def test_geodesic_fails_at_level_zero():
    omega = 2.0
    u = geodesic(257, omega)
    cc0 = check_cc0(u)
    assert not cc0.passed and cc0.first_failure == 0
    # |∂x (cos ωx, sin ωx, 0)| = ω at both ends
    assert np.allclose(cc0.residuals[0], omega, rtol=1e-6)
    cc1 = check_cc1_intrinsic(u)
    assert not cc1.passed and "CC0 failed" in cc1.note
    assert check_cc_tilde(u, 1).first_failure == 0
    assert check_cc_strong(u, 1).first_failure == 0


@pytest.mark.parametrize("beta", [0.05, 0.2])
def test_cubic_bend_fails_first_order_conditions(beta):
    u = polar_field(257, cubic_bend(beta))
    assert check_cc0(u).passed
    cc1 = check_cc1_intrinsic(u)
    assert cc1.failed_levels == [1]
    assert cc1.max_residual(1) == pytest.approx(6 * beta, rel=0.02)
    assert check_cc_strong(u, 1).failed_levels == [2]
    tilde = check_cc_tilde(u, 1)
    assert tilde.failed_levels == [1]
    assert tilde.max_residual(1) == pytest.approx(6 * beta, rel=0.02)
    assert implication_check(u, 1).holds


def test_quadratic_perturbation_fails_at_levels_zero_and_two():
    u = polar_field(257, lambda x: np.cos(np.pi * x) + 0.1 * x**2)
    assert check_cc_strong(u, 1).failed_levels == [0, 2]


def test_literal_reading_also_rejects_nonzero_even_normal_derivatives():
    u = theta_field(129)
    assert check_cc_strong(u, 1).passed
    literal = check_cc_strong(u, 1, all_partials=True)
    assert not literal.passed and literal.first_failure == 1


def test_strong_checks_in_two_dimensions():
    g = BoxGrid((65, 65))
    x, y = g.coords()
    th = 0.5 * np.cos(np.pi * x) * np.cos(np.pi * y)
    u = SphereField(g, np.stack([np.sin(th), 0 * th, np.cos(th)], axis=-1))
    assert check_cc0(u).passed and check_cc1_intrinsic(u).passed and check_cc_strong(u, 1).passed
    th = th + 0.3 * x**3 * (1 - x) ** 3
    u = SphereField(g, np.stack([np.sin(th), 0 * th, np.cos(th)], axis=-1))
    assert check_cc0(u).passed and not check_cc_strong(u, 1).passed
    with pytest.raises(ValueError):
        check_cc_tilde(u, 1)


def test_derivative_cap():
    with pytest.raises(ValueError):
        check_cc_strong(theta_field(65), 3)
    with pytest.raises(ValueError):
        check_cc_tilde(theta_field(65), 3)


def test_covariant_ladder_first_levels():
    u = theta_field(257, 1.0)
    x = u.grid.axis_coords(0)
    ladder = covariant_ladder(u, 3)
    assert [len(level) for level in ladder] == [255, 253, 251]
    th1 = -np.pi * np.sin(np.pi * x)
    th2 = -np.pi**2 * np.cos(np.pi * x)
    e = np.stack([np.cos(np.cos(np.pi * x)), 0 * x, -np.sin(np.cos(np.pi * x))], axis=-1)
    assert np.max(np.abs(ladder[0] - (th1[:, None] * e)[1:-1])) <= 1e-3
    # second level is the projection of u_xx, i.e. θ'' e
    assert np.max(np.abs(ladder[1] - (th2[:, None] * e)[2:-2])) <= 1e-3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1, 2]))
def test_admissible_random_data_pass(seed, k):
    spec = random_admissible_spec(np.random.default_rng(seed))
    assert spec.family in ADMISSIBLE_FAMILIES
    u = generate_initial_data(spec, BoxGrid((257,)))
    assert check_cc0(u).passed
    assert check_cc1_intrinsic(u).passed
    assert implication_check(u, k).holds


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1, 1), st.sampled_from([1, 2]))
def test_implication_on_perturbed_data(seed, beta, k):
    spec = random_admissible_spec(np.random.default_rng(seed), "mirror_symmetric_profile")
    g = BoxGrid((129,))
    x = g.axis_coords(0)
    th = sum(a * np.cos(n * np.pi * x) for n, a in enumerate(spec.amplitudes, 1)) + beta * x**3 * (1 - x) ** 3
    assert implication_check(SphereField(g, np.stack([np.sin(th), 0 * th, np.cos(th)], -1)), k).holds


def extrinsic_rhs(grid, v, eps):
    lap = laplacian_neumann(grid, v)
    return cross(v, lap) + eps * (lap + grad_norm_sq(grid, v)[..., None] * v)


@pytest.mark.parametrize("eps", [0.0, 0.3])
def test_v1_v2_against_directional_derivative(eps):
    u = theta_field(65, 1.0)
    v1 = compute_v1(u, eps)
    assert np.array_equal(v1, llg_rhs(u, eps))
    # the projection changes τ by O(h²) only
    assert np.max(np.abs(v1 - extrinsic_rhs(u.grid, u.values, eps))) <= 1e-2
    assert np.array_equal(compute_v1(u, 0.0), cross(u.values, laplacian_neumann(u.grid, u.values)))
    if eps:
        assert np.allclose(v1 - compute_v1(u, 0.0), eps * tension_field(u), atol=1e-8)
    d = 1e-5
    fd = (extrinsic_rhs(u.grid, u.values + d * v1, eps) - extrinsic_rhs(u.grid, u.values - d * v1, eps)) / (2 * d)
    assert np.max(np.abs(compute_v2(u, eps) - fd)) <= 1e-6 * np.max(np.abs(fd))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_tilde_residuals_converge_for_mirror_data(seed):
    spec = random_admissible_spec(np.random.default_rng(seed), "mirror_symmetric_profile")
    reports = [check_cc_tilde(generate_initial_data(spec, BoxGrid((n,))), 2) for n in (33, 65, 129)]
    for j in range(3):
        res = [r.max_residual(j) for r in reports]
        # large random amplitudes are pre-asymptotic on 33 nodes, so the rate
        # is read off the finest pair
        assert res[0] > res[1] > res[2], (j, res)
        assert np.log2(res[1] / res[2]) >= 1.5, (j, res)


def test_constant_field_passes_every_check():
    for shape in ((33,), (17, 17)):
        u = SphereField(BoxGrid(shape), np.broadcast_to([0.0, 0.6, 0.8], shape + (3,)).copy())
        reports = [check_cc0(u), check_cc1_intrinsic(u), check_cc_strong(u, 1), check_cc_strong(u, 2)]
        if len(shape) == 1:
            reports += [check_cc_tilde(u, 0), check_cc_tilde(u, 2)]
        assert all(r.passed and r.max_residual() <= 1e-12 for r in reports)
        assert np.all(compute_v1(u, 0.3) == 0) and np.all(compute_v2(u, 0.3) == 0)


def test_linear_angle_fails_cc0_with_unit_residual():
    report = check_cc0(polar_field(129, lambda x: x))
    assert not report.passed
    assert report.max_residual() == pytest.approx(1.0, rel=1e-6)


def test_v1_affine_in_eps():
    u = theta_field(129, 0.8)
    v = {e: compute_v1(u, e) for e in (0.0, 0.5, 1.0)}
    tau = tension_field(u)
    assert np.allclose(v[0.5] - v[0.0], 0.5 * tau, atol=1e-12)
    assert np.allclose(v[1.0] - v[0.5], 0.5 * tau, atol=1e-12)


def test_v1_of_geodesic_vanishes_inside():
    for n in (129, 257):
        v1 = compute_v1(geodesic(n, 2.0), 0.3)
        assert np.max(np.abs(v1[1:-1])) <= 20 * (1 / (n - 1)) ** 2


def normal_derivative_v2(u, eps):
    from sphereflow.grid import boundary_normal_derivative
    faces = boundary_normal_derivative(u.grid, compute_v2(u, eps), order=2)
    return max(float(np.max(np.abs(f))) for f in faces.values())


def test_v2_boundary_derivative():
    collar = generate_initial_data(InitialDataSpec("constant_near_boundary", (0.9,), 0.2, 0.4), BoxGrid((129,)))
    assert normal_derivative_v2(collar, 0.3) <= 1e-10
    res = [normal_derivative_v2(theta_field(n), 0.0) for n in (65, 129, 257)]
    assert np.log2(res[0] / res[1]) >= 1.8 and np.log2(res[1] / res[2]) >= 1.8


def test_cc1_verdict_takes_no_damping_parameter():
    import inspect
    assert "eps" not in inspect.signature(check_cc1_intrinsic).parameters


def test_generator_examples():
    g = BoxGrid((65,))
    flat = generate_initial_data(InitialDataSpec(amplitudes=(0.0,)), g)
    assert np.array_equal(flat.values, np.broadcast_to([0.0, 0.0, 1.0], (65, 3)))
    assert np.array_equal(generate_initial_data(InitialDataSpec(amplitudes=(0.5,)), g).values, theta_field(65).values)
    collar = generate_initial_data(InitialDataSpec("constant_near_boundary", (1.0,), 0.2), BoxGrid((129,)))
    assert check_cc_strong(collar, 2).passed


def test_implication_on_reference_families():
    collar = generate_initial_data(InitialDataSpec("constant_near_boundary", (1.0,), 0.2), BoxGrid((129,)))
    for u in (collar, theta_field(129)):
        rep = implication_check(u, 2)
        assert rep.strong.passed and rep.tilde.passed and rep.holds
