import math

import numpy as np
import pytest

from moverfv import (
    BlowUpError,
    EdgeFluxFunction,
    FluxModel,
    SolverConfig,
    build_icosphere,
    cfl_dt,
    edge_flux_function,
    eo_split,
    identity,
    init_cell_averages,
    numerical_flux_eo,
    numerical_flux_llf,
    projected_burgers,
    rotation_linear,
    shrinking_sphere,
    snapshot,
    sphere_normal,
)
from moverfv import exact_tp1_points, run, step
from moverfv.mesh import EdgeGeometry

TWO_PI = 2.0 * math.pi


def constant_direction_flux(a, u_power=1):
    """f(x,t,u) = u**p * a for a fixed ambient vector a (test helper)."""
    a = np.asarray(a, float)

    def _eval(p, t, u):
        uu = np.asarray(u, float)
        return uu[..., None] ** u_power * np.broadcast_to(
            a, np.broadcast_shapes(np.shape(p)[:-1], uu.shape) + (3,)
        )

    def _eval_du(p, t, u):
        uu = np.asarray(u, float)
        return (u_power * uu[..., None] ** (u_power - 1)) * np.broadcast_to(
            a, np.broadcast_shapes(np.shape(p)[:-1], uu.shape) + (3,)
        )

    return FluxModel(kind="custom", surface_normal=sphere_normal, eval=_eval,
                     eval_du=_eval_du,
                     lipschitz_bound=lambda lo, hi, ti=(0, 0): float(np.linalg.norm(a)),
                     u_power=u_power)


def zero_flux():
    zeros = lambda p, t, u: np.zeros(np.broadcast_shapes(np.shape(p)[:-1], np.shape(u)) + (3,))
    return FluxModel(kind="custom", surface_normal=sphere_normal, eval=zeros,
                     eval_du=zeros, lipschitz_bound=lambda a, b, ti=(0, 0): 0.0, u_power=1)


def unit_edge():
    return EdgeGeometry(length=1.0, conormal=np.array([0.0, -1.0, 0.0]),
                        midpoint=np.array([0.5, 0.0, 0.0]),
                        p_a=np.array([0.0, 0.0, 0.0]), p_b=np.array([1.0, 0.0, 0.0]))


# --- edge flux functions -----------------------------------------------------

def test_edge_flux_zero_model():
    c = edge_flux_function(zero_flux(), unit_edge(), 0.0)
    for u in (-2.0, 0.0, 3.5):
        assert c.value(u) == 0.0


def test_edge_flux_constant_field_exact():
    a = np.array([0.4, -1.1, 0.2])
    geom = unit_edge()
    for quad in ("midpoint", "gauss2"):
        c = edge_flux_function(constant_direction_flux(a), geom, 0.0, quadrature=quad)
        assert c.kind == "linear"
        assert c.value(2.5) == pytest.approx(2.5 * geom.length * (a @ geom.conormal), rel=1e-15)


def test_edge_flux_rotation_slope_by_hand():
    # chord from (1,0,0) to (0,1,0) on the unit sphere, opposite vertex north pole
    from moverfv.mesh import edge_geometry

    pa, pb, popp = np.array([1.0, 0, 0]), np.array([0.0, 1.0, 0]), np.array([0.0, 0, 1.0])
    length, conormal, midpoint = edge_geometry(pa, pb, popp)
    geom = EdgeGeometry(length, conormal, midpoint, pa, pb)
    c = edge_flux_function(rotation_linear(), geom, 0.0)
    mhat = midpoint / np.linalg.norm(midpoint)
    v = np.array([-mhat[1], mhat[0], 0.0])
    expected_slope = TWO_PI * length * (v @ conormal)
    assert c.kind == "linear"
    assert c.coeff == pytest.approx(expected_slope, rel=1e-14)
    assert c.value(1.5) - c.value(0.5) == pytest.approx(expected_slope, rel=1e-12)


def test_gauss2_integrates_quadratic_variation_exactly():
    # f = u * (x1**2) * a varies quadratically along the edge
    a = np.array([0.0, -1.0, 0.0])

    def _eval(p, t, u):
        p = np.asarray(p, float)
        return np.asarray(u, float)[..., None] * p[..., 0:1] ** 2 * a

    model = FluxModel(kind="custom", surface_normal=sphere_normal, eval=_eval,
                      eval_du=lambda p, t, u: _eval(p, t, np.ones_like(np.asarray(u, float))),
                      lipschitz_bound=lambda lo, hi, ti=(0, 0): 1.0, u_power=1)
    geom = unit_edge()  # x1 runs 0..1 along the edge; integral of x1^2 is 1/3
    c2 = edge_flux_function(model, geom, 0.0, quadrature="gauss2")
    assert c2.coeff == pytest.approx((a @ geom.conormal) / 3.0, rel=1e-14)
    c1 = edge_flux_function(model, geom, 0.0, quadrature="midpoint")
    assert c1.coeff == pytest.approx((a @ geom.conormal) / 4.0, rel=1e-14)  # midpoint: (1/2)^2


# --- monotone splitting ------------------------------------------------------

def test_eo_split_linear_positive():
    c = EdgeFluxFunction("linear", c0=0.0, coeff=2.0)
    for u in (-1.0, 0.0, 2.0):
        plus, minus = eo_split(c, u)
        assert plus == 2.0 * u
        assert minus == 0.0
    assert numerical_flux_eo(c, 1.3, -5.0) == pytest.approx(2.6)


def test_eo_split_linear_negative_is_downwind():
    c = EdgeFluxFunction("linear", c0=0.7, coeff=-3.0)
    assert numerical_flux_eo(c, 2.0, 1.5) == pytest.approx(0.7 - 3.0 * 1.5)


def test_eo_split_quadratic_example():
    c = EdgeFluxFunction("quadratic", c0=0.0, coeff=1.0)
    assert numerical_flux_eo(c, 1.0, -1.0) == pytest.approx(2.0)
    plus, minus = eo_split(c, -1.5)
    assert plus == 0.0
    assert minus == 1.5**2


def test_eo_split_quadratic_negative_coefficient_mirrors():
    c = EdgeFluxFunction("quadratic", c0=0.0, coeff=-2.0)
    plus, minus = eo_split(c, 1.2)
    assert plus == 0.0  # slope -4u < 0 for u > 0
    assert minus == -2.0 * 1.2**2
    plus, minus = eo_split(c, -1.2)
    assert plus == -2.0 * 1.2**2
    assert minus == 0.0


def test_eo_split_at_zero_recovers_c0():
    for c in (EdgeFluxFunction("linear", c0=0.4, coeff=-2.0),
              EdgeFluxFunction("quadratic", c0=-0.3, coeff=5.0),
              EdgeFluxFunction("generic", c0=math.sin(1.0) - 1.0,
                               func=lambda u: math.sin(u + 1.0) - 1.0,
                               dfunc=lambda u: np.cos(u + 1.0))):
        plus, minus = eo_split(c, 0.0)
        assert plus + minus == pytest.approx(c.value(0.0), abs=1e-15)


def test_eo_generic_matches_analytic_quadratic():
    quad = EdgeFluxFunction("quadratic", c0=0.2, coeff=-1.3)
    gen = EdgeFluxFunction("generic", c0=0.2, func=lambda u: 0.2 - 1.3 * np.asarray(u) ** 2,
                           dfunc=lambda u: -2.6 * np.asarray(u))
    for u in (-2.0, -0.3, 0.0, 0.7, 1.9):
        pa, ma = eo_split(quad, u)
        pg, mg = eo_split(gen, u)
        assert pg == pytest.approx(pa, abs=1e-12)
        assert mg == pytest.approx(ma, abs=1e-12)


def test_eo_consistency_random():
    rng = np.random.default_rng(11)
    gen = EdgeFluxFunction("generic", c0=math.sin(0.0),
                           func=lambda u: np.sin(u) + 0.3 * np.asarray(u),
                           dfunc=lambda u: np.cos(u) + 0.3)
    for u in rng.uniform(-4.0, 4.0, size=100):
        assert numerical_flux_eo(gen, u, u) == pytest.approx(gen.value(u), abs=1e-10)


def test_eo_antisymmetry_exact_for_analytic_kinds():
    rng = np.random.default_rng(12)
    for _ in range(200):
        kind = rng.choice(["linear", "quadratic"])
        c = EdgeFluxFunction(kind, c0=float(rng.normal()), coeff=float(rng.normal()))
        cn = c.negated()
        u, v = rng.normal(size=2)
        assert numerical_flux_eo(cn, v, u) == -numerical_flux_eo(c, u, v)


def test_eo_monotonicity_random():
    rng = np.random.default_rng(13)
    for _ in range(10_000):
        kind = rng.choice(["linear", "quadratic"])
        c = EdgeFluxFunction(kind, c0=float(rng.normal()), coeff=float(rng.normal()))
        u, up, v = np.sort(rng.normal(size=3))[[0, 2, 1]]
        assert numerical_flux_eo(c, up, v) >= numerical_flux_eo(c, u, v) - 1e-14
        assert numerical_flux_eo(c, v, up) <= numerical_flux_eo(c, v, u) + 1e-14


def test_llf_properties():
    c = EdgeFluxFunction("quadratic", c0=0.0, coeff=0.8)
    for u in (-1.0, 0.5):
        assert numerical_flux_llf(c, u, u, 5.0) == pytest.approx(c.value(u))
    zero = EdgeFluxFunction("linear", c0=0.0, coeff=0.0)
    assert numerical_flux_llf(zero, 3.0, 1.0, 1.0) == pytest.approx(1.0)
    lin = EdgeFluxFunction("linear", c0=0.0, coeff=1.7)
    assert numerical_flux_llf(lin, 2.0, -1.0, 1.7) == pytest.approx(
        numerical_flux_eo(lin, 2.0, -1.0)
    )


# --- initialization ----------------------------------------------------------

def test_init_constant_data():
    snap = snapshot(build_icosphere(2), identity(), 0.0)
    state = init_cell_averages(lambda p: 3.0 + 0.0 * p[..., 0], snap)
    assert np.allclose(state.values, 3.0, rtol=1e-15)
    assert state.masses.sum() == pytest.approx(3.0 * snap.cell_measure.sum(), rel=1e-14)


def test_init_hemisphere_indicator():
    snap = snapshot(build_icosphere(3), identity(), 0.0)
    state = init_cell_averages(lambda p: np.where(p[..., 2] > 0, 1.0, 0.0), snap)
    tri_z = snap.vertices[snap.mesh.triangles][..., 2]
    inside = np.all(tri_z > 1e-9, axis=1)
    outside = np.all(tri_z < -1e-9, axis=1)
    assert np.all(state.values[inside] == 1.0)
    assert np.all(state.values[outside] == 0.0)


def test_init_linear_data_hits_barycenter():
    snap = snapshot(build_icosphere(2), identity(), 0.0)
    coeffs = np.array([0.3, -1.2, 0.9])
    state = init_cell_averages(lambda p: p @ coeffs + 0.5, snap)
    assert np.allclose(state.values, snap.barycenter @ coeffs + 0.5, rtol=1e-13, atol=1e-14)


# --- CFL ---------------------------------------------------------------------

def test_solver_config_validation():
    from moverfv import ConfigurationError

    with pytest.raises(ConfigurationError):
        SolverConfig(t_end=1.0, cfl_number=0.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(t_end=1.0, cfl_number=1.5)
    with pytest.raises(ConfigurationError):
        SolverConfig(t_end=-1.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(t_end=1.0, numerical_flux="upwindish")
    with pytest.raises(ConfigurationError):
        SolverConfig(t_end=1.0, quadrature="gauss9")


def test_cfl_zero_flux_returns_tau_max():
    snap = snapshot(build_icosphere(1), identity(), 0.0)
    state = init_cell_averages(lambda p: 1.0 + 0.0 * p[..., 0], snap)
    cfg = SolverConfig(t_end=1.0, tau_max=0.125)
    assert cfl_dt(state, snap, zero_flux(), cfg) == 0.125
    # the remaining time to t_end caps the step as well
    assert cfl_dt(state, snap, zero_flux(), SolverConfig(t_end=0.05, tau_max=0.125)) == 0.05


def test_cfl_halves_with_mesh_size():
    cfg = SolverConfig(t_end=1.0, tau_max=10.0)
    taus = []
    for level in (2, 3, 4):
        snap = snapshot(build_icosphere(level), identity(), 0.0)
        state = init_cell_averages(lambda p: 1.0 + 0.0 * p[..., 0], snap)
        taus.append(cfl_dt(state, snap, rotation_linear(), cfg))
    for a, b in zip(taus, taus[1:]):
        assert 1.8 < a / b < 2.2


def test_cfl_halves_when_value_range_doubles():
    snap = snapshot(build_icosphere(2), identity(), 0.0)
    cfg = SolverConfig(t_end=1.0, tau_max=10.0)
    model = projected_burgers()
    s1 = init_cell_averages(lambda p: np.where(p[..., 0] > 0, 1.0, 0.0), snap)
    s2 = init_cell_averages(lambda p: np.where(p[..., 0] > 0, 2.0, 0.0), snap)
    ratio = cfl_dt(s1, snap, model, cfg) / cfl_dt(s2, snap, model, cfg)
    assert ratio == pytest.approx(2.0, rel=1e-12)


# --- stepping ----------------------------------------------------------------

def test_step_zero_flux_identity_keeps_state():
    mesh = build_icosphere(2)
    snap0 = snapshot(mesh, identity(), 0.0)
    snap1 = snapshot(mesh, identity(), 0.1)
    state = init_cell_averages(lambda p: exact_tp1_points(p, 0.0), snap0)
    new = step(state, snap0, snap1, zero_flux(), 0.1, SolverConfig(t_end=1.0))
    assert np.array_equal(new.masses, state.masses)
    # values are re-derived as m/V, so equality holds to one rounding
    assert np.allclose(new.values, state.values, rtol=1e-15, atol=0.0)


def test_step_zero_flux_shrinking_rescales_exactly():
    mesh = build_icosphere(2)
    motion = shrinking_sphere()
    tau = 0.07
    snap0 = snapshot(mesh, motion, 0.0)
    snap1 = snapshot(mesh, motion, tau)
    state = init_cell_averages(lambda p: exact_tp1_points(p, 0.0), snap0)
    new = step(state, snap0, snap1, zero_flux(), tau, SolverConfig(t_end=1.0))
    nz = state.values != 0
    rel = np.abs(new.values[nz] / state.values[nz] - math.exp(2 * tau))
    assert np.max(rel) < 1e-12


def test_step_mass_drift_tiny():
    mesh = build_icosphere(3)
    motion = shrinking_sphere()
    snap0 = snapshot(mesh, motion, 0.0)
    state = init_cell_averages(lambda p: exact_tp1_points(p, 0.0), snap0)
    cfg = SolverConfig(t_end=1.0)
    tau = cfl_dt(state, snap0, rotation_linear(), cfg)
    snap1 = snapshot(mesh, motion, tau)
    new = step(state, snap0, snap1, rotation_linear(), tau, cfg)
    total0, total1 = state.masses.sum(), new.masses.sum()
    assert abs(total1 - total0) <= 1e-13 * abs(total0)


def test_step_matches_scalar_value_form():
    # independent assembly through the scalar edge-flux API, in value form
    mesh = build_icosphere(1)
    motion = shrinking_sphere()
    tau = 0.01
    snap0 = snapshot(mesh, motion, 0.0)
    snap1 = snapshot(mesh, motion, tau)
    state = init_cell_averages(lambda p: exact_tp1_points(p, 0.0), snap0)
    cfg = SolverConfig(t_end=1.0)

    for model in (rotation_linear(), projected_burgers()):
        new = step(state, snap0, snap1, model, tau, cfg)
        flux_sum = np.zeros(mesh.n_triangles)
        for (own, nbr), loc in zip(mesh.edge_tri, mesh.edge_local):
            c = edge_flux_function(model, snap0.edge(int(own), int(loc)), 0.0)
            g = numerical_flux_eo(c, state.values[own], state.values[nbr])
            flux_sum[own] += g
            flux_sum[nbr] -= g
        expected = (snap0.cell_measure * state.values - tau * flux_sum) / snap1.cell_measure
        assert np.max(np.abs(new.values - expected)) <= 1e-13 * max(1.0, np.abs(expected).max())


def test_step_gauss2_matches_scalar_assembly():
    # the vectorized two-point coefficients against the scalar edge API
    mesh = build_icosphere(1)
    motion = shrinking_sphere()
    tau = 0.01
    snap0 = snapshot(mesh, motion, 0.0)
    snap1 = snapshot(mesh, motion, tau)
    state = init_cell_averages(lambda p: exact_tp1_points(p, 0.0), snap0)
    cfg = SolverConfig(t_end=1.0, quadrature="gauss2")
    model = rotation_linear()
    new = step(state, snap0, snap1, model, tau, cfg)
    flux_sum = np.zeros(mesh.n_triangles)
    for (own, nbr), loc in zip(mesh.edge_tri, mesh.edge_local):
        c = edge_flux_function(model, snap0.edge(int(own), int(loc)), 0.0, quadrature="gauss2")
        g = numerical_flux_eo(c, state.values[own], state.values[nbr])
        flux_sum[own] += g
        flux_sum[nbr] -= g
    expected = (state.masses - tau * flux_sum) / snap1.cell_measure
    assert np.max(np.abs(new.values - expected)) <= 1e-13 * max(1.0, np.abs(expected).max())


def sine_saturation_flux():
    """Tangential field with non-monomial u-dependence (generic solver path)."""

    def _dir(p):
        p = np.asarray(p, float)
        n = np.linalg.norm(p, axis=-1, keepdims=True)
        xh = p / n
        return np.stack([-xh[..., 1], xh[..., 0], np.zeros_like(xh[..., 0])], axis=-1)

    def _eval(p, t, u):
        return np.sin(np.asarray(u, float))[..., None] * _dir(p)

    def _eval_du(p, t, u):
        return np.cos(np.asarray(u, float))[..., None] * _dir(p)

    return FluxModel(kind="custom", surface_normal=sphere_normal, eval=_eval,
                     eval_du=_eval_du, lipschitz_bound=lambda lo, hi, ti=(0, 0): 1.0,
                     u_power=None)


def test_step_generic_model_matches_scalar_assembly_and_conserves():
    mesh = build_icosphere(1)
    motion = shrinking_sphere()
    snap0 = snapshot(mesh, motion, 0.0)
    state = init_cell_averages(lambda p: exact_tp1_points(p, 0.0), snap0)
    cfg = SolverConfig(t_end=1.0)
    model = sine_saturation_flux()
    tau = cfl_dt(state, snap0, model, cfg)
    assert 0.0 < tau <= cfg.tau_max
    snap1 = snapshot(mesh, motion, tau)
    new = step(state, snap0, snap1, model, tau, cfg)
    assert abs(new.masses.sum() - state.masses.sum()) <= 1e-13 * abs(state.masses.sum())
    flux_sum = np.zeros(mesh.n_triangles)
    for (own, nbr), loc in zip(mesh.edge_tri, mesh.edge_local):
        c = edge_flux_function(model, snap0.edge(int(own), int(loc)), 0.0)
        g = numerical_flux_eo(c, state.values[own], state.values[nbr])
        flux_sum[own] += g
        flux_sum[nbr] -= g
    expected = (state.masses - tau * flux_sum) / snap1.cell_measure
    assert np.max(np.abs(new.values - expected)) <= 1e-12
    # state consistency: masses track cell measures times values
    assert np.allclose(new.masses, snap1.cell_measure * new.values, rtol=1e-12)


def test_step_generic_model_llf_variant():
    mesh = build_icosphere(1)
    snap0 = snapshot(mesh, identity(), 0.0)
    snap1 = snapshot(mesh, identity(), 0.001)
    state = init_cell_averages(lambda p: exact_tp1_points(p, 0.0), snap0)
    cfg = SolverConfig(t_end=1.0, numerical_flux="local_lax_friedrichs")
    new = step(state, snap0, snap1, sine_saturation_flux(), 0.001, cfg)
    assert abs(new.masses.sum() - state.masses.sum()) <= 1e-13 * abs(state.masses.sum())
    assert np.all(np.isfinite(new.values))


def test_step_time_mismatch_rejected():
    from moverfv import ConfigurationError

    mesh = build_icosphere(1)
    snap0 = snapshot(mesh, identity(), 0.0)
    snap1 = snapshot(mesh, identity(), 0.2)
    state = init_cell_averages(lambda p: 1.0 + 0.0 * p[..., 0], snap0)
    with pytest.raises(ConfigurationError):
        step(state, snap0, snap1, zero_flux(), 0.1, SolverConfig(t_end=1.0))


def test_step_blowup_reports_cell():
    mesh = build_icosphere(1)
    snap0 = snapshot(mesh, identity(), 0.0)
    snap1 = snapshot(mesh, identity(), 0.1)
    state = init_cell_averages(lambda p: 1.0 + 0.0 * p[..., 0], snap0)
    nan = lambda p, t, u: np.full(np.broadcast_shapes(np.shape(p)[:-1], np.shape(u)) + (3,), np.nan)
    model = FluxModel(kind="custom", surface_normal=sphere_normal, eval=nan, eval_du=nan,
                      lipschitz_bound=lambda a, b, ti=(0, 0): 1.0, u_power=1)
    with pytest.raises(BlowUpError, match="step 1"):
        step(state, snap0, snap1, model, 0.1, SolverConfig(t_end=1.0))


# --- full runs ---------------------------------------------------------------

def test_run_zero_time_returns_initial_state_only():
    mesh = build_icosphere(1)
    traj, report = run(mesh, identity(), rotation_linear(),
                       lambda p: exact_tp1_points(p, 0.0), SolverConfig(t_end=0.0))
    assert len(traj) == 1
    assert report.steps == 0
    assert traj[0][1].time == 0.0


def test_run_tp1_conserves_mass():
    mesh = build_icosphere(2)
    traj, report = run(mesh, shrinking_sphere(), rotation_linear(),
                       lambda p: exact_tp1_points(p, 0.0),
                       SolverConfig(t_end=math.log(2.0)))
    assert report.mass_drift_rel <= 1e-10
    assert traj[-1][1].time == math.log(2.0)


def test_run_l1_error_decreases_under_refinement():
    from moverfv.validate import l1_error, radial_lift

    errs = []
    t_end = 0.25
    for level in (2, 3):
        mesh = build_icosphere(level)
        traj, _ = run(mesh, shrinking_sphere(), rotation_linear(),
                      lambda p: exact_tp1_points(p, 0.0), SolverConfig(t_end=t_end))
        snap, state = traj[-1]
        errs.append(l1_error(state, snap, exact_tp1_points, lift=radial_lift(math.exp(-t_end))))
    assert errs[1] < errs[0]


def test_run_local_max_principle_static_surface():
    mesh = build_icosphere(2)
    cfg = SolverConfig(t_end=0.2, validation_mode=True)
    traj, report = run(mesh, identity(), rotation_linear(),
                       lambda p: exact_tp1_points(p, 0.0), cfg)
    assert report.max_principle_violations == 0


def test_run_llf_and_gauss2_variants():
    mesh = build_icosphere(2)
    u0 = lambda p: exact_tp1_points(p, 0.0)
    for flux_kind, quad in (("local_lax_friedrichs", "midpoint"),
                            ("engquist_osher", "gauss2")):
        cfg = SolverConfig(t_end=0.1, numerical_flux=flux_kind, quadrature=quad)
        _, report = run(mesh, shrinking_sphere(), rotation_linear(), u0, cfg)
        assert report.mass_drift_rel <= 1e-10


def test_run_store_every_cadence():
    mesh = build_icosphere(1)
    cfg = SolverConfig(t_end=0.1, tau_max=0.01, store_every=3)
    traj, report = run(mesh, identity(), zero_flux(),
                       lambda p: 1.0 + 0.0 * p[..., 0], cfg)
    assert report.steps == 10
    indices = [state.step_index for _, state in traj]
    assert indices == [0, 3, 6, 9, 10]
