import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipmlab.experiments import make_gaussian, random_smooth_field, stratified
from ipmlab.lagrangian import (
    FlowMap,
    InversionError,
    SplineInterpolator,
    Trajectory,
    compose,
    invert_flow_map,
    inversion_residual,
    psi_map,
    reconstruct_density,
    solve_flow,
    spectral_eval,
    trace_trajectory,
)
from ipmlab.spectral import Grid, RealField, sobolev_norm
from ipmlab.transport import SolverConfig, solution_map


def small_map(grid, seed, amp):
    rng = np.random.default_rng(seed)
    g1 = random_smooth_field(grid, rng, kmax=3).samples * amp
    g2 = random_smooth_field(grid, rng, kmax=3).samples * amp
    return FlowMap.from_arrays(grid, g1, g2)


def test_identity_map(grid32):
    phi = FlowMap.identity(grid32)
    assert phi.is_identity()
    assert np.all(phi.det() == 1.0)
    assert phi.lipschitz() == pytest.approx(1.0)
    assert invert_flow_map(phi) is phi


def test_translation_inverse(grid32):
    phi = FlowMap.translation(grid32, (0.3, -1.7))
    psi = invert_flow_map(phi)
    assert np.allclose(psi.displacement.c1.samples, -0.3)
    assert np.allclose(psi.displacement.c2.samples, 1.7)


@given(st.integers(0, 1000), st.floats(0.05, 0.6))
def test_inversion_reaches_tolerance(seed, amp):
    grid = Grid(32, 32, 32.0)
    phi = small_map(grid, seed, amp)
    psi = invert_flow_map(phi)
    assert inversion_residual(phi, psi) <= 1e-9


def test_folded_map_is_rejected(grid32):
    X1 = grid32.mesh[0]
    # a displacement slope below -1 folds the map
    g1 = -6.0 * np.sin(2 * np.pi * X1 / grid32.box_length)
    phi = FlowMap.from_arrays(grid32, g1, np.zeros(grid32.shape))
    assert phi.det().min() <= 0
    with pytest.raises(InversionError):
        invert_flow_map(phi)


def test_whole_cell_translation_composes_as_roll(grid32):
    f = random_smooth_field(grid32, np.random.default_rng(0))
    out = compose(f, FlowMap.translation(grid32, (2.0, 5.0)))
    assert np.allclose(out.samples, np.roll(f.samples, (-2, -5), axis=(0, 1)), atol=1e-13)


def test_spline_interpolation_is_accurate_on_smooth_fields(grid64):
    f = random_smooth_field(grid64, np.random.default_rng(1), kmax=3)
    rng = np.random.default_rng(2)
    x1, x2 = rng.uniform(0, 32, 50), rng.uniform(0, 32, 50)
    exact = spectral_eval(grid64, f.samples, x1, x2)
    approx = SplineInterpolator(grid64, f.samples)(x1, x2)
    assert np.abs(exact - approx).max() < 1e-4


def test_spectral_eval_reproduces_nodes(grid32):
    f = random_smooth_field(grid32, np.random.default_rng(3))
    X1, X2 = grid32.mesh
    vals = spectral_eval(grid32, f.samples, X1[::5, ::7].ravel(), X2[::5, ::7].ravel())
    assert np.allclose(vals, f.samples[::5, ::7].ravel(), atol=1e-12)


def test_stratified_flow_is_identity(grid32):
    sol = solve_flow(stratified(grid32), SolverConfig(dt=0.05))
    assert np.abs(sol.phi.displacement.c1.samples).max() == 0.0
    assert np.abs(sol.phi.displacement.c2.samples).max() == 0.0


def test_vertical_sine_flow_is_a_shear(grid32):
    L = grid32.box_length
    X1 = grid32.mesh[0]
    rho0 = RealField(grid32, np.sin(2 * np.pi * X1 / L))
    phi, v, _ = solve_flow(rho0, SolverConfig(dt=0.05))
    assert np.allclose(phi.displacement.c2.samples, -np.sin(2 * np.pi * X1 / L), atol=1e-12)
    assert np.allclose(phi.det(), 1.0, atol=1e-12)
    assert np.allclose(v.c2.samples, -np.sin(2 * np.pi * X1 / L), atol=1e-12)


def test_flow_preserves_volume_and_reconstructs_density(grid64, gauss64):
    cfg = SolverConfig(dt=0.02)
    sol = solve_flow(gauss64, cfg)
    assert np.abs(sol.phi.det() - 1.0).max() < 1e-3
    rho_l = reconstruct_density(gauss64, sol.phi)
    rho_e = solution_map(gauss64, 1.0, cfg)
    assert sobolev_norm(rho_l - rho_e) <= 1e-2 * sobolev_norm(rho_e)


def test_snapshots_are_taken_at_requested_steps(gauss64):
    sol = solve_flow(gauss64, SolverConfig(dt=0.1), snapshot_steps=[0, 3, 10])
    assert [round(s.t, 12) for s in sol.snapshots] == [0.0, 0.3, 1.0]


def test_psi_map_uses_unit_horizon(gauss64):
    phi = psi_map(gauss64, SolverConfig(dt=0.05, T=0.3))
    ref = solve_flow(gauss64, SolverConfig(dt=0.05, T=1.0)).phi
    assert np.array_equal(phi.displacement.c1.samples, ref.displacement.c1.samples)


@pytest.mark.parametrize("x0", [(3.0, 5.0), (10.5, 20.25), (29.0, 1.0)])
def test_sine_trajectory_closed_form(grid64, x0):
    L = grid64.box_length
    X1 = grid64.mesh[0]
    rho0 = RealField(grid64, np.sin(2 * np.pi * X1 / L))
    tr = trace_trajectory(x0, rho0, SolverConfig(dt=0.01))
    expect2 = x0[1] - tr.times * np.sin(2 * np.pi * x0[0] / L)
    assert np.abs(tr.positions[:, 0] - x0[0]).max() <= 1e-8
    assert np.abs(tr.positions[:, 1] - expect2).max() <= 1e-8


def test_trajectories_follow_the_flow_map(grid64, gauss64):
    cfg = SolverConfig(dt=0.02)
    phi = solve_flow(gauss64, cfg).phi
    X1, X2 = grid64.mesh
    x0 = (X1[28, 30], X2[28, 30])
    tr = trace_trajectory(x0, gauss64, cfg)
    end = tr.positions[-1]
    assert end[0] == pytest.approx(x0[0] + phi.displacement.c1.samples[28, 30], abs=1e-6)
    assert end[1] == pytest.approx(x0[1] + phi.displacement.c2.samples[28, 30], abs=1e-6)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory((0.0, 0.0), np.array([0.0, 1.0]), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Trajectory((0.0, 0.0), np.array([0.0, 0.0]), np.zeros((2, 2)))


def test_unknown_interpolation_method(gauss64):
    with pytest.raises(ValueError):
        trace_trajectory((1.0, 1.0), gauss64, method="linear")
