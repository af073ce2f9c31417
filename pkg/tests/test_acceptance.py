"""Acceptance criteria at desk scale (n = 256, box 32, s = 2.5, T = 1).

Each test records one ``CRITERION k: PASS|FAIL ...`` line that is printed as it
runs and again in the terminal summary.
"""

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from ipmlab.experiments import (
    BumpSpec,
    Prop3Config,
    commutator_residuals,
    make_bump,
    make_gaussian,
    observed_order,
    random_smooth_field,
    run_prop3,
    scaling_check,
    stratified,
)
from ipmlab.io import emit_report
from ipmlab.lagrangian import Trajectory, reconstruct_density, solve_flow, trace_trajectories
from ipmlab.operators import darcy_from_pressure, darcy_velocity, linearized_psi, default_epsilon
from ipmlab.spectral import Grid, RealField, divergence, sobolev_norm
from ipmlab.trajectory import analyticity_probe
from ipmlab.transport import SolverConfig, solution_map, solve_density

pytestmark = pytest.mark.acceptance

GRID = Grid()
CFG = SolverConfig()
PROP3_WORKERS = 4


def record(k: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def corpus_gaussian(amplitude: float = 1.0) -> RealField:
    return make_gaussian(GRID, (14.0, 16.0), 1.5, amplitude)


def test_criterion_1_darcy_structure():
    rng = np.random.default_rng(20)
    worst_div, worst_route = 0.0, 0.0
    for _ in range(20):
        rho = random_smooth_field(GRID, rng)
        u = darcy_velocity(rho)
        floor = u.l2() / GRID.box_length
        worst_div = max(worst_div, float(np.abs(divergence(u).samples).max()) / floor)
        worst_route = max(worst_route, (u - darcy_from_pressure(rho)).l2() / u.l2())
    ok = worst_div <= 1e-11 and worst_route <= 1e-11
    record(1, ok, f"max|div u|/(|u|_0/L)={worst_div:.2e} route_rel={worst_route:.2e} (<= 1e-11)")


def test_criterion_2_stratified_equilibrium():
    rho0 = stratified(GRID)
    rel = sobolev_norm(solution_map(rho0, 1.0, CFG) - rho0) / sobolev_norm(rho0)
    record(2, rel <= 1e-8, f"|Phi_1(rho0)-rho0|_s/|rho0|_s={rel:.2e} (<= 1e-8)")


def test_criterion_3_conservation():
    rho0 = corpus_gaussian(2.0)
    d = solve_density(rho0, CFG).diagnostics
    osc = float(rho0.samples.max() - rho0.samples.min())
    mean_drift = float(np.abs(d.mean - d.mean[0]).max())
    l2_drift = float(np.abs(d.l2 - d.l2[0]).max() / d.l2[0])
    excursion = max(float(d.max.max() - d.max[0]), float(d.min[0] - d.min.min()), 0.0) / osc
    ok = mean_drift <= 1e-12 and l2_drift <= 1e-6 and excursion <= 1e-3
    record(3, ok, f"mean_drift={mean_drift:.2e} l2_rel={l2_drift:.2e} excursion/osc={excursion:.2e}")


def test_criterion_4_scaling_identity():
    rho0 = corpus_gaussian(1.0)
    matched = scaling_check(rho0, 0.5, 2.0, CFG, mode="matched")
    dts = [0.02, 0.01, 0.005]
    defects = [scaling_check(rho0, 0.5, 2.0, CFG.replace(dt=dt), mode="fixed_dt") for dt in dts]
    order = observed_order(dts, defects)
    ok = matched <= 1e-5 and order >= 2
    trail = " ".join(f"{e:.1e}" for e in defects)
    record(4, ok, f"matched={matched:.2e} (<= 1e-5) fixed_dt defects {trail} order={order:.2f} (>= 2)")


def _reconstruction_error(n: int, dt: float) -> float:
    grid = Grid(n, n, 32.0)
    rho0 = make_gaussian(grid, (14.0, 16.0), 1.5, 2.0)
    sol = solve_flow(rho0, SolverConfig(dt=dt))
    rec = reconstruct_density(rho0, sol.phi)
    return sobolev_norm(rec - sol.record.rho_final) / sobolev_norm(rho0)


def test_criterion_5_eulerian_lagrangian_equivalence():
    coarse = _reconstruction_error(128, 1e-2)
    fine = _reconstruction_error(256, 5e-3)
    ok = fine <= 1e-3 and fine < coarse
    record(5, ok, f"rel_diff n=128: {coarse:.2e}, n=256: {fine:.2e} (<= 1e-3, decreasing)")


def test_criterion_6_flow_map_derivative():
    rho_bar = make_gaussian(GRID, (24.5, 18.0), 1.5, 1.0)
    zero = RealField.zeros(GRID)
    u = darcy_velocity(rho_bar)
    eps = default_epsilon(rho_bar)
    steps = [2 * eps, eps, eps / 2]
    d = [linearized_psi(zero, rho_bar, e, CFG) for e in steps]
    errs = [(di - u).l2() / u.l2() for di in d]
    rich = ((4.0 / 3.0) * d[2] - (1.0 / 3.0) * d[1] - u).l2() / u.l2()
    order = observed_order(steps, errs)
    ok = rich <= 1e-4 and order >= 1.9
    trail = " ".join(f"{e:.1e}" for e in errs)
    record(6, ok, f"central errors {trail} order={order:.2f} (>= 1.9) richardson={rich:.2e} (<= 1e-4)")


def test_criterion_7_ode_consistency():
    res = commutator_residuals(corpus_gaussian(1.0), CFG, h_steps=(1, 16, 32))
    order = observed_order([16, 32], [res[16], res[32]])
    ok = res[1] <= 1e-2 and order >= 1.9
    record(7, ok, f"residual h=dt {res[1]:.2e} (<= 1e-2) h=16dt {res[16]:.2e} h=32dt {res[32]:.2e} order={order:.2f} (>= 1.9)")


def _reference(fn) -> np.ndarray:
    t = np.linspace(0.0, 1.0, 201)
    x1, x2 = fn(t)
    return analyticity_probe(Trajectory((x1[0], x2[0]), t, np.stack([x1, x2], axis=1))).coefficients


def test_criterion_8_trajectory_analyticity():
    rho0 = make_bump(BumpSpec((14.0, 16.0), 6.0, 5.0), GRID)
    rng = np.random.default_rng(0)
    pts = np.array([14.0, 16.0]) + rng.uniform(-3.0, 3.0, size=(10, 2))
    results = [analyticity_probe(tr) for tr in trace_trajectories(pts, rho0, CFG)]
    const = _reference(lambda t: (np.full_like(t, 3.0), np.full_like(t, -1.0)))
    linear = _reference(lambda t: (2.0 + 0.5 * t, 1.0 - 0.25 * t))
    floors = float(np.abs(const[:, 1:]).max()), float(np.abs(linear[:, 2:]).max())
    geometric = [r.geometric(max_rate=-0.5, min_r2=0.99) for r in results]
    ok = all(geometric) and max(floors) <= 1e-14
    rates = " ".join(f"{r.decay_rate:.2f}/{r.fit_quality:.3f}" for r in results)
    record(
        8,
        ok,
        f"{sum(geometric)}/10 geometric (rate/R2: {rates}); reference tails {floors[0]:.1e} {floors[1]:.1e}",
    )


@pytest.fixture(scope="module")
def prop3_runs(tmp_path_factory):
    cfg = Prop3Config()
    out = []
    for name in ("first", "second"):
        report = run_prop3(cfg, workers=PROP3_WORKERS)
        path = tmp_path_factory.mktemp(name)
        emit_report(report, path)
        out.append((report, path))
    return out


def test_criterion_9_non_uniform_dependence(prop3_runs):
    report, _ = prop3_runs[0]
    recs = report.records
    m = report.constants.m
    base = recs[0].output_dist
    inputs_exact = all(abs(r.input_dist - report.rho_bar_norm / r.n) <= 1e-10 * report.rho_bar_norm for r in recs)
    floor_held = all(r.output_dist >= 0.5 * base for r in recs)
    sep_held = all(r.flow_sep >= 0.5 * m / (2 * r.n) for r in recs)
    disjoint = all(r.disjoint for r in recs)
    ok = len(recs) == 8 and inputs_exact and floor_held and sep_held and disjoint and report.passed
    outs = " ".join(f"{r.output_dist:.4f}" for r in recs)
    record(
        9,
        ok,
        f"N={len(recs)} inputs_exact={inputs_exact} output {outs} (floor {0.5 * base:.4f}) "
        f"sep_ok={sep_held} disjoint={disjoint} m={m:.3e}",
    )


def test_criterion_10_determinism(prop3_runs):
    (_, a), (_, b) = prop3_runs
    names = sorted(p.name for p in a.glob("*.csv"))
    same = [(a / n).read_bytes() == (b / n).read_bytes() for n in names]
    ok = bool(names) and all(same)
    record(10, ok, f"{sum(same)}/{len(names)} CSV reports byte-identical ({', '.join(names)})")
