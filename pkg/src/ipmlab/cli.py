"""Command line entry point: ``ipmlab <command> [--config PATH] [--out DIR] [--force] [--threads K]``.

Exit codes: 0 success, 1 validation failure, 2 solver abort, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    BumpSpec,
    make_bump,
    make_gaussian,
    random_smooth_field,
    run_prop3,
    scaling_check,
    stratified,
)
from .io import (
    ConfigError,
    SnapshotError,
    RunConfig,
    csv_text,
    decode_snapshot,
    diagnostics_rows,
    emit_report,
    encode_snapshot,
    manifest,
    parse_config,
    read_snapshot,
    write_snapshot,
    write_text,
    DIAGNOSTIC_COLUMNS,
)
from .lagrangian import InversionError, solve_flow, trace_trajectories
from .operators import darcy_from_pressure, darcy_velocity
from .spectral import Grid, RealField, divergence, sobolev_norm
from .trajectory import analyticity_probe
from .transport import SolverAbort, SolverConfig, solve_density

log = logging.getLogger("ipmlab")

COMMANDS = ("darcy", "solve", "flow", "trajectory", "scaling-check", "prop3", "analyticity", "selftest")
EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


def build_datum(cfg: RunConfig, grid: Grid | None = None) -> RealField:
    grid = grid or cfg.grid
    d = cfg["data"]
    kind = d["kind"]
    if kind == "gaussian":
        return make_gaussian(grid, d["center"], d["sigma"], d["amplitude"], d["target_norm"] or None)
    if kind == "bump":
        if d["target_norm"] <= 0:
            raise ConfigError("data.target_norm", "bump data needs a positive target_norm")
        try:
            return make_bump(BumpSpec(d["center"], d["radius"], d["target_norm"]), grid)
        except ValueError as exc:
            raise ConfigError("data.center", str(exc)) from None
    if kind == "stratified":
        return stratified(grid) * d["amplitude"]
    if not d["path"]:
        raise ConfigError("data.path", "snapshot data needs a path")
    return read_snapshot(d["path"], grid).field


def trajectory_points(cfg: RunConfig) -> np.ndarray:
    t = cfg["trajectory"]
    if t["points"]:
        return np.asarray(t["points"], dtype=float)
    rng = np.random.default_rng(cfg["run"]["seed"])
    c = np.asarray(cfg["data"]["center"], dtype=float)
    return c + rng.uniform(-t["spread"], t["spread"], size=(t["count"], 2))


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, out: Path, force: bool):
        self.out = out
        self.force = force
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)
        if (out / "manifest.json").exists() and not force:
            raise FileExistsError(f"{out} already holds a run (use --force to overwrite)")

    def text(self, name: str, content: str) -> None:
        write_text(self.out / name, content, self.force)
        self.files.append(name)

    def snapshot(self, name: str, f: RealField, t: float) -> None:
        write_snapshot(f, t, self.out / name, self.force)
        self.files.append(name)


def cmd_darcy(cfg: RunConfig, run: Run, threads: int) -> int:
    rho = build_datum(cfg)
    u = darcy_velocity(rho)
    w = darcy_from_pressure(rho)
    div = float(np.abs(divergence(u).samples).max())
    diff = (u - w).l2() / max(u.l2(), 1e-300)
    run.snapshot("u1.ipm", u.c1, 0.0)
    run.snapshot("u2.ipm", u.c2, 0.0)
    run.text("darcy.csv", csv_text(("max_div", "u_l2", "pressure_route_rel_diff"), [(div, u.l2(), diff)]))
    return EXIT_OK


def cmd_solve(cfg: RunConfig, run: Run, threads: int) -> int:
    rho0 = build_datum(cfg)
    rec = solve_density(rho0, cfg.solver)
    run.snapshot("rho0.ipm", rho0, 0.0)
    run.snapshot("rho_T.ipm", rec.rho_final, cfg.solver.T)
    run.text("diagnostics.csv", csv_text(DIAGNOSTIC_COLUMNS, diagnostics_rows("solve", rec.diagnostics)))
    return EXIT_OK


def cmd_flow(cfg: RunConfig, run: Run, threads: int) -> int:
    rho0 = build_datum(cfg)
    sol = solve_flow(rho0, cfg.solver)
    det = sol.phi.det()
    g1, g2 = sol.phi.displacement.arrays
    T = cfg.solver.T
    run.snapshot("rho_T.ipm", sol.record.rho_final, T)
    run.snapshot("g1.ipm", RealField(rho0.grid, g1), T)
    run.snapshot("g2.ipm", RealField(rho0.grid, g2), T)
    run.text(
        "flow.csv",
        csv_text(("det_min", "det_max", "lipschitz"), [(float(det.min()), float(det.max()), sol.phi.lipschitz())]),
    )
    run.text("diagnostics.csv", csv_text(DIAGNOSTIC_COLUMNS, diagnostics_rows("flow", sol.record.diagnostics)))
    return EXIT_OK


def _trace(cfg: RunConfig):
    rho0 = build_datum(cfg)
    t = cfg["trajectory"]
    return trace_trajectories(trajectory_points(cfg), rho0, cfg.solver, t["sample_stride"], t["method"])


def cmd_trajectory(cfg: RunConfig, run: Run, threads: int) -> int:
    trajs = _trace(cfg)
    rows = [(i, float(tt), float(p[0]), float(p[1])) for i, tr in enumerate(trajs) for tt, p in zip(tr.times, tr.positions)]
    run.text("trajectories.csv", csv_text(("id", "t", "x1", "x2"), rows))
    return EXIT_OK


def cmd_analyticity(cfg: RunConfig, run: Run, threads: int) -> int:
    trajs = _trace(cfg)
    rows, coeff_rows = [], []
    for i, tr in enumerate(trajs):
        res = analyticity_probe(tr)
        rows.append((i, tr.x0[0], tr.x0[1], res.decay_rate, res.fit_quality, res.fit.fit_range[1], res.geometric()))
        for k in range(res.coefficients.shape[1]):
            coeff_rows.append((i, k, float(res.coefficients[0, k]), float(res.coefficients[1, k])))
    run.text("analyticity.csv", csv_text(("id", "x1", "x2", "decay_rate", "r2", "fit_last", "geometric"), rows))
    run.text("coefficients.csv", csv_text(("id", "k", "c_x1", "c_x2"), coeff_rows))
    return EXIT_OK


def cmd_scaling(cfg: RunConfig, run: Run, threads: int) -> int:
    sc = cfg["scaling"]
    rho0 = build_datum(cfg)
    defect = scaling_check(rho0, sc["T"], sc["lam"], cfg.solver, sc["mode"])
    run.text("scaling.csv", csv_text(("lam", "T", "mode", "dt", "defect"), [(sc["lam"], sc["T"], sc["mode"], cfg.solver.dt, defect)]))
    return EXIT_OK


def cmd_prop3(cfg: RunConfig, run: Run, threads: int) -> int:
    try:
        p3 = cfg.prop3
    except ValueError as exc:
        raise ConfigError("prop3", str(exc)) from None
    report = run_prop3(p3, workers=threads)
    for path in emit_report(report, run.out, run.force):
        run.files.append(path.name)
    return EXIT_OK if report.passed else EXIT_VALIDATION


def selftest_rows() -> list[tuple[str, float, float, bool]]:
    """Fast checks on a 32 x 32 grid."""
    grid = Grid(32, 32, 32.0)
    rng = np.random.default_rng(0)
    rho = random_smooth_field(grid, rng)
    rows = []
    u, w = darcy_velocity(rho), darcy_from_pressure(rho)
    rows.append(("darcy_routes", (u - w).l2() / u.l2(), 1e-11))
    rows.append(("darcy_divergence", float(np.abs(divergence(u).samples).max()) / u.l2(), 1e-11))
    snap = decode_snapshot(encode_snapshot(rho, 0.5), grid)
    rows.append(("snapshot_roundtrip", float(np.any(snap.field.samples != rho.samples)), 0.0))
    strat = stratified(grid)
    out = solve_density(strat, SolverConfig(dt=1e-2, T=0.1)).rho_final
    rows.append(("stratified_equilibrium", sobolev_norm(out - strat) / sobolev_norm(strat), 1e-8))
    echo = parse_config("").echo()
    rows.append(("config_echo", float(parse_config(echo).echo() != echo), 0.0))
    return [(name, value, tol, bool(value <= tol)) for name, value, tol in rows]


def cmd_selftest(cfg: RunConfig, run: Run, threads: int) -> int:
    rows = selftest_rows()
    run.text("selftest.csv", csv_text(("check", "value", "threshold", "pass"), rows))
    for name, value, tol, ok in rows:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {value:.3e} (<= {tol:g})")
    return EXIT_OK if all(r[3] for r in rows) else EXIT_VALIDATION


HANDLERS = {
    "darcy": cmd_darcy,
    "solve": cmd_solve,
    "flow": cmd_flow,
    "trajectory": cmd_trajectory,
    "analyticity": cmd_analyticity,
    "scaling-check": cmd_scaling,
    "prop3": cmd_prop3,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipmlab", description="Pseudo-spectral laboratory for the 2D porous media equation.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="key-value config file")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--threads", type=int, help="worker threads for independent solves")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("threads", f"must be positive (got {args.threads})")
            cfg = cfg.with_values("run", threads=args.threads)
        cfg = cfg.with_values("run", command=args.command)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = args.out or (Path(cfg["run"]["out"]) if cfg["run"]["out"] else Path("ipmlab-out") / args.command)
    log.info("config\n%s", cfg.echo())
    try:
        run = Run(out, args.force)
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_IO
    code = _dispatch(args.command, cfg, run)
    try:
        write_text(out / "manifest.json", manifest(cfg, args.command, run.files, code), force=True)
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


def _dispatch(command: str, cfg: RunConfig, run: Run) -> int:
    try:
        return HANDLERS[command](cfg, run, cfg["run"]["threads"])
    except SnapshotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverAbort, InversionError) as exc:
        print(f"error: solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
