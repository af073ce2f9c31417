"""Eulerian against Lagrangian reconstruction under joint refinement,
and the centered-difference residual of the Lagrangian ODE.

usage: python scripts/convergence.py
"""

from ipmlab.experiments import commutator_residuals, make_gaussian, observed_order
from ipmlab.lagrangian import reconstruct_density, solve_flow
from ipmlab.spectral import Grid, sobolev_norm
from ipmlab.transport import SolverConfig


def main() -> None:
    for n, dt in ((64, 4e-2), (128, 2e-2), (256, 1e-2), (256, 5e-3)):
        grid = Grid(n, n, 32.0)
        rho0 = make_gaussian(grid, (14.0, 16.0), 1.5, 2.0)
        sol = solve_flow(rho0, SolverConfig(dt=dt))
        err = sobolev_norm(reconstruct_density(rho0, sol.phi) - sol.record.rho_final) / sobolev_norm(rho0)
        print(f"n={n:4d} dt={dt:<6g} reconstruction rel diff {err:.3e}")
    hs = (1, 2, 4, 8, 16, 32)
    res = commutator_residuals(make_gaussian(Grid(), (14.0, 16.0), 1.5, 1.0), SolverConfig(), hs)
    for h in hs:
        print(f"h={h:2d} dt  residual {res[h]:.3e}")
    print(f"order from h=16,32: {observed_order([16, 32], [res[16], res[32]]):.2f}")


if __name__ == "__main__":
    main()
