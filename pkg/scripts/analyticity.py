"""Chebyshev decay of trajectories for Gaussian and compact-bump data.

usage: python scripts/analyticity.py [--count 10] [--seed 0]
"""

import argparse

import numpy as np

from ipmlab.experiments import BumpSpec, make_bump, make_gaussian
from ipmlab.lagrangian import trace_trajectories
from ipmlab.spectral import Grid
from ipmlab.trajectory import analyticity_probe
from ipmlab.transport import SolverConfig


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    grid = Grid()
    data = {
        "gaussian": make_gaussian(grid, (14.0, 16.0), 1.5, 2.0),
        "bump": make_bump(BumpSpec((14.0, 16.0), 6.0, 5.0), grid),
    }
    pts = np.array([14.0, 16.0]) + np.random.default_rng(args.seed).uniform(-3, 3, size=(args.count, 2))
    for name, rho0 in data.items():
        print(f"{name}: rate  R2     range  geometric")
        for tr in trace_trajectories(pts, rho0, SolverConfig()):
            r = analyticity_probe(tr)
            print(f"  {r.decay_rate:6.2f} {r.fit_quality:.4f} {r.fit.fit_range}  {r.geometric()}")


if __name__ == "__main__":
    main()
