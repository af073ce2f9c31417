"""Scaling-identity defect in matched and fixed-dt modes.

usage: python scripts/scaling.py [--lam 2] [--T 0.5]
"""

import argparse

from ipmlab.experiments import make_gaussian, observed_order, scaling_check
from ipmlab.spectral import Grid
from ipmlab.transport import SolverConfig


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--T", type=float, default=0.5)
    args = p.parse_args()
    rho0 = make_gaussian(Grid(), (14.0, 16.0), 1.5, 1.0)
    print(f"matched: {scaling_check(rho0, args.T, args.lam, SolverConfig(), 'matched'):.3e}")
    dts = [0.04, 0.02, 0.01, 0.005]
    errs = [scaling_check(rho0, args.T, args.lam, SolverConfig(dt=dt), "fixed_dt") for dt in dts]
    for dt, e in zip(dts, errs):
        print(f"fixed_dt dt={dt:<6g} defect={e:.3e}")
    print(f"observed order {observed_order(dts, errs):.2f}")


if __name__ == "__main__":
    main()
