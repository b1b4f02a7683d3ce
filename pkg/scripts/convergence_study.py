"""Refinement study for the free-Gaussian ensemble.

Part one: PDE and balance-law residuals of the exact ensemble for both
stencil families.  Part two: the solver run to t = 2 against the exact
trajectories, with the energy and momentum monitors.
"""

import argparse
from dataclasses import replace

import numpy as np

from qtraj import conservation as cons
from qtraj.analytic import GaussianParams, free_gaussian_x
from qtraj.core import Free, PhysicalParams
from qtraj.ensemble1d import free_gaussian_ensemble, interior, pde_residual, run


def residuals(gp, pp, n, coordinate, eps=0.02, t=1.0):
    dt = 2.0 * (1 - 2 * eps) / (n - 1)
    trio = [replace(free_gaussian_ensemble(gp, pp, n, eps, t + s * dt), coordinate=coordinate) for s in (-1, 0, 1)]
    win = (0.2, 0.8)
    return [pde_residual(trio, Free(), pp).max,
            cons.energy_balance(trio, Free(), pp, win).residual_max,
            cons.c_balance(trio, Free(), pp, win).residual_max,
            cons.momentum_balance(trio, pp, c_window=win).residual_max]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", default="101,201,401")
    ap.add_argument("--t-final", type=float, default=2.0)
    args = ap.parse_args()
    levels = [int(s) for s in args.levels.split(",")]
    pp, gp = PhysicalParams(), GaussianParams(p0=1.0)

    for coordinate in ("uniform", "quantile"):
        print(f"exact-ensemble residuals, {coordinate} stencils (pde, energy, c_balance, momentum)")
        prev = None
        for n in levels:
            r = np.array(residuals(gp, pp, n, coordinate))
            ratio = "" if prev is None else "  ratios " + " ".join(f"{x:5.2f}" for x in prev / r)
            print(f"  n={n:4d} " + " ".join(f"{x:.3e}" for x in r) + ratio)
            prev = r

    print(f"solver vs exact at t={args.t_final} (quantile stencils)")
    for n in levels:
        snaps = run(free_gaussian_ensemble(gp, pp, n, 0.02), args.t_final, Free(), pp, stride=1)
        last = snaps[-1]
        err = np.max(np.abs(last.x - free_gaussian_x(gp, pp, last.c_grid, last.t))[interior(n)])
        E = cons.energy_monitor(snaps, Free(), pp)
        P = cons.momentum_monitor(snaps, pp)
        print(f"  n={n:4d} max error {err:.3e}  energy drift {np.ptp(E) / abs(E[0]):.2e}  momentum drift {np.ptp(P):.2e}")


if __name__ == "__main__":
    main()
