"""Ensemble PDE residual of an Eckart trajectory lifted to a travelling wave.

Compares the residual of the lift x(C, t) = x(t - lam C) with that of the
exact free-Gaussian ensemble at the same n_c, epsilon, dt and stencils.
"""

import argparse
import math

import numpy as np

from qtraj.analytic import GaussianParams
from qtraj.core import Eckart, Free, PhysicalParams
from qtraj.ensemble1d import Ensemble1D, c_grid, free_gaussian_ensemble, pde_residual, travelling_wave_lift
from qtraj.tise import ScatterOptions, scattering_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--energies", default="1.5,3.0")
    ap.add_argument("--sizes", default="101,201,401")
    ap.add_argument("--half-width", type=float, default=3.0, help="x window covered by the labels")
    args = ap.parse_args()
    pp, pot, eps = PhysicalParams(), Eckart(1.0, 1.0), 0.02
    for E in (float(s) for s in args.energies.split(",")):
        k = math.sqrt(2 * pp.mass * E) / pp.hbar
        path = scattering_run(pot, pp, k, ScatterOptions(step=0.02, tol=1e-12), keep_path=True).path
        o = np.argsort(path.t)
        ta, tb = np.interp([-args.half_width, args.half_width], path.x[o], path.t[o])
        lam = -(tb - ta) / (1 - 2 * eps)
        for n in (int(s) for s in args.sizes.split(",")):
            dt = 2.0 / n
            C = c_grid(n, eps)
            lift = [travelling_wave_lift(path, lam, C, ta + lam * eps + s * dt, eps, pot, pp) for s in (-1, 0, 1)]
            ref = [Ensemble1D(e.t, eps, C, e.x, e.v, "uniform")
                   for e in (free_gaussian_ensemble(GaussianParams(p0=1.0), pp, n, eps, 1 + s * dt) for s in (-1, 0, 1))]
            rl, ra = pde_residual(lift, pot, pp).max, pde_residual(ref, Free(), pp).max
            print(f"E={E:4.2f} n={n:4d} lift {rl:.3e}  analytic {ra:.3e}  ratio {rl / ra:.2f}")


if __name__ == "__main__":
    main()
