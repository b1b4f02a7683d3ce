"""Transmission through an Eckart barrier from single stationary trajectories.

Writes E, T from the trajectory, T in closed form and the gap between the two
reflection estimators.

    python3 scripts/eckart_scan.py --v0 2 --emin 0.01 --emax 5 --n 25
"""

import argparse
import math
from pathlib import Path

import numpy as np

from qtraj.core import Eckart, PhysicalParams
from qtraj.io import write_csv
from qtraj.oracle import eckart_transmission
from qtraj.tise import ScatterOptions, scattering_run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--v0", type=float, default=2.0)
    ap.add_argument("--width", type=float, default=1.0)
    ap.add_argument("--emin", type=float, default=0.01)
    ap.add_argument("--emax", type=float, default=5.0)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--out", default="out/eckart_scan.csv")
    args = ap.parse_args()

    pp = PhysicalParams()
    pot = Eckart(args.v0, args.width)
    opts = ScatterOptions(step=0.1, tol=1e-10)
    rows = []
    for E in np.geomspace(args.emin, args.emax, args.n):
        res = scattering_run(pot, pp, math.sqrt(2 * pp.mass * E) / pp.hbar, opts)
        T = eckart_transmission(E, args.v0, args.width, pp)
        gap = abs(res.reflection - res.reflection_oscillation)
        rows.append([E, res.transmission, T, abs(res.transmission - T) / T, gap])
        print(f"E={E:9.4g}  T={res.transmission:.12e}  closed form {T:.12e}  rel {rows[-1][3]:.1e}  R gap {gap:.1e}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ["energy", "T", "T_closed_form", "T_rel_error", "R_estimator_gap"], rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
