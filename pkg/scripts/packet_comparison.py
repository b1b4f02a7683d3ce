"""Eckart wavepacket: trajectory-ensemble density against the grid solver.

    python3 scripts/packet_comparison.py configs/eckart_packet.cfg
"""

import argparse
from pathlib import Path

from qtraj.cli import eckart_packet_comparison, validate_config
from qtraj.io import write_csv
from qtraj.oracle import packet_transmission


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out", default="out/packet")
    args = ap.parse_args()
    cfg = validate_config(Path(args.config).read_text())
    dfe, dft, cmp = eckart_packet_comparison(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "ensemble.csv", ["x", "rho"], zip(dfe.x_grid, dfe.rho))
    write_csv(out / "grid.csv", ["x", "rho"], zip(dft.x_grid, dft.rho))
    for k in ("l1", "linf", "overlap"):
        print(f"{k:8s} {cmp[k]:.6e}")
    T = packet_transmission(cfg.gaussian(), cfg.potential_obj(), cfg.physical())
    print(f"energy-averaged transmission {T:.6f} (for reference; the run may end before the packet splits)")


if __name__ == "__main__":
    main()
