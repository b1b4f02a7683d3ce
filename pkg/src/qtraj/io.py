"""Plain-text dataset writers with round-trip-exact number formatting."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    """repr() of a float is the shortest string that parses back to the same double."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def rows_from_columns(columns: Sequence) -> Iterable[list]:
    cols = [np.asarray(c).ravel() if np.ndim(c) else np.asarray([c]) for c in columns]
    n = max(len(c) for c in cols)
    cols = [np.broadcast_to(c, (n,)) if len(c) == 1 else c for c in cols]
    for i in range(n):
        yield [c[i] for c in cols]


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], append: bool = False) -> Path:
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_dat(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Whitespace-separated companion file for gnuplot; blocks split on blank lines by the caller."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for r in rows:
            if r is None:
                fh.write("\n")
            else:
                fh.write(" ".join(fmt(v) for v in r) + "\n")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open() as fh:
        header = fh.readline().strip().split(",")
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float, ndmin=2)
    return header, data
