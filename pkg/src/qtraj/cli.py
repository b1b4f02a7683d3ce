"""Scenario runner.

A config is flat ``section.key = value`` text (``#`` starts a comment) or the
equivalent JSON object, either nested or with dotted keys.  Every run writes
into its own directory under the output root (``output.dir``, overridden by
the QTRAJ_OUT environment variable):

    config.resolved   the full config with defaults filled in
    summary.json      metrics, tolerances and pass/fail per check
    *.csv             datasets, full double precision
    *.dat             the main dataset again, whitespace separated for gnuplot

Usage::

    qtraj run CONFIG [--strict]
    qtraj validate CONFIG
    qtraj sweep CONFIG --param KEY --values V1,V2,...
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import analytic, conservation, ensemble1d, manyd, oracle, reconstruct, tise
from .core import (
    BlowupError,
    CrossingError,
    DomainError,
    Eckart,
    Free,
    Harmonic,
    InputError,
    IntegrationError,
    PhysicalParams,
    Polynomial,
    SingularityError,
)
from .io import write_csv, write_dat

SCHEMA_VERSION = 1
SCENARIOS = ("tise-scatter", "tdqm-run", "analytic-check", "manyd-run", "oracle-compare")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_PRECONDITION, EXIT_BLOWUP, EXIT_INTEGRATION = 0, 1, 2, 3, 4, 5


# -- config schema -------------------------------------------------------------


@dataclass
class ParamsCfg:
    mass: float = 1.0
    hbar: float = 1.0


@dataclass
class PotentialCfg:
    kind: str = "free"
    omega: float = 1.0
    v0: float = 1.0
    width: float = 1.0
    center: float = 0.0
    coefficients: list = field(default_factory=list)


@dataclass
class GridCfg:
    n_c: int = 201
    epsilon: float = 0.02
    coordinate: str = "quantile"


@dataclass
class SteppingCfg:
    dt: float = 0.0  # 0 selects the stability guard
    safety: float = 0.5
    t_final: float = 1.0
    snapshot_stride: int = 0  # 0 keeps only the first and last slice


@dataclass
class InitialCfg:
    kind: str = "gaussian"  # gaussian | coherent (harmonic only)
    x0: float = 0.0
    p0: float = 0.0
    t0: float = 0.0
    a: float = 1.0


@dataclass
class ScatterCfg:
    energies: list = field(default_factory=lambda: [0.5])
    step: float = 0.05
    flatten_tol: float = 1e-12
    window: float = 1.0
    tol: float = 1e-11
    method: str = "rk4-adaptive"


@dataclass
class AnalyticCfg:
    levels: list = field(default_factory=lambda: [51, 101, 201])
    t: float = 1.0
    dt_factor: float = 2.0  # dt = dt_factor * dC at each level


@dataclass
class ManyDCfg:
    n_c: int = 31
    rotation: float = 0.0
    x0: float = 0.0
    p0: float = 0.0
    t0: float = 0.0
    a: float = 1.0
    velocity: str = "analytic"  # analytic | swirl-free


@dataclass
class OracleCfg:
    x_min: float = -80.0
    x_max: float = 80.0
    n_x: int = 8192
    dt: float = 0.002
    scheme: str = "split-operator"


@dataclass
class TolerancesCfg:
    max_error: float = 1e-6
    t_rel: float = 1e-8
    r_agree: float = 1e-6
    order_ratio: float = 3.5
    l1: float = 5e-3
    overlap: float = 0.999
    separability_factor: float = 10.0
    curl_factor: float = 4.0


@dataclass
class OutputCfg:
    dir: str = "runs"
    name: str = ""


SECTIONS = {
    "params": ParamsCfg, "potential": PotentialCfg, "grid": GridCfg, "stepping": SteppingCfg,
    "initial": InitialCfg, "scatter": ScatterCfg, "analytic": AnalyticCfg, "manyd": ManyDCfg,
    "oracle": OracleCfg, "tolerances": TolerancesCfg, "output": OutputCfg,
}


@dataclass
class ScenarioConfig:
    scenario: str = "tdqm-run"
    params: ParamsCfg = field(default_factory=ParamsCfg)
    potential: PotentialCfg = field(default_factory=PotentialCfg)
    grid: GridCfg = field(default_factory=GridCfg)
    stepping: SteppingCfg = field(default_factory=SteppingCfg)
    initial: InitialCfg = field(default_factory=InitialCfg)
    scatter: ScatterCfg = field(default_factory=ScatterCfg)
    analytic: AnalyticCfg = field(default_factory=AnalyticCfg)
    manyd: ManyDCfg = field(default_factory=ManyDCfg)
    oracle: OracleCfg = field(default_factory=OracleCfg)
    tolerances: TolerancesCfg = field(default_factory=TolerancesCfg)
    output: OutputCfg = field(default_factory=OutputCfg)

    def physical(self) -> PhysicalParams:
        return PhysicalParams(self.params.mass, self.params.hbar)

    def potential_obj(self):
        p = self.potential
        if p.kind == "free":
            return Free()
        if p.kind == "harmonic":
            return Harmonic(p.omega)
        if p.kind == "eckart":
            return Eckart(p.v0, p.width, p.center)
        return Polynomial(tuple(float(c) for c in p.coefficients))

    def gaussian(self) -> analytic.GaussianParams:
        i = self.initial
        return analytic.GaussianParams(i.x0, i.p0, i.t0, i.a)

    def flat(self) -> dict:
        out = {"scenario": self.scenario}
        for name in SECTIONS:
            for k, v in asdict(getattr(self, name)).items():
                out[f"{name}.{k}"] = v
        return out


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _field_type(section_cls, key):
    for f in fields(section_cls):
        if f.name == key:
            default = f.default if f.default is not MISSING else f.default_factory()
            return type(default)
    return None


def _convert(raw, typ, where):
    if typ is list:
        if isinstance(raw, list):
            items = raw
        else:
            items = [s for s in str(raw).replace(";", ",").split(",") if s.strip()]
        return [float(s) if not isinstance(s, (int, float)) else s for s in items]
    if typ is bool:
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if typ is int:
        if isinstance(raw, float) and raw.is_integer():
            return int(raw)
        return int(str(raw).strip())
    if typ is float:
        return float(raw)
    return str(raw).strip()


def _parse_text(text: str, errors: list) -> list[tuple[str, object, str]]:
    """(key, raw value, location) triples from flat text or JSON."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            errors.append(f"JSON parse error at line {exc.lineno}: {exc.msg}")
            return []
        items = []

        def walk(prefix, o):
            for k, v in o.items():
                key = f"{prefix}.{k}" if prefix else k
                if isinstance(v, dict):
                    walk(key, v)
                else:
                    items.append((key, v, f"key {key!r}"))

        walk("", obj)
        return items
    items = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        items.append((k, v, f"line {lineno}"))
    return items


def _check_ranges(cfg: ScenarioConfig, errors: list):
    def need(cond, msg):
        if not cond:
            errors.append(msg)

    def finite(x):
        return isinstance(x, (int, float)) and math.isfinite(x)

    need(cfg.scenario in SCENARIOS, f"scenario: must be one of {SCENARIOS}, got {cfg.scenario!r}")
    need(finite(cfg.params.mass) and cfg.params.mass > 0, f"params.mass: must be positive, got {cfg.params.mass!r}")
    need(finite(cfg.params.hbar) and cfg.params.hbar > 0, f"params.hbar: must be positive, got {cfg.params.hbar!r}")
    p = cfg.potential
    need(p.kind in ("free", "harmonic", "eckart", "polynomial"),
         f"potential.kind: must be free, harmonic, eckart or polynomial, got {p.kind!r}")
    if p.kind == "harmonic":
        need(finite(p.omega) and p.omega > 0, f"potential.omega: must be positive, got {p.omega!r}")
    if p.kind == "eckart":
        need(finite(p.v0) and p.v0 > 0, f"potential.v0: must be positive, got {p.v0!r}")
        need(finite(p.width) and p.width > 0, f"potential.width: must be positive, got {p.width!r}")
        need(finite(p.center), "potential.center: must be finite")
    g = cfg.grid
    need(0.0 < g.epsilon < 0.5, f"grid.epsilon: must lie in (0, 0.5), got {g.epsilon!r}")
    need(g.n_c >= 7, f"grid.n_c: must be at least 7, got {g.n_c!r}")
    need(g.coordinate in ("uniform", "quantile"), f"grid.coordinate: must be uniform or quantile, got {g.coordinate!r}")
    s = cfg.stepping
    need(finite(s.dt) and s.dt >= 0, f"stepping.dt: must be >= 0 (0 = automatic), got {s.dt!r}")
    need(finite(s.safety) and 0 < s.safety <= 1, f"stepping.safety: must lie in (0, 1], got {s.safety!r}")
    need(finite(s.t_final), f"stepping.t_final: must be finite, got {s.t_final!r}")
    need(s.snapshot_stride >= 0, f"stepping.snapshot_stride: must be >= 0, got {s.snapshot_stride!r}")
    i = cfg.initial
    need(i.kind in ("gaussian", "coherent"), f"initial.kind: must be gaussian or coherent, got {i.kind!r}")
    need(finite(i.a) and i.a > 0, f"initial.a: must be positive, got {i.a!r}")
    if i.kind == "coherent":
        need(p.kind == "harmonic", "initial.kind: coherent needs potential.kind = harmonic")
    sc = cfg.scatter
    need(len(sc.energies) > 0 and all(finite(e) and e > 0 for e in sc.energies),
         "scatter.energies: must be a non-empty list of positive numbers")
    need(sc.step > 0, f"scatter.step: must be positive, got {sc.step!r}")
    need(sc.flatten_tol > 0, f"scatter.flatten_tol: must be positive, got {sc.flatten_tol!r}")
    need(sc.window > 0, f"scatter.window: must be positive, got {sc.window!r}")
    need(sc.method in tise.METHODS, f"scatter.method: must be one of {tise.METHODS}")
    if cfg.scenario == "tise-scatter":
        need(p.kind == "eckart", "potential.kind: tise-scatter needs an eckart barrier")
    an = cfg.analytic
    need(len(an.levels) >= 2 and all(float(n).is_integer() and n >= 7 for n in an.levels),
         "analytic.levels: need at least two integer grid sizes >= 7")
    need(an.dt_factor > 0, "analytic.dt_factor: must be positive")
    md = cfg.manyd
    need(md.n_c >= 7, f"manyd.n_c: must be at least 7, got {md.n_c!r}")
    need(md.a > 0, f"manyd.a: must be positive, got {md.a!r}")
    need(md.velocity in ("analytic", "swirl-free"), "manyd.velocity: must be analytic or swirl-free")
    o = cfg.oracle
    need(o.x_max > o.x_min, "oracle.x_max: must exceed oracle.x_min")
    need(o.n_x >= 16, "oracle.n_x: must be at least 16")
    need(o.dt > 0, "oracle.dt: must be positive")
    need(o.scheme in oracle.SCHEMES, f"oracle.scheme: must be one of {oracle.SCHEMES}")
    for f in fields(TolerancesCfg):
        val = getattr(cfg.tolerances, f.name)
        need(finite(val) and val > 0, f"tolerances.{f.name}: must be positive, got {val!r}")


def validate_config(text: str, overrides: dict | None = None) -> ScenarioConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    errors: list[str] = []
    items = _parse_text(text, errors)
    if overrides:
        items += [(k, v, "override") for k, v in overrides.items()]
    values = {name: {} for name in SECTIONS}
    scenario = "tdqm-run"
    for key, raw, where in items:
        if key == "scenario":
            scenario = str(raw).strip()
            continue
        if "." not in key:
            errors.append(f"{where}: unknown key {key!r}")
            continue
        sec, name = key.split(".", 1)
        cls = SECTIONS.get(sec)
        typ = _field_type(cls, name) if cls else None
        if typ is None:
            errors.append(f"{where}: unknown key {key!r}")
            continue
        try:
            values[sec][name] = _convert(raw, typ, where)
        except (TypeError, ValueError):
            errors.append(f"{where}: {key} expects {typ.__name__}, got {raw!r}")
    # fields that failed to parse keep their defaults so range checks still run
    cfg = ScenarioConfig(scenario, **{sec: SECTIONS[sec](**vals) for sec, vals in values.items()})
    _check_ranges(cfg, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def format_config(cfg: ScenarioConfig) -> str:
    lines = []
    for k, v in cfg.flat().items():
        if isinstance(v, list):
            v = ",".join(repr(float(x)) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# -- scenarios ------------------------------------------------------------------


class Run:
    """Collects metrics/checks and writes files into one directory."""

    def __init__(self, cfg: ScenarioConfig, root: Path):
        self.cfg = cfg
        self.dir = root
        self.dir.mkdir(parents=True, exist_ok=True)
        self.metrics: dict = {}
        self.checks: dict = {}
        self.files: list[str] = []

    def check(self, name, value, tol, ok):
        self.checks[name] = {"value": value, "tolerance": tol, "pass": bool(ok)}

    def csv(self, name, header, rows, dat=False):
        rows = list(rows)
        write_csv(self.dir / name, header, rows)
        self.files.append(name)
        if dat:
            dname = name.rsplit(".", 1)[0] + ".dat"
            write_dat(self.dir / dname, header, rows)
            self.files.append(dname)

    def summary(self, status="ok", error=None, extra=None) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.cfg.scenario,
            "status": status,
            "metrics": self.metrics,
            "tolerances": asdict(self.cfg.tolerances),
            "checks": self.checks,
            "all_passed": all(c["pass"] for c in self.checks.values()),
            "files": sorted(set(self.files)),
        }
        if error is not None:
            out["error"] = error
        if extra:
            out.update(extra)
        with (self.dir / "summary.json").open("w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        return out


def _scatter(run: Run):
    cfg = run.cfg
    pp = cfg.physical()
    pot = cfg.potential_obj()
    opts = tise.ScatterOptions(step=cfg.scatter.step, flatten_tol=cfg.scatter.flatten_tol,
                               window=cfg.scatter.window, method=cfg.scatter.method, tol=cfg.scatter.tol)
    rows = []
    worst_t, worst_r = 0.0, 0.0
    for E in cfg.scatter.energies:
        k = math.sqrt(2.0 * pp.mass * E) / pp.hbar
        res = tise.scattering_run(pot, pp, k, opts)
        T_ex = oracle.eckart_transmission(E, pot.v0, pot.width, pp)
        rel = abs(res.transmission - T_ex) / T_ex
        dr = abs(res.reflection - res.reflection_oscillation)
        worst_t, worst_r = max(worst_t, rel), max(worst_r, dr)
        rows.append([E, k, res.p_asymptotic, res.reflection, res.transmission, res.flattening_time,
                     res.energy_drift, res.reflection_oscillation, T_ex, rel])
    run.csv("scatter.csv", ["energy", "k", "p_asym", "R", "T", "flatten_time", "energy_drift",
                            "R_oscillation", "T_closed_form", "T_rel_error"], rows, dat=True)
    run.metrics.update(max_T_rel_error=worst_t, max_R_estimator_gap=worst_r, n_energies=len(rows))
    run.check("transmission_vs_closed_form", worst_t, cfg.tolerances.t_rel, worst_t <= cfg.tolerances.t_rel)
    run.check("reflection_estimators_agree", worst_r, cfg.tolerances.r_agree, worst_r <= cfg.tolerances.r_agree)


def _initial_ensemble(cfg: ScenarioConfig):
    pp = cfg.physical()
    gp = cfg.gaussian()
    if cfg.initial.kind == "coherent":
        omega = cfg.potential.omega
        gp = replace(gp, a=math.sqrt(pp.hbar / (pp.mass * omega)))
        ens = ensemble1d.ho_gaussian_ensemble(gp, pp, omega, cfg.grid.n_c, cfg.grid.epsilon)
    elif cfg.potential.kind == "harmonic":
        ens = ensemble1d.ho_gaussian_ensemble(gp, pp, cfg.potential.omega, cfg.grid.n_c, cfg.grid.epsilon)
    else:
        ens = ensemble1d.free_gaussian_ensemble(gp, pp, cfg.grid.n_c, cfg.grid.epsilon)
    return replace(ens, coordinate=cfg.grid.coordinate), gp


def _reference_x(cfg, gp, C, t):
    pp = cfg.physical()
    if cfg.potential.kind == "free":
        return analytic.free_gaussian_x(gp, pp, C, t)
    if cfg.potential.kind == "harmonic":
        return analytic.ho_gaussian_x(gp, pp, cfg.potential.omega, C, t)
    return None


def _snapshot_rows(ens, pot, pp):
    d1 = ensemble1d.c_derivatives(ens).d1
    e = conservation.energy_density(ens, pot, pp)
    for c, x, v, xp, ed in zip(ens.c_grid, ens.x, ens.v, d1, e):
        yield [ens.t, c, x, v, xp, ed]


def _tdqm(run: Run):
    cfg = run.cfg
    pp = cfg.physical()
    pot = cfg.potential_obj()
    ens, gp = _initial_ensemble(cfg)
    dt_max = ensemble1d.cfl_timestep(ens, pp, cfg.stepping.safety)
    dt = dt_max if cfg.stepping.dt == 0 else min(cfg.stepping.dt, dt_max)
    span = cfg.stepping.t_final - ens.t
    n = max(1, int(math.ceil(span / dt - 1e-9)))
    dt = span / n
    stride = cfg.stepping.snapshot_stride or n
    snap_path = run.dir / "snapshots.csv"
    header = ["t", "C", "x", "v", "xprime", "energy_density"]
    write_csv(snap_path, header, _snapshot_rows(ens, pot, pp))
    run.files.append("snapshots.csv")
    ledger = []
    last = ens
    ref_err = 0.0
    C = ens.c_grid
    inner = ensemble1d.interior(ens.n_c)
    try:
        for snap in ensemble1d.evolve(ens, dt, n, pot, pp, stride):
            write_csv(snap_path, header, _snapshot_rows(snap, pot, pp), append=True)
            last = snap
            ref = _reference_x(cfg, gp, C, snap.t)
            if ref is not None:
                ref_err = max(ref_err, float(np.max(np.abs(snap.x - ref)[inner])))
            prev = next(ensemble1d.evolve(snap, -dt, 1, pot, pp))
            nxt = next(ensemble1d.evolve(snap, dt, 1, pot, pp))
            trio = [replace(prev, t=snap.t - dt), snap, nxt]
            reps = [conservation.energy_balance(trio, pot, pp), conservation.c_balance(trio, pot, pp)]
            if isinstance(pot, Free):
                reps.append(conservation.momentum_balance(trio, pp))
            ledger += [r.row() for r in reps]
    except (BlowupError, CrossingError) as exc:
        run.metrics.update(last_good_t=last.t, steps_planned=n, dt=dt)
        run.csv("balance.csv", ["t", "law", "residual_max", "residual_rms", "edge_flux"],
                [[r["t"], r["law"], r["residual_max"], r["residual_rms"], r["edge_flux"]] for r in ledger])
        raise _RunFailure(EXIT_BLOWUP, "blowup", str(exc), {"last_good_snapshot": str(snap_path),
                                                              "last_good_t": last.t}) from exc
    run.csv("balance.csv", ["t", "law", "residual_max", "residual_rms", "edge_flux"],
            [[r["t"], r["law"], r["residual_max"], r["residual_rms"], r["edge_flux"]] for r in ledger])
    df = reconstruct.density_from_ensemble(last)
    run.csv("density.csv", ["t", "x", "rho"], ([df.t, x, r] for x, r in zip(df.x_grid, df.rho)), dat=True)
    run.metrics.update(steps=n, dt=dt, t_final=last.t, density_integral=df.integral(),
                       min_xprime=float(np.min(ensemble1d.c_derivatives(last).d1)))
    if _reference_x(cfg, gp, C, last.t) is not None:
        run.metrics["max_error_vs_analytic"] = ref_err
        tol = cfg.tolerances.max_error * gp.a
        run.check("trajectories_vs_analytic", ref_err, tol, ref_err <= tol)


def _analytic_levels(cfg: ScenarioConfig):
    pp = cfg.physical()
    pot = cfg.potential_obj()
    gp = cfg.gaussian()
    t = cfg.analytic.t
    levels = [int(n) for n in cfg.analytic.levels]
    C0 = ensemble1d.c_grid(levels[0], cfg.grid.epsilon)
    window = (C0[4], C0[-5])
    out = []
    for n in levels:
        dc = (1.0 - 2.0 * cfg.grid.epsilon) / (n - 1)
        dt = cfg.analytic.dt_factor * dc

        def make(tt):
            if cfg.potential.kind == "harmonic":
                e = ensemble1d.ho_gaussian_ensemble(gp, pp, cfg.potential.omega, n, cfg.grid.epsilon, tt)
            else:
                e = ensemble1d.free_gaussian_ensemble(gp, pp, n, cfg.grid.epsilon, tt)
            return replace(e, coordinate=cfg.grid.coordinate)

        trio = [make(t - dt), make(t), make(t + dt)]
        row = {"n_c": n, "dC": dc, "dt": dt,
               "pde": ensemble1d.pde_residual(trio, pot, pp).max,
               "energy": conservation.energy_balance(trio, pot, pp, window).residual_max,
               "c_balance": conservation.c_balance(trio, pot, pp, window).residual_max}
        if isinstance(pot, Free):
            row["momentum"] = conservation.momentum_balance(trio, pp, c_window=window).residual_max
        out.append(row)
    return out


def _analytic_check(run: Run):
    cfg = run.cfg
    if cfg.potential.kind not in ("free", "harmonic"):
        raise DomainError("analytic-check needs a free or harmonic potential")
    table = _analytic_levels(cfg)
    laws = [k for k in table[0] if k not in ("n_c", "dC", "dt")]
    rows = []
    worst = math.inf
    for i, row in enumerate(table):
        ratios = {law: (table[i - 1][law] / row[law] if i else math.nan) for law in laws}
        rows.append([row["n_c"], row["dC"], row["dt"]] + [row[l] for l in laws] + [ratios[l] for l in laws])
        if i:
            worst = min(worst, *(ratios[l] for l in laws if l != "pde"))
    run.csv("convergence.csv", ["n_c", "dC", "dt"] + laws + [f"ratio_{l}" for l in laws], rows, dat=True)
    run.metrics.update(min_balance_ratio=worst, levels=[r["n_c"] for r in table])
    run.check("balance_convergence", worst, cfg.tolerances.order_ratio, worst >= cfg.tolerances.order_ratio)


def swirl_free_velocity(x, p=(0.5, -0.3), kappa=0.1):
    """Gradient of p.x + kappa sin(x1) cos(x2/2); curl-free but not affine."""
    x1, x2 = x
    return np.stack([p[0] + kappa * np.cos(x1) * np.cos(0.5 * x2),
                     p[1] - 0.5 * kappa * np.sin(x1) * np.sin(0.5 * x2)])


def _manyd(run: Run):
    cfg = run.cfg
    pp = cfg.physical()
    if cfg.potential.kind != "free":
        raise DomainError("manyd-run currently supports the free particle only")
    g1 = cfg.gaussian()
    md = cfg.manyd
    g2 = analytic.GaussianParams(md.x0, md.p0, md.t0, md.a)
    ens = manyd.product_gaussian_ensemble((g1, g2), pp, md.n_c, cfg.grid.epsilon, t=0.0, rotation=md.rotation)
    if md.velocity == "swirl-free":
        ens = manyd.EnsembleManyD(ens.t, ens.epsilon, ens.c_axes, ens.x, swirl_free_velocity(ens.x), ens.coordinate)
    mask = manyd.interior_mask(ens.shape, 2)
    curl0 = float(np.max(np.abs(manyd.curl(ens)[mask])))
    dt = manyd.cfl_timestep_manyd(ens, pp, cfg.stepping.safety)
    if cfg.stepping.dt:
        dt = min(dt, cfg.stepping.dt)
    n_steps = max(1, int(math.ceil(cfg.stepping.t_final / dt - 1e-9)))
    dt = cfg.stepping.t_final / n_steps
    stride = cfg.stepping.snapshot_stride or n_steps
    snaps = [ens, *manyd.evolve_manyd(ens, dt, n_steps, None, pp, stride)]
    det_min = min(float(manyd.jacobi_field(s).detJ.min()) for s in snaps)
    curl_max = max(float(np.max(np.abs(manyd.curl(s)[mask]))) for s in snaps)
    last = snaps[-1]
    jf = manyd.jacobi_field(last)
    C1, C2 = last.mesh()
    run.csv("nodes.csv", ["t", "C1", "C2", "x1", "x2", "detJ"],
            ([last.t, a, b, x1, x2, d] for a, b, x1, x2, d in
             zip(C1.ravel(), C2.ravel(), last.x[0].ravel(), last.x[1].ravel(), jf.detJ.ravel())), dat=True)
    run.metrics.update(detJ_min=det_min, curl_initial=curl0, curl_max=curl_max,
                       curl_ratio=curl_max / curl0 if curl0 > 0 else math.inf, t_final=last.t, steps=n_steps)
    run.check("detJ_positive", det_min, 0.0, det_min > 0)
    if md.velocity == "analytic" and md.rotation == 0.0:
        errs, sep = [], 0.0
        for axis, g in enumerate((g1, g2)):
            e1 = ensemble1d.free_gaussian_ensemble(g, pp, md.n_c, cfg.grid.epsilon)
            r1 = list(ensemble1d.evolve(e1, dt, n_steps, Free(), pp, stride=n_steps))[-1]
            errs.append(float(np.max(np.abs(r1.x - analytic.free_gaussian_x(g, pp, r1.c_grid, r1.t)))))
            other = last.x[axis] - (r1.x[:, None] if axis == 0 else r1.x[None, :])
            sep = max(sep, float(np.max(np.abs(other))))
        err1 = max(errs)
        run.metrics.update(error_1d=err1, separability_error=sep)
        lim = cfg.tolerances.separability_factor * err1
        run.check("separability", sep, lim, sep <= lim)
    elif md.velocity == "swirl-free":
        lim = cfg.tolerances.curl_factor * curl0
        run.check("curl_preserved", curl_max, lim, curl_max <= lim)


def eckart_packet_comparison(cfg: ScenarioConfig):
    """Ensemble and grid-solver densities for the same Eckart packet at t_final."""
    pp = cfg.physical()
    pot = cfg.potential_obj()
    ens, gp = _initial_ensemble(cfg)
    snaps = ensemble1d.run(ens, cfg.stepping.t_final, pot, pp, dt=cfg.stepping.dt or None,
                           safety=cfg.stepping.safety)
    e = snaps[-1]
    o = cfg.oracle
    x = oracle.uniform_grid(o.x_min, o.x_max, o.n_x)
    w = oracle.tdse_propagate(oracle.gaussian_wavefield(gp, pp, x), pot, pp, o.dt, e.t, o.scheme)
    dfe = reconstruct.density_from_ensemble(e)
    dft = reconstruct.DensityField(w.x_grid, w.density(), w.t)
    return dfe, dft, reconstruct.compare_densities(dfe, dft)


def _oracle_compare(run: Run):
    cfg = run.cfg
    dfe, dft, cmp = eckart_packet_comparison(cfg)
    run.csv("density_ensemble.csv", ["t", "x", "rho"], ([dfe.t, x, r] for x, r in zip(dfe.x_grid, dfe.rho)),
            dat=True)
    run.csv("density_tdse.csv", ["t", "x", "rho"], ([dft.t, x, r] for x, r in zip(dft.x_grid, dft.rho)))
    run.metrics.update(cmp)
    run.check("density_l1", cmp["l1"], cfg.tolerances.l1, cmp["l1"] <= cfg.tolerances.l1)
    run.check("density_overlap", cmp["overlap"], cfg.tolerances.overlap, cmp["overlap"] >= cfg.tolerances.overlap)


RUNNERS = {"tise-scatter": _scatter, "tdqm-run": _tdqm, "analytic-check": _analytic_check,
           "manyd-run": _manyd, "oracle-compare": _oracle_compare}


class _RunFailure(Exception):
    def __init__(self, code, category, message, extra=None):
        super().__init__(message)
        self.code, self.category, self.extra = code, category, extra or {}


def output_root(cfg: ScenarioConfig) -> Path:
    return Path(os.environ.get("QTRAJ_OUT") or cfg.output.dir)


def run_scenario(cfg: ScenarioConfig, out_dir: Path | None = None) -> tuple[int, dict]:
    """Execute one scenario; returns (exit code, summary dict)."""
    root = out_dir or output_root(cfg) / (cfg.output.name or cfg.scenario)
    run = Run(cfg, root)
    (root / "config.resolved").write_text(format_config(cfg))
    run.files.append("config.resolved")
    try:
        RUNNERS[cfg.scenario](run)
    except _RunFailure as exc:
        return exc.code, run.summary("failed", {"category": exc.category, "message": str(exc)}, exc.extra)
    except (BlowupError, CrossingError) as exc:
        return EXIT_BLOWUP, run.summary("failed", {"category": "blowup", "message": str(exc)})
    except IntegrationError as exc:
        return EXIT_INTEGRATION, run.summary("failed", {"category": "integration", "message": str(exc)})
    except (DomainError, InputError, SingularityError) as exc:
        return EXIT_PRECONDITION, run.summary("failed", {"category": "precondition", "message": str(exc)})
    summary = run.summary()
    return EXIT_OK, summary


def _load(path: str, overrides=None) -> ScenarioConfig:
    return validate_config(Path(path).read_text(), overrides)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qtraj", description="Quantum trajectory scenario runner")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("config")
    p_run.add_argument("--strict", action="store_true", help="exit 1 when any check fails")
    p_val = sub.add_parser("validate", help="check a config and print it fully resolved")
    p_val.add_argument("config")
    p_sw = sub.add_parser("sweep", help="run a scenario once per value of one key")
    p_sw.add_argument("config")
    p_sw.add_argument("--param", required=True)
    p_sw.add_argument("--values", required=True, help="comma-separated values")
    p_sw.add_argument("--strict", action="store_true")
    args = ap.parse_args(argv)

    try:
        if args.cmd == "validate":
            cfg = _load(args.config)
            sys.stdout.write(format_config(cfg))
            return EXIT_OK
        if args.cmd == "run":
            cfg = _load(args.config)
            t0 = time.perf_counter()
            code, summary = run_scenario(cfg)
            _report(cfg, summary, time.perf_counter() - t0)
            if code == EXIT_OK and args.strict and not summary["all_passed"]:
                return EXIT_CHECKS
            return code
        # sweep
        base = _load(args.config)
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        cfgs = [_load(args.config, {args.param: v}) for v in values]
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    root = output_root(base) / (base.output.name or base.scenario)
    rows, worst = [], EXIT_OK
    for v, cfg in zip(values, cfgs):
        code, summary = run_scenario(cfg, root / f"{args.param}={v}")
        worst = max(worst, code)
        metrics = {k: m for k, m in summary["metrics"].items() if isinstance(m, (int, float))}
        rows.append((v, code, summary["all_passed"], metrics))
        _report(cfg, summary, None, label=f"{args.param}={v}")
    keys = sorted({k for *_, m in rows for k in m})
    write_csv(root / "sweep.csv", [args.param, "exit_code", "all_passed"] + keys,
              ([v, code, ok] + [m.get(k, math.nan) for k in keys] for v, code, ok, m in rows))
    if worst == EXIT_OK and args.strict and not all(ok for _, _, ok, _ in rows):
        return EXIT_CHECKS
    return worst


def _report(cfg, summary, elapsed, label=None):
    head = label or cfg.scenario
    status = summary["status"]
    line = f"[{head}] {status}"
    if elapsed is not None:
        line += f" in {elapsed:.1f}s"
    print(line)
    for name, c in summary["checks"].items():
        print(f"  {'PASS' if c['pass'] else 'FAIL'} {name}: {c['value']:.3e} (tolerance {c['tolerance']:.3e})")
    if "error" in summary:
        print(f"  error ({summary['error']['category']}): {summary['error']['message']}")


if __name__ == "__main__":
    sys.exit(main())
