"""Experiment driver: INI configs in, CSV artifacts and a pass/fail summary out.

Commands:
    measureflow run <config|scenario>       solve + verify, write CSVs
    measureflow validate <config|scenario>  coefficient assumption report only
    measureflow ladder <config|scenario>    3-level refinement study

Configs are flat INI sections with key=value entries (values use the law
mini-syntax of the laws module); parse errors report file:line.  Scenario
names (stationary_smoke, heat_gaussian, gibbs_relaxation, barenblatt_m2_1d,
barenblatt_m3_2d, gpme_drift, matrix_diagonal_smoke) resolve to packaged
configs.  Exit codes: 0 all enabled checks pass, 1 check failure, 2 usage or
parse error.  Outputs are RFC-4180 CSV with 17-significant-digit floats;
identical configs produce byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .analytic import BarenblattProfile, barenblatt, gaussian_field
from .energy import EnergyFunctional
from .geometry import BumpProfile, profile_field
from .grid import DensityField, Grid, lebesgue_integrate
from .laws import (
    Potential,
    ScalarLaw,
    parse_potential,
    parse_scalar_law,
    required_clauses,
    validate_balance_condition,
    validate_coefficient_assumptions,
    validate_diagonal_assumptions,
)
from .solver import ModelLaws, SolverConfig, Trajectory, discrete_stationary_state, integrate_path
from .verify import VerificationReport, VerifyOptions, run_verification

__all__ = ["main", "RunConfig", "ConfigError", "load_config", "scenario_path",
           "run_from_config", "SCENARIOS"]

SCENARIOS = (
    "stationary_smoke",
    "heat_gaussian",
    "gibbs_relaxation",
    "barenblatt_m2_1d",
    "barenblatt_m3_2d",
    "gpme_drift",
    "matrix_diagonal_smoke",
)


class ConfigError(ValueError):
    """Config parse/validation failure with file:line context."""

    def __init__(self, message: str, path: str = "", line: int = 0):
        loc = f"{path}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(loc + message)


# ---------------------------------------------------------------------------
# INI parsing (line-addressable errors)
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    path: str
    sections: dict = dc_field(default_factory=dict)

    def section(self, name: str) -> dict:
        if name not in self.sections:
            raise ConfigError(f"missing [{name}] section", self.path)
        return self.sections[name]

    def get(self, section: str, key: str, default=None, required: bool = False):
        sec = self.section(section) if (required or section in self.sections) else {}
        if key in sec:
            return sec[key][0]
        if required:
            raise ConfigError(f"missing key {key!r} in [{section}]", self.path)
        return default

    def get_typed(self, section: str, key: str, conv, default=None,
                  required: bool = False):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            line = self.sections[section][key][1]
            raise ConfigError(f"bad value for {key!r}: {exc}", self.path, line) from exc


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _to_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"expected boolean, got {raw!r}")


def _to_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(p) for p in raw.split(","))


def _to_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(p) for p in raw.split(","))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path))
    cfg = RunConfig(str(path))
    current: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError("malformed section header", cfg.path, lineno)
            current = line[1:-1].strip()
            cfg.sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError("expected key=value", cfg.path, lineno)
        if current is None:
            raise ConfigError("key=value before any [section]", cfg.path, lineno)
        key, val = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", cfg.path, lineno)
        cfg.sections[current][key] = (val, lineno)
    return cfg


def scenario_path(name: str) -> Path:
    ref = resources.files("measureflow").joinpath(f"scenarios/{name}.ini")
    with resources.as_file(ref) as p:
        return Path(p)


def resolve_config_arg(arg: str) -> Path:
    if arg.startswith("scenario="):
        arg = arg.split("=", 1)[1]
    if arg in SCENARIOS:
        return scenario_path(arg)
    return Path(arg)


# ---------------------------------------------------------------------------
# assembly from config
# ---------------------------------------------------------------------------

def build_grid(cfg: RunConfig) -> Grid:
    dim = cfg.get_typed("grid", "dim", int, required=True)
    lo = cfg.get_typed("grid", "lo", _to_floats, required=True)
    hi = cfg.get_typed("grid", "hi", _to_floats, required=True)
    cells = cfg.get_typed("grid", "cells", _to_ints, required=True)
    if dim == 1:
        return Grid.line(lo[0], hi[0], cells[0])
    if dim == 2:
        lo2 = lo if len(lo) == 2 else lo * 2
        hi2 = hi if len(hi) == 2 else hi * 2
        c2 = cells if len(cells) == 2 else cells * 2
        return Grid.box(lo2, hi2, c2)
    raise ConfigError(f"dim must be 1 or 2, got {dim}", cfg.path)


def build_model(cfg: RunConfig):
    """Returns (mode, laws: ModelLaws, fnl: EnergyFunctional)."""
    mode = cfg.get("model", "mode", required=True)
    phi = parse_potential(cfg.get("model", "potential", "none"))
    if mode == "classical":
        m = cfg.get_typed("model", "m", float, required=True)
        fnl = EnergyFunctional.classical(m)
        laws = ModelLaws(ScalarLaw.power(m), ScalarLaw.const(1.0), Potential.none())
        return mode, laws, fnl
    if mode == "general":
        beta = parse_scalar_law(cfg.get("model", "beta", required=True))
        b = parse_scalar_law(cfg.get("model", "b", required=True))
        fnl = EnergyFunctional.general(beta, b, phi)
        return mode, ModelLaws(beta, b, phi), fnl
    if mode == "matrix_diagonal":
        psi = parse_scalar_law(cfg.get("model", "psi", required=True))
        b_diag = parse_scalar_law(cfg.get("model", "b_diag", required=True))
        if psi.kind != "const" or b_diag.kind != "const":
            raise ConfigError("matrix_diagonal runs support constant psi and "
                              "b_diag (the solver needs a closed-form flux)",
                              cfg.path)
        fnl = EnergyFunctional.matrix_diagonal(psi, b_diag, phi)
        beta_eff = ScalarLaw.linear(psi.params[0] * b_diag.params[0])
        return mode, ModelLaws(beta_eff, b_diag, phi), fnl
    raise ConfigError(f"unknown mode {mode!r}", cfg.path)


def build_init(cfg: RunConfig, grid: Grid, fnl: EnergyFunctional,
               laws: ModelLaws, scheme_cfg: SolverConfig) -> DensityField:
    spec = cfg.get("init", "kind", required=True)
    head, _, rest = spec.partition(":")
    args = {}
    if rest:
        for part in rest.split(","):
            k, _, v = part.partition("=")
            args[k.strip()] = v.strip()
    if head == "gaussian":
        return gaussian_field(grid, float(args.get("mean", 0.0)),
                              float(args.get("sigma", 1.0)))
    if head == "barenblatt":
        m = float(args.get("m", 2.0))
        t0 = float(args.get("t0", 1.0))
        return barenblatt(BarenblattProfile.create(m, grid.dim), t0, grid)
    if head == "gibbs":
        if args.get("discrete", "false").lower() in _TRUE:
            return discrete_stationary_state(laws, grid, scheme_cfg.drift_flux)
        return fnl.stationary_state(grid).density
    if head == "uniform":
        return DensityField.from_values(grid, np.ones(grid.shape))
    if head == "spike":
        width = float(args.get("width_cells", 3.0)) * min(grid.spacing)
        center = tuple(float(c) for c in
                       args.get("center", ",".join("0" * grid.dim)).split(","))
        bump = BumpProfile(center if len(center) == grid.dim else (0.0,) * grid.dim,
                           width)
        return DensityField.from_values(grid, profile_field(bump, grid))
    if head == "file":
        data = np.loadtxt(rest)
        return DensityField.from_values(grid, data.reshape(grid.shape))
    raise ConfigError(f"unknown init kind {head!r}", cfg.path)


def build_solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(
        t0=cfg.get_typed("time", "t0", float, required=True),
        t1=cfg.get_typed("time", "t1", float, required=True),
        scheme=cfg.get("time", "scheme", "explicit_euler"),
        cfl_safety=cfg.get_typed("time", "cfl_safety", float, 0.45),
        max_dt=cfg.get_typed("time", "max_dt", float, math.inf),
        store_every=cfg.get_typed("time", "store_every", int, 1),
        drift_flux=cfg.get("time", "drift_flux", "upwind"),
        enforce_margin=cfg.get_typed("time", "enforce_margin", _to_bool, True),
    )


def build_verify_options(cfg: RunConfig) -> VerifyOptions:
    if "verify" not in cfg.sections:
        return VerifyOptions()
    g = cfg.get_typed
    return VerifyOptions(
        battery_size=g("verify", "battery", int, 8),
        residual_sample=g("verify", "residual_sample", int, 120),
        residual_tol=g("verify", "residual_tol", float, 5e-3),
        enable_residuals=g("verify", "enable_residuals", _to_bool, True),
        enable_lyapunov=g("verify", "enable_lyapunov", _to_bool, True),
        enable_dissipation=g("verify", "enable_dissipation", _to_bool, True),
        enable_ladder=g("verify", "enable_ladder", _to_bool, False),
        richardson=g("verify", "richardson", _to_bool, False),
        compare_stationary=g("verify", "compare_stationary", _to_bool, False),
        stationary_l1_tol=g("verify", "stationary_l1_tol", float, 1e-3),
        stationary_grad_tol=g("verify", "stationary_grad_tol", float, 1e-6),
        dissipation_tol=g("verify", "dissipation_tol", float, 5e-2),
        seed=g("verify", "seed", int, 0),
    )


# ---------------------------------------------------------------------------
# CSV artifacts
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_artifacts(outdir: Path, traj: Trajectory,
                    report: VerificationReport, stride: int = 1) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for k in range(0, len(traj), stride):
        state = traj.states[k]
        rows.append((float(traj.times[k]), state.mass,
                     float(state.values.min()), float(state.values.max()),
                     float(report.energies[k]), float(report.dissipation[k])))
    _write_csv(outdir / "trajectory.csv",
               ["t", "mass", "min_u", "max_u", "energy", "dissipation_rate"], rows)
    _write_csv(outdir / "residuals.csv",
               ["t", "zeta_id", "gf_residual", "rhs_gap"],
               [(r.t, r.zeta_id, r.residual, r.rhs_gap)
                for r in report.residual_records])
    _write_csv(outdir / "summary.csv",
               ["check", "status", "tolerance", "value"],
               [(c.name, c.status, c.tolerance, c.value) for c in report.checks])
    if report.ladder is not None:
        rows = []
        for ti, t in enumerate(report.ladder.times):
            for ci, n in enumerate(report.ladder.counts):
                rows.append((t, n, float(report.ladder.residuals[ti, ci])))
        _write_csv(outdir / "ladder.csv", ["t", "n_generators", "residual"], rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_from_config(cfg: RunConfig, refine: int = 1):
    """Assemble and run a scenario; returns (traj, fnl, laws, report, opts)."""
    for required in ("model", "grid", "time", "init"):
        cfg.section(required)
    grid = build_grid(cfg)
    if refine != 1:
        cells = tuple(int(n * refine) for n in grid.cells)
        grid = Grid(grid.dim, grid.origin, grid.extent, cells)
    mode, laws, fnl = build_model(cfg)
    scfg = build_solver_config(cfg)
    u0 = build_init(cfg, grid, fnl, laws, scfg)
    opts = build_verify_options(cfg)
    traj = integrate_path(u0, laws, scfg, observers=())
    report = run_verification(traj, fnl, opts)
    return traj, fnl, laws, report, opts


def _cmd_run(args) -> int:
    cfg = load_config(resolve_config_arg(args.config))
    if args.store_every:
        cfg.sections.setdefault("time", {})["store_every"] = (str(args.store_every), 0)
    if args.seed is not None:
        cfg.sections.setdefault("verify", {})["seed"] = (str(args.seed), 0)
    traj, fnl, laws, report, opts = run_from_config(cfg)
    outdir = Path(args.out or cfg.get("output", "directory", "out"))
    stride = cfg.get_typed("output", "csv_stride", int, 1)
    write_artifacts(outdir, traj, report, stride)
    for c in report.checks:
        print(f"{c.name:32s} {c.status:5s} value={c.value:.6g} tol={c.tolerance:.3g}")
    print(f"artifacts written to {outdir}")
    return 0 if report.passed else 1


def _cmd_validate(args) -> int:
    cfg = load_config(resolve_config_arg(args.config))
    mode = cfg.get("model", "mode", required=True)
    grid = build_grid(cfg)
    if mode == "classical":
        print("classical-diffusion pathway: coefficient assumptions not required")
        return 0
    _, laws, fnl = build_model(cfg)
    if mode == "matrix_diagonal":
        psi = parse_scalar_law(cfg.get("model", "psi", required=True))
        b_diag = parse_scalar_law(cfg.get("model", "b_diag", required=True))
        report = validate_diagonal_assumptions(psi, b_diag)
    else:
        variant = cfg.get("model", "variant", "lower")
        report = validate_coefficient_assumptions(
            laws.beta, laws.b, laws.phi, grid, variant=variant)
    for line in report.lines():
        print(line)
    balance = validate_balance_condition((report.gamma, report.gamma1),
                                         report.b0, laws.phi, grid)
    print(f"balance_condition                {'pass' if balance.ok else 'FAIL'}"
          " (informational)")
    confined = laws.phi.is_confining and \
        cfg.get("init", "kind", "gaussian").startswith("gibbs")
    required = required_clauses(report.variant if mode == "general" else "lower",
                                confined=confined)
    ok = report.passed(required)
    print(f"required clauses {'satisfied' if ok else 'NOT satisfied'}: "
          + ", ".join(required))
    return 0 if ok else 1


def _cmd_ladder(args) -> int:
    cfg = load_config(resolve_config_arg(args.config))
    outdir = Path(args.out or cfg.get("output", "directory", "out"))
    outdir.mkdir(parents=True, exist_ok=True)
    levels = [0.5, 1.0, 2.0]
    rows = []
    hs, qs = [], []
    for lv in levels:
        traj, fnl, laws, report, opts = run_from_config(cfg, refine=lv)
        h = min(traj.grid.spacing)
        q = report.residual_quantile(0.90)
        hs.append(h)
        qs.append(max(q, 1e-300))
        rows.append((h, q, float(report.energies[-1]),
                     report.dissipation_balance[2] if report.dissipation_balance else 0.0))
        print(f"h={h:.6g}  q90_residual={q:.6g}")
    slope = float(np.polyfit(np.log(hs), np.log(qs), 1)[0])
    _write_csv(outdir / "ladder_refinement.csv",
               ["h", "q90_residual", "final_energy", "dissipation_gap"], rows)
    print(f"refinement slope {slope:.3f}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="measureflow",
        description="Finite-volume laboratory for generalized porous-medium "
                    "flows with energy verification.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", _cmd_run), ("validate", _cmd_validate),
                     ("ladder", _cmd_ladder)):
        p = sub.add_parser(name)
        p.add_argument("config", help="config path or scenario name")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--store-every", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=fn)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime check failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
