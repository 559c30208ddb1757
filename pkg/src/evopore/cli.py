"""Command-line entry point: build tensor tables, run the macro and micro
solvers, execute the scale-convergence study, and validate the transform and
kinetics properties.

Exit codes: 0 all checks pass, 1 a named check failed, 2 configuration error,
3 numerical failure.  Every command writes a manifest (config hash, versions,
check results) next to its outputs; outputs are byte-deterministic for a
fixed config and seed except the separate timing file.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import DEFAULT_CONFIG, ExperimentConfig, load_config, parse_config
from .errors import CheckFailure, ConfigError, MeshQualityError, NumericalError
from .kinetics import validate_structure
from .macro import MacroGrid, MacroSolver, ledger_csv, mass_balance, snapshot_csv
from .micro import (MicroSimulator, build_micro_mesh, cell_series_csv,
                    micro_snapshot_csv, unfold_compare)
from .registry import build_field, build_source
from .unitcell import EffectiveTensorTable, build_reference_mesh, table_checks, tabulate
from .validate import full_validation


@dataclass
class ConvergenceRow:
    epsilon: float
    u_l2_error: float
    r_l2_error: float
    runtime: float


@dataclass
class ConvergenceReport:
    rows: list
    u_slope: float | None
    r_slope: float | None
    u_decreasing: bool
    r_decreasing: bool
    slopes_skipped: bool

    @property
    def passed(self) -> bool:
        return self.u_decreasing and self.r_decreasing


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def _write(outdir: Path, name: str, text: str, outputs: list) -> None:
    (outdir / name).write_text(text)
    outputs.append(name)


def _write_report(outdir: Path, checks: list[dict], outputs: list) -> None:
    lines = [json.dumps(c, sort_keys=True) for c in checks]
    lines.append(json.dumps({"summary": "pass" if all(c["passed"] for c in checks) else "fail",
                             "n_checks": len(checks)}, sort_keys=True))
    _write(outdir, "report.jsonl", "\n".join(lines) + "\n", outputs)


def _write_manifest(outdir: Path, command: str, cfg: ExperimentConfig | None,
                    checks: list[dict], outputs: list) -> None:
    manifest = {
        "command": command,
        "config_sha256": cfg.sha256 if cfg else None,
        "versions": {"evopore": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "checks": {c["check"]: c["passed"] for c in checks},
        "outputs": sorted(outputs),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def _source_of(cfg: ExperimentConfig):
    if cfg.source_name == "zero" and not cfg.source_params:
        return None
    return build_source(cfg.source_name, cfg.source_params)


def _table_of(cfg: ExperimentConfig, quiet: bool) -> EffectiveTensorTable:
    if cfg.table_path:
        _say(quiet, f"loading tensor table from {cfg.table_path}")
        return EffectiveTensorTable.from_csv(Path(cfg.table_path).read_text())
    _say(quiet, f"tabulating effective tensors on {cfg.table_radii.size} radii")
    return tabulate(cfg.params, cfg.table_radii, cfg.n_boundary, cfg.target_h,
                    cfg.diffusion, cfg.cg_tol)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_cell_table(cfg: ExperimentConfig, outdir: Path, quiet: bool) -> list[dict]:
    table = tabulate(cfg.params, cfg.table_radii, cfg.n_boundary, cfg.target_h,
                     cfg.diffusion, cfg.cg_tol)
    outputs = []
    _write(outdir, "table.csv", table.to_csv(), outputs)
    checks = [{"check": name, "passed": ok, "value": None}
              for name, ok in table_checks(table).items()]
    _write_report(outdir, checks, outputs)
    _write_manifest(outdir, "cell-table", cfg, checks, outputs)
    _say(quiet, f"wrote {outdir / 'table.csv'} ({cfg.table_radii.size} radii)")
    return checks


def cmd_macro_run(cfg: ExperimentConfig, outdir: Path, quiet: bool) -> list[dict]:
    table = _table_of(cfg, quiet)
    grid = MacroGrid.create(cfg.macro_n)
    solver = MacroSolver(grid, table, cfg.spec, _source_of(cfg), cfg.diffusion,
                         cg_tol=cfg.cg_tol)
    state = solver.init(build_field(cfg.u_field, cfg.u_params),
                        build_field(cfg.r_field, cfg.r_params))
    outputs = []
    states = [state]
    _write(outdir, "snapshot_000000.csv", snapshot_csv(grid, state), outputs)
    for step in range(1, cfg.n_steps + 1):
        try:
            state = solver.step(state, cfg.dt)
        except NumericalError as exc:
            raise NumericalError(f"macro step {step}: {exc}") from exc
        states.append(state)
        if step % cfg.snapshot_every == 0 or step == cfg.n_steps:
            _write(outdir, f"snapshot_{step:06d}.csv", snapshot_csv(grid, state), outputs)
    _write(outdir, "ledger.csv", ledger_csv(states), outputs)

    balance = mass_balance(states)
    in_box = bool(np.all((state.r >= cfg.spec.r_min) & (state.r <= cfg.spec.r_max)))
    checks = [
        {"check": "mass_ledger_defect_1e-9", "passed": balance.max_defect <= 1e-9,
         "value": balance.max_defect},
        {"check": "radii_in_box", "passed": in_box, "value": None},
    ]
    _write_report(outdir, checks, outputs)
    _write_manifest(outdir, "macro-run", cfg, checks, outputs)
    _say(quiet, f"macro run: {cfg.n_steps} steps, max ledger defect {balance.max_defect:.3e}")
    return checks


def cmd_micro_run(cfg: ExperimentConfig, outdir: Path, quiet: bool,
                  epsilon: float | None = None) -> list[dict]:
    inv = round(1.0 / epsilon) if epsilon else cfg.epsilon_inverses[0]
    reference = build_reference_mesh(cfg.params.r0, cfg.n_boundary, cfg.target_h)
    mesh = build_micro_mesh(reference, 1.0 / inv)
    sim = MicroSimulator(mesh, cfg.params, cfg.spec, _source_of(cfg), cfg.diffusion,
                         pinned_radii=cfg.micro_pinned_radii,
                         source_at_reference=cfg.micro_source_at_reference,
                         cg_tol=cfg.cg_tol)
    state = sim.init(build_field(cfg.u_field, cfg.u_params),
                     build_field(cfg.r_field, cfg.r_params))
    outputs = []
    _write(outdir, "micro_snapshot_000000.csv", micro_snapshot_csv(mesh, state), outputs)
    _write(outdir, "cells_000000.csv", cell_series_csv(mesh, state), outputs)
    ledger_rows = ["t,fluid_mass,solid_mass,flux_step,source_step,defect"]
    max_defect = 0.0
    max_rate = 0.0
    for step in range(1, cfg.n_steps + 1):
        try:
            state = sim.step(state, cfg.dt)
        except NumericalError as exc:
            raise NumericalError(f"micro step {step} (1/eps={inv}): {exc}") from exc
        max_defect = max(max_defect, state.defect)
        max_rate = max(max_rate, float(np.abs(state.radii_rate).max()))
        ledger_rows.append(",".join(f"{v:.17g}" for v in
                                    (state.t, state.fluid_mass, state.solid_mass,
                                     state.flux_step, state.source_step, state.defect)))
        if step % cfg.snapshot_every == 0 or step == cfg.n_steps:
            _write(outdir, f"micro_snapshot_{step:06d}.csv", micro_snapshot_csv(mesh, state), outputs)
            _write(outdir, f"cells_{step:06d}.csv", cell_series_csv(mesh, state), outputs)
    _write(outdir, "micro_ledger.csv", "\n".join(ledger_rows) + "\n", outputs)

    checks = [
        {"check": "transformed_mass_ledger_1e-9", "passed": max_defect <= 1e-9,
         "value": max_defect},
        {"check": "radius_rate_bound", "passed": max_rate <= cfg.spec.f_cap / cfg.spec.c_s + 1e-12,
         "value": max_rate},
    ]
    _write_report(outdir, checks, outputs)
    _write_manifest(outdir, "micro-run", cfg, checks, outputs)
    _say(quiet, f"micro run 1/eps={inv}: {cfg.n_steps} steps, max ledger defect {max_defect:.3e}")
    return checks


def run_convergence_study(cfg: ExperimentConfig, quiet: bool = True) -> ConvergenceReport:
    """Macro once, micro per epsilon, unfolded errors at the final time."""
    table = _table_of(cfg, quiet)
    grid = MacroGrid.create(cfg.macro_n)
    solver = MacroSolver(grid, table, cfg.spec, _source_of(cfg), cfg.diffusion,
                         cg_tol=cfg.cg_tol)
    macro_state = solver.init(build_field(cfg.u_field, cfg.u_params),
                              build_field(cfg.r_field, cfg.r_params))
    for _ in range(cfg.n_steps):
        macro_state = solver.step(macro_state, cfg.dt)

    reference = build_reference_mesh(cfg.params.r0, cfg.n_boundary, cfg.target_h)
    rows = []
    for inv in sorted(cfg.epsilon_inverses):
        t0 = time.perf_counter()
        mesh = build_micro_mesh(reference, 1.0 / inv)
        sim = MicroSimulator(mesh, cfg.params, cfg.spec, _source_of(cfg), cfg.diffusion,
                             cg_tol=cfg.cg_tol)
        st = sim.init(build_field(cfg.u_field, cfg.u_params),
                      build_field(cfg.r_field, cfg.r_params))
        for _ in range(cfg.n_steps):
            st = sim.step(st, cfg.dt)
        err = unfold_compare(mesh, st, grid, macro_state)
        rows.append(ConvergenceRow(1.0 / inv, err.u_l2_error, err.r_l2_error,
                                   time.perf_counter() - t0))
        _say(quiet, f"  1/eps={inv}: u_err={err.u_l2_error:.4e} r_err={err.r_l2_error:.4e}")

    rows.sort(key=lambda r: -r.epsilon)
    u_errs = np.array([r.u_l2_error for r in rows])
    r_errs = np.array([r.r_l2_error for r in rows])
    eps = np.array([r.epsilon for r in rows])
    tiny = 1e-9
    if np.all(u_errs <= tiny) and np.all(r_errs <= tiny):
        return ConvergenceReport(rows, None, None, True, True, True)
    u_slope = float(np.polyfit(np.log(eps), np.log(np.maximum(u_errs, 1e-300)), 1)[0])
    r_slope = float(np.polyfit(np.log(eps), np.log(np.maximum(r_errs, 1e-300)), 1)[0])
    return ConvergenceReport(rows, u_slope, r_slope,
                             bool(np.all(np.diff(u_errs) < 0)),
                             bool(np.all(np.diff(r_errs) < 0)), False)


def cmd_convergence(cfg: ExperimentConfig, outdir: Path, quiet: bool) -> list[dict]:
    if len(cfg.epsilon_inverses) < 3:
        raise ConfigError("convergence study needs at least 3 epsilon values")
    report = run_convergence_study(cfg, quiet)
    outputs = []
    lines = ["epsilon,u_l2_error,r_l2_error"]
    timing = ["epsilon,runtime_seconds"]
    for row in report.rows:
        lines.append(f"{row.epsilon:.17g},{row.u_l2_error:.17g},{row.r_l2_error:.17g}")
        timing.append(f"{row.epsilon:.17g},{row.runtime:.3f}")
    _write(outdir, "convergence.csv", "\n".join(lines) + "\n", outputs)
    (outdir / "timings.csv").write_text("\n".join(timing) + "\n")

    checks = [
        {"check": "u_error_strictly_decreasing", "passed": report.u_decreasing,
         "value": report.u_slope},
        {"check": "r_error_strictly_decreasing", "passed": report.r_decreasing,
         "value": report.r_slope},
    ]
    if report.slopes_skipped:
        checks.append({"check": "slope_fit_skipped_all_errors_tiny", "passed": True,
                       "value": None})
    _write_report(outdir, checks, outputs)
    _write_manifest(outdir, "convergence", cfg, checks, outputs)
    _say(quiet, f"convergence: u_slope={report.u_slope} r_slope={report.r_slope}")
    return checks


def cmd_validate(cfg: ExperimentConfig, outdir: Path, quiet: bool) -> list[dict]:
    checks = full_validation(cfg.params, cfg.spec, cfg.seed)
    outputs = []
    _write_report(outdir, checks, outputs)
    _write_manifest(outdir, "validate", cfg, checks, outputs)
    for c in checks:
        _say(quiet, f"  {'PASS' if c['passed'] else 'FAIL'} {c['check']} ({c['value']:.3e})")
    return checks


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parse_epsilon(text: str) -> float:
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="evopore",
        description="Reaction-diffusion with concentration-driven pore evolution")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "cell-table": "tabulate the radius-dependent effective diffusion tensor",
        "macro-run": "run the homogenized PDE-ODE solver",
        "micro-run": "run the resolved micro-scale solver at one epsilon",
        "convergence": "run the scale-convergence study",
        "validate": "run the transform and kinetics property suites",
    }
    for name, help_text in specs.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment config file (defaults used if omitted)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--quiet", action="store_true")
        if name == "micro-run":
            p.add_argument("--epsilon", help="cell size, e.g. 0.125 or 1/8")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config) if args.config else parse_config(DEFAULT_CONFIG)
        outdir = Path(args.out or cfg.out_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        if args.command == "cell-table":
            checks = cmd_cell_table(cfg, outdir, args.quiet)
        elif args.command == "macro-run":
            checks = cmd_macro_run(cfg, outdir, args.quiet)
        elif args.command == "micro-run":
            eps = _parse_epsilon(args.epsilon) if args.epsilon else None
            checks = cmd_micro_run(cfg, outdir, args.quiet, eps)
        elif args.command == "convergence":
            checks = cmd_convergence(cfg, outdir, args.quiet)
        else:
            checks = cmd_validate(cfg, outdir, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"check failure: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, MeshQualityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

    if all(c["passed"] for c in checks):
        return 0
    for c in checks:
        if not c["passed"]:
            print(f"check failed: {c['check']} (value {c.get('value')})", file=sys.stderr)
    return 1
