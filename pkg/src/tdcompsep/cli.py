"""Command-line interface: ``tdcompsep simulate | solve | sweep``.

Exit codes: 0 success, 1 a system did not converge under ``policy=abort``,
2 invalid configuration or input.  A JSON file given with ``--config``
overrides the corresponding flags; unknown keys are rejected.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import betas as bundled_betas
from .archive import load_archive, save_archive
from .driver import STRATEGIES, BetaSequence, SolverConfig, run_sequence, sweep_recycling_params
from .errors import InvalidConfiguration, InvalidParameter, NotConverged
from .simulator import SimulationConfig, simulate

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INVALID = 0, 1, 2

HISTORY_HEADER = ["system_index", "iteration", "relative_residual"]
SUMMARY_HEADER = ["strategy", "iterations", "matvecs_deflation", "matvecs_total", "wall_time"]
SWEEP_HEADER = ["dim_p", "k", "iterations", "deflation", "total"]

SOLVE_RUN_KEYS = {"archive", "betas", "out", "n_systems", "compare"}
SWEEP_RUN_KEYS = {"archive", "betas", "out", "n_systems", "k_list", "dimp_list"}
SIMULATE_RUN_KEYS = {"out"}


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_simulation_flags(p):
    d = SimulationConfig.__dataclass_fields__
    p.add_argument("--rows", dest="patch_rows", type=int, default=d["patch_rows"].default)
    p.add_argument("--cols", dest="patch_cols", type=int, default=d["patch_cols"].default)
    p.add_argument("--sweeps", dest="sweeps_per_subset", type=int,
                   default=d["sweeps_per_subset"].default)
    p.add_argument("--layout", choices=("crossed", "uniform"), default=d["layout"].default)
    p.add_argument("--sigma-rms", dest="sigma_rms", type=float, default=d["sigma_rms"].default)
    p.add_argument("--f-apo-ratio", dest="f_apo_ratio", type=float,
                   default=d["f_apo_ratio"].default)
    p.add_argument("--sample-rate", dest="sample_rate", type=float,
                   default=d["sample_rate"].default)
    p.add_argument("--block-length", dest="block_length", type=int, default=None)
    p.add_argument("--seed", type=int, default=d["seed"].default)
    p.add_argument("--noiseless", action="store_true")


def _add_solver_flags(p):
    d = SolverConfig.__dataclass_fields__
    p.add_argument("--archive", required=False, help="simulation archive directory")
    p.add_argument("--betas", required=False,
                   help="beta CSV file (header beta_d,beta_s) or a bundled name: "
                        + ", ".join(sorted(bundled_betas.FILES)))
    p.add_argument("--n-systems", dest="n_systems", type=int, default=None)
    p.add_argument("--guess", choices=("zero", "continuation", "adapted"), default=d["guess"].default)
    p.add_argument("--recycling", choices=("off", "ritz", "harmonic"),
                   default=d["recycling"].default)
    p.add_argument("--variant", choices=("def1", "adef2"), default=d["variant"].default)
    p.add_argument("--k", type=int, default=d["k"].default)
    p.add_argument("--dim-p", dest="dim_p", type=int, default=d["dim_p"].default)
    p.add_argument("--rotation", action="store_true", help="augment with rotated partners")
    p.add_argument("--reorthogonalize", action="store_true")
    p.add_argument("--skip-two-level", dest="skip_two_level", action="store_true")
    p.add_argument("--tol", type=float, default=d["tol"].default)
    p.add_argument("--maxit", type=int, default=d["maxit"].default)
    p.add_argument("--policy", choices=("continue", "abort"), default=d["policy"].default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdcompsep", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulation archive")
    p.add_argument("--out", help="output archive directory")
    p.add_argument("--config", help="JSON file overriding flags")
    _add_simulation_flags(p)

    p = sub.add_parser("solve", help="solve a beta sequence and write reports")
    p.add_argument("--out", help="output directory for histories and summary")
    p.add_argument("--config", help="JSON file overriding flags")
    p.add_argument("--compare", action="store_true",
                   help="run the zero, continuation, adapted and recycle+adapted strategies")
    _add_solver_flags(p)

    p = sub.add_parser("sweep", help="grid over k and dim_p on the first systems")
    p.add_argument("--out", help="output CSV file")
    p.add_argument("--config", help="JSON file overriding flags")
    p.add_argument("--k-list", dest="k_list", type=_int_list, default=[6, 10])
    p.add_argument("--dimp-list", dest="dimp_list", type=_int_list, default=[20, 50, 100])
    _add_solver_flags(p)
    p.set_defaults(n_systems=10, guess="adapted", recycling="ritz")
    return parser


def _merge_config(args, allowed: set):
    """Apply the ``--config`` JSON over the parsed flags."""
    values = vars(args).copy()
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - allowed
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    return values


def _pick(values, cls):
    names = {f.name for f in fields(cls)}
    return {k: v for k, v in values.items() if k in names}


def _require(values, *names):
    for n in names:
        if not values.get(n):
            raise UsageError(f"missing required setting '{n}'")


def _load_betas(source) -> BetaSequence:
    path = Path(source)
    if not path.exists() and source in bundled_betas.FILES:
        return bundled_betas.load(source)
    if not path.is_file():
        raise UsageError(f"beta file not found: {source}")
    return BetaSequence.from_csv(path)


def cmd_simulate(values) -> int:
    _require(values, "out")
    config = SimulationConfig(**_pick(values, SimulationConfig))
    archive = simulate(config)
    save_archive(archive, values["out"])
    print(f"wrote archive with {len(archive.streams)} frequency streams to {values['out']}")
    return EXIT_OK


def _write_history(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_HEADER)
        for i, slog in enumerate(report.per_system):
            for j, r in enumerate(slog.residual_history):
                w.writerow([i, j, repr(float(r))])


def _write_summary(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for rep in reports:
            row = rep.summary_row()
            w.writerow([row["strategy"], row["iterations"], row["matvecs_deflation"],
                        row["matvecs_total"], f"{row['wall_time']:.6f}"])


def _solver_config(values, **overrides) -> SolverConfig:
    return SolverConfig(**{**_pick(values, SolverConfig), **overrides})


def cmd_solve(values) -> int:
    _require(values, "archive", "betas", "out")
    base = _solver_config(values)
    seq = _load_betas(values["betas"])
    archive = load_archive(values["archive"])
    out = Path(values["out"])
    out.mkdir(parents=True, exist_ok=True)
    if values.get("compare"):
        configs = {name: _solver_config(values, **st) for name, st in STRATEGIES.items()}
    else:
        configs = {base.label: base}
    reports = []
    for name, cfg in configs.items():
        rep = run_sequence(cfg, seq, archive, values.get("n_systems"))
        rep.strategy = name
        reports.append(rep)
        suffix = "" if len(configs) == 1 else "_" + name.replace("+", "_")
        _write_history(out / f"history{suffix}.csv", rep)
        print(f"{name}: {rep.iterations} iterations, {rep.matvecs_total} matvecs")
    _write_summary(out / "summary.csv", reports)
    # non-convergence under policy=abort raises before reaching this point
    return EXIT_OK


def cmd_sweep(values) -> int:
    _require(values, "archive", "betas", "out")
    cfg = _solver_config(values)
    seq = _load_betas(values["betas"])
    archive = load_archive(values["archive"])
    k_list = _int_list(values["k_list"]) if isinstance(values["k_list"], str) else values["k_list"]
    dimp_list = (_int_list(values["dimp_list"]) if isinstance(values["dimp_list"], str)
                 else values["dimp_list"])
    rows = sweep_recycling_params(cfg, seq, archive, k_list, dimp_list,
                                  values.get("n_systems") or 10)
    out = Path(values["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for dim_p, k, rep in rows:
            w.writerow([dim_p, k, rep.iterations, rep.matvecs_deflation, rep.matvecs_total])
            print(f"dim_p={dim_p} k={k}: {rep.iterations} + {rep.matvecs_deflation} "
                  f"= {rep.matvecs_total}")
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, SIMULATE_RUN_KEYS | {f.name for f in fields(SimulationConfig)}),
    "solve": (cmd_solve, SOLVE_RUN_KEYS | {f.name for f in fields(SolverConfig)}),
    "sweep": (cmd_sweep, SWEEP_RUN_KEYS | {f.name for f in fields(SolverConfig)}),
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func, allowed = COMMANDS[args.command]
    try:
        return func(_merge_config(args, allowed))
    except NotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (UsageError, InvalidParameter, InvalidConfiguration, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
