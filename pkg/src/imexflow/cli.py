"""Command line interface: ``imexflow run | study | presets``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cases import PRESETS, ConfigError, format_config, parse_config, preset
from .io import OutputError, write_outputs
from .schemes import SCHEMES, RunAborted
from .study import convergence_study, format_study, simulate, write_study_csv

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


def _mesh(text):
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"mesh must look like 64x64, got {text!r}") from None
    return nx, ny


def build_parser():
    ap = argparse.ArgumentParser(prog="imexflow", description="Variable-viscosity Navier-Stokes IMEX solver")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one case from a config file or preset name")
    r.add_argument("config", help="config file path, or the name of a built-in preset")
    r.add_argument("--tau", type=float)
    r.add_argument("--T", type=float, dest="T")
    r.add_argument("--mesh", type=_mesh, help="NXxNY")
    r.add_argument("--scheme", choices=SCHEMES)
    r.add_argument("--csv", help="time-series CSV output path")
    r.add_argument("--vtk", help="final-state VTK output path")
    r.add_argument("--steady-tol", type=float, default=None)

    s = sub.add_parser("study", help="temporal convergence sweep")
    s.add_argument("case", choices=["mms"])
    s.add_argument("--schemes", nargs="+", choices=SCHEMES)
    s.add_argument("--levels", type=int, default=7, help="number of halvings starting from tau=1")
    s.add_argument("--mesh", type=_mesh)
    s.add_argument("--csv", help="output CSV path")

    p = sub.add_parser("presets", help="list built-in presets")
    p.add_argument("--show", metavar="NAME", help="print one preset in config-file form")
    return ap


def _load(spec):
    if Path(spec).exists():
        return parse_config(spec)
    if spec in PRESETS:
        return preset(spec)
    raise ConfigError(f"no config file or preset named {spec!r}")


def cmd_run(args):
    cfg = _load(args.config)
    changes = {}
    if args.tau is not None:
        changes["tau"] = args.tau
    if args.T is not None:
        changes["T"] = args.T
    if args.mesh is not None:
        changes["nx"], changes["ny"] = args.mesh
    if args.scheme is not None:
        changes["scheme"] = args.scheme
    if args.csv:
        changes["output_csv"] = args.csv
    if args.vtk:
        changes["output_vtk"] = args.vtk
    cfg = cfg.replace(**changes)
    try:
        state, series, case = simulate(cfg, steady_tol=args.steady_tol)
    except RunAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        if cfg.output_csv:
            write_outputs(exc.series, exc.state, None, cfg.output_csv)
        return EXIT_SOLVER
    write_outputs(series, state, case.problem.layout, cfg.output_csv, cfg.output_vtk)
    last = {k: v[-1] for k, v in series.channels.items()}
    print(f"{cfg.case}/{cfg.scheme}: {state.step} steps to t={state.t:.6g}  " +
          "  ".join(f"{k}={v:.6g}" for k, v in last.items()))
    return EXIT_OK


def cmd_study(args):
    cfg = preset("mms")
    if args.mesh is not None:
        cfg = cfg.replace(nx=args.mesh[0], ny=args.mesh[1])
    rows = convergence_study(cfg, args.schemes, [2.0**-k for k in range(args.levels)])
    print(format_study(rows))
    if args.csv:
        write_study_csv(rows, args.csv)
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_SOLVER


def cmd_presets(args):
    if args.show:
        print(format_config(preset(args.show)), end="")
        return EXIT_OK
    for name, cfg in PRESETS.items():
        print(f"{name:<24}{cfg.case:<10}{cfg.scheme:<18}{cfg.nx}x{cfg.ny}  tau={cfg.tau:g} T={cfg.T:g}  {cfg.viscosity.kind}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return {"run": cmd_run, "study": cmd_study, "presets": cmd_presets}[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
