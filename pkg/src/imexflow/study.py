"""Running configured cases and the manufactured-solution convergence sweep."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cases import CaseConfig, build_case, preset
from .diagnostics import TimeSeries, l2_errors, pressure_drop
from .schemes import NEEDS_NEXT_VISCOSITY, RunAborted, run


def diagnostics_sink(case, series: TimeSeries):
    """Callback appending energy plus the case-specific channels to ``series``."""
    cfg = case.config
    problem = case.problem

    def sink(state, _problem):
        rec = {"energy": problem.energy(state.u)}
        if case.exact_u is not None:
            rec["error_u"], rec["error_p"] = l2_errors(
                state.u, state.p, case.exact_u, case.exact_p, state.t, problem.layout, assembler=problem.asm
            )
        if cfg.case == "aneurysm":
            rec["delta_p"] = pressure_drop(state.p, problem.mesh, cfg.H)
        if cfg.scheme == "frac_gl":
            rec["cfl_margin"] = cfg.tau * problem.grad_sup_norm(state.nu) ** 2 / (2.0 * problem.viscosity.nu_min)
        series.append(state.t, **rec)

    return sink


def simulate(cfg: CaseConfig, callbacks=(), steady_tol=None):
    """Run one configured case; returns ``(final_state, series, case)``.

    On a solver failure the :class:`RunAborted` raised carries the partial
    series in ``exc.series``.
    """
    case = build_case(cfg)
    series = TimeSeries()
    cbs = (diagnostics_sink(case, series), *callbacks)
    try:
        state = run(cfg.scheme, case.problem, case.grid, case.initial_state(), cbs, steady_tol)
    except RunAborted as exc:
        exc.series = series
        raise
    return state, series, case


@dataclass
class StudyRow:
    scheme: str
    tau: float
    error_u: float
    error_p: float
    order_u: float = math.nan
    order_p: float = math.nan
    status: str = "ok"


def _order(e_coarse, e_fine):
    if not (e_coarse > 0 and e_fine > 0) or not (math.isfinite(e_coarse) and math.isfinite(e_fine)):
        return math.nan
    return math.log2(e_coarse / e_fine)


def convergence_study(base: CaseConfig | str = "mms", schemes=None, tau_levels=None):
    """Final-time L2 errors per scheme and step size, with observed orders ``log2(e_k / e_{k+1})``.

    A failed run is recorded with ``status`` set to the failure and NaN errors.
    """
    cfg = preset(base) if isinstance(base, str) else base
    schemes = list(schemes or ("mono_sd_implicit", "mono_sd_naive", "mono_sd_sqrt", "mono_gl", "frac_sd_sqrt", "frac_gl"))
    tau_levels = list(tau_levels or [2.0**-k for k in range(7)])
    rows = []
    for kind in schemes:
        lagged = kind in NEEDS_NEXT_VISCOSITY and cfg.viscosity.velocity_dependent
        prev = None
        for tau in tau_levels:
            try:
                state, series, _ = simulate(cfg.replace(scheme=kind, tau=tau, lagged_viscosity=lagged or cfg.lagged_viscosity))
                row = StudyRow(kind, tau, series["error_u"][-1], series["error_p"][-1])
            except (RunAborted, ValueError) as exc:
                row = StudyRow(kind, tau, math.nan, math.nan, status=f"failed: {exc}")
            if prev is not None:
                row.order_u = _order(prev.error_u, row.error_u)
                row.order_p = _order(prev.error_p, row.error_p)
            rows.append(row)
            prev = row
    return rows


def write_study_csv(rows, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "tau", "error_u", "error_p", "order_u", "order_p", "status"])
        for r in rows:
            w.writerow([r.scheme, f"{r.tau:.17g}", f"{r.error_u:.17g}", f"{r.error_p:.17g}",
                        f"{r.order_u:.6g}", f"{r.order_p:.6g}", r.status])
    return Path(path)


def format_study(rows) -> str:
    out = [f"{'scheme':<18}{'tau':>10}{'error_u':>14}{'error_p':>14}{'order_u':>9}{'order_p':>9}  status"]
    for r in rows:
        out.append(
            f"{r.scheme:<18}{r.tau:>10.5g}{r.error_u:>14.4e}{r.error_p:>14.4e}"
            f"{r.order_u:>9.3f}{r.order_p:>9.3f}  {r.status}"
        )
    return "\n".join(out)


def tail_orders(rows, scheme, levels=3):
    """Observed orders over the finest ``levels`` step sizes of one scheme (``levels - 1`` values)."""
    sel = [r for r in rows if r.scheme == scheme][-levels:]
    return np.array([r.order_u for r in sel[1:]]), np.array([r.order_p for r in sel[1:]])
