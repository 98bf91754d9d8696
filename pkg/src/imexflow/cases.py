"""Benchmark cases, boundary signals, presets and the flat key-value config format.

A config file holds one ``key = value`` pair per line with dotted section
names, e.g.::

    case = cavity
    scheme.kind = frac_gl
    mesh.nx = 64
    viscosity.model = power_law
    viscosity.kappa = 0.01

Blank lines and ``#`` comments are ignored.  Missing keys fall back to the
defaults of the named case.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fe import build_dof_layout
from .mesh import build_aneurysm, build_unit_square, sign
from .schemes import NEEDS_NEXT_VISCOSITY, SCHEMES, FlowProblem, TimeGrid
from .viscosity import (
    TIME_FUNCTIONS,
    AnalyticViscosity,
    CarreauViscosity,
    ConstantViscosity,
    PowerLawViscosity,
)

CASES = ("mms", "cavity", "aneurysm")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based source line when known."""

    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line


# -- boundary signals ----------------------------------------------------------


def ramp(t, t_star):
    """Smooth start-up from 0 at ``t = 0`` to 1 for ``t >= t_star``."""
    t = np.asarray(t, dtype=float)
    inner = (1.0 - sign(np.abs(2.0 * t - t_star) - t_star)) * np.sin(np.pi * t / (2.0 * t_star)) ** 2
    return 0.5 * (1.0 + sign(t - t_star) + inner)


ICA_A = (695.98, 905.24, 452.42, 754.46, 164.6, 133.57, 79.4, 74.40, 36.72, 38.80, 42.34, 3.67)
ICA_B = (-2067.65, -496.92, -340.74, 202.96, 98.82, 249.55, 81.7, 67.84, 9.95, 15.34, -3.49, -3.22)


@dataclass(frozen=True)
class InflowSignal:
    """Ramped Fourier-series inflow waveform (internal carotid artery fit)."""

    period: float = 0.917
    a0: float = 13349.0
    a: tuple = ICA_A
    b: tuple = ICA_B
    scale: float = 1e-4
    t_star: float | None = None  # ramp time, defaults to one period

    def __post_init__(self):
        if len(self.a) != 12 or len(self.b) != 12:
            raise ValueError("the waveform needs exactly 12 harmonic pairs")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def ramp_time(self) -> float:
        return self.period if self.t_star is None else self.t_star


def ica_waveform(t, signal: InflowSignal = InflowSignal()):
    """``scale * [a0/2 - sum_k (a_k cos(2 k pi t / T_p) + b_k sin(2 k pi t / T_p))]``."""
    t = np.asarray(t, dtype=float)
    k = np.arange(1, 13)
    arg = 2.0 * np.pi * np.multiply.outer(t, k) / signal.period
    series = np.cos(arg) @ np.asarray(signal.a) + np.sin(arg) @ np.asarray(signal.b)
    return signal.scale * (0.5 * signal.a0 - series)


def mms_exact(t=None, C=0.5, f="sin2", g=0.001):
    """Manufactured solution ``u = 2 f(t) (y, x)``, ``p = (C - 2xy) f'(t)``, ``nu = xy f(t) + g``.

    Returns three callables of ``(x, y, t)``.  The body force is zero.
    """
    fv, fd = TIME_FUNCTIONS[f] if isinstance(f, str) else f

    def u(x, y, t):
        s = 2.0 * fv(t)
        return s * np.asarray(y, dtype=float), s * np.asarray(x, dtype=float)

    def p(x, y, t):
        return (C - 2.0 * np.asarray(x) * np.asarray(y)) * fd(t)

    def nu(x, y, t):
        return np.asarray(x) * np.asarray(y) * fv(t) + g

    return u, p, nu


# -- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class CaseConfig:
    case: str
    scheme: str
    nx: int
    ny: int
    tau: float
    T: float
    viscosity: object
    rel_tolerance: float = 1e-8
    max_iterations: int = 5000
    H: float = 2.5e-3
    t_star: float = 2.0
    period: float = 0.917
    mms_C: float | None = None
    lagged_viscosity: bool = False
    convection: str = "default"
    output_csv: str | None = None
    output_vtk: str | None = None

    def __post_init__(self):
        validate(self)

    @property
    def grid(self) -> TimeGrid:
        # tau shrinks slightly when T is not a multiple of it, so that T is hit exactly
        return TimeGrid.fit(self.T, self.tau)

    def replace(self, **changes) -> "CaseConfig":
        return dataclasses.replace(self, **changes)


def validate(cfg: CaseConfig):
    if cfg.case not in CASES:
        raise ConfigError(f"unknown case {cfg.case!r}; expected one of {', '.join(CASES)}")
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {cfg.scheme!r}; expected one of {', '.join(SCHEMES)}")
    if cfg.nx < 1 or cfg.ny < 1:
        raise ConfigError("mesh counts must be positive")
    if not (cfg.tau > 0 and cfg.T > 0):
        raise ConfigError("tau and T must be positive")
    if cfg.T / cfg.tau < 2 - 1e-12:
        raise ConfigError(f"T={cfg.T} must span at least two steps of tau={cfg.tau}")
    if not 0 < cfg.rel_tolerance < 1 or cfg.max_iterations < 1:
        raise ConfigError("solver tolerance must lie in (0, 1) and max_iterations >= 1")
    if cfg.convection not in ("default", "plain", "skew"):
        raise ConfigError(f"unknown convection form {cfg.convection!r}")
    vd = getattr(cfg.viscosity, "velocity_dependent", None)
    if vd is None:
        raise ConfigError("viscosity must be a viscosity model")
    if cfg.scheme in NEEDS_NEXT_VISCOSITY and vd and not cfg.lagged_viscosity:
        raise ConfigError(
            f"scheme {cfg.scheme} needs nu_(n+1) in advance; incompatible with {cfg.viscosity.kind} viscosity"
        )


_VISCOSITY_KEYS = {
    "constant": (ConstantViscosity, {"nu": float}),
    "analytic": (AnalyticViscosity, {"f": str, "g": float}),
    "carreau": (CarreauViscosity, {"nu0": float, "nu_inf": float, "lam": float, "m": float}),
    "power_law": (PowerLawViscosity, {"kappa": float, "n": float, "floor": float}),
}

_KEYS = {
    "case": ("case", str),
    "scheme.kind": ("scheme", str),
    "scheme.convection": ("convection", str),
    "scheme.lagged_viscosity": ("lagged_viscosity", bool),
    "mesh.nx": ("nx", int),
    "mesh.ny": ("ny", int),
    "geometry.H": ("H", float),
    "time.tau": ("tau", float),
    "time.T": ("T", float),
    "bc.t_star": ("t_star", float),
    "bc.period": ("period", float),
    "mms.C": ("mms_C", float),
    "solver.rel_tolerance": ("rel_tolerance", float),
    "solver.max_iterations": ("max_iterations", int),
    "output.csv": ("output_csv", str),
    "output.vtk": ("output_vtk", str),
}


def _convert(raw: str, typ):
    if typ is bool:
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"expected a finite number, got {raw!r}")
        return v
    return raw


def parse_config_text(text: str, path=None) -> CaseConfig:
    values: dict = {}
    visc: dict = {}
    lines: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno, path)
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno, path)
        lines[key] = lineno
        if key.startswith("viscosity."):
            visc[key.split(".", 1)[1]] = (raw, lineno)
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, path)
        name, typ = _KEYS[key]
        if raw.lower() == "none" and name in ("mms_C", "output_csv", "output_vtk"):
            values[name] = None
            continue
        try:
            values[name] = _convert(raw, typ)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno, path) from None

    case = values.get("case")
    if case is None:
        raise ConfigError("missing required key 'case'", None, path)
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}", lines["case"], path)
    base = PRESETS[DEFAULT_PRESET[case]]
    params = dataclasses.asdict(base) | {"viscosity": base.viscosity}

    if visc:
        model_raw, model_line = visc.pop("model", (None, None))
        if model_raw is None:
            model_raw = base.viscosity.kind
        if model_raw not in _VISCOSITY_KEYS:
            raise ConfigError(f"unknown viscosity model {model_raw!r}", model_line, path)
        cls, schema = _VISCOSITY_KEYS[model_raw]
        kwargs = {}
        if model_raw == base.viscosity.kind:
            kwargs = {k: getattr(base.viscosity, k) for k in schema}
        for k, (raw, ln) in visc.items():
            if k not in schema:
                raise ConfigError(f"unknown key 'viscosity.{k}' for model {model_raw}", ln, path)
            try:
                kwargs[k] = _convert(raw, schema[k])
            except ValueError as exc:
                raise ConfigError(f"viscosity.{k}: {exc}", ln, path) from None
        try:
            params["viscosity"] = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"viscosity: {exc}", model_line, path) from None

    params.update(values)
    try:
        return CaseConfig(**params)
    except ConfigError as exc:
        raise ConfigError(str(exc), None, path) from None


def parse_config(path) -> CaseConfig:
    """Read and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse_config_text(text, path)


def format_config(cfg: CaseConfig) -> str:
    lines = []
    for key, (name, _) in _KEYS.items():
        v = getattr(cfg, name)
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
        if key == "mesh.ny":
            model = cfg.viscosity
            lines.append(f"viscosity.model = {model.kind}")
            for k in _VISCOSITY_KEYS[model.kind][1]:
                mv = getattr(model, k)
                lines.append(f"viscosity.{k} = {repr(mv) if isinstance(mv, float) else mv}")
    return "\n".join(lines) + "\n"


def write_config(cfg: CaseConfig, path):
    Path(path).write_text(format_config(cfg))


# -- presets ---------------------------------------------------------------------

T_PERIOD = 0.917

PRESETS = {
    "mms": CaseConfig(
        case="mms", scheme="mono_gl", nx=4, ny=4, tau=1 / 64, T=10.0,
        viscosity=AnalyticViscosity("sin2", 0.001), rel_tolerance=1e-10,
    ),
    "cavity-powerlaw": CaseConfig(
        case="cavity", scheme="frac_gl", nx=64, ny=64, tau=0.25, T=30.0,
        viscosity=PowerLawViscosity(0.01, 1.5, 1e-5), t_star=2.0,
    ),
    "cavity-powerlaw-full": CaseConfig(
        case="cavity", scheme="frac_gl", nx=200, ny=200, tau=0.25, T=30.0,
        viscosity=PowerLawViscosity(0.01, 1.5, 1e-5), t_star=2.0,
    ),
    "aneurysm-carreau": CaseConfig(
        case="aneurysm", scheme="mono_gl", nx=96, ny=16, tau=0.002, T=3 * T_PERIOD,
        viscosity=CarreauViscosity(53.33e-6, 3.286e-6, 3.313, 0.3216), H=2.5e-3,
        t_star=T_PERIOD, period=T_PERIOD,
    ),
    "aneurysm-carreau-full": CaseConfig(
        case="aneurysm", scheme="mono_gl", nx=480, ny=80, tau=0.002, T=6 * T_PERIOD,
        viscosity=CarreauViscosity(53.33e-6, 3.286e-6, 3.313, 0.3216), H=2.5e-3,
        t_star=T_PERIOD, period=T_PERIOD,
    ),
}

DEFAULT_PRESET = {"mms": "mms", "cavity": "cavity-powerlaw", "aneurysm": "aneurysm-carreau"}


def preset(name: str) -> CaseConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


# -- problem construction -----------------------------------------------------------


@dataclass
class Case:
    """A configured problem ready to run."""

    config: CaseConfig
    problem: FlowProblem
    grid: TimeGrid
    exact_u: object = None
    exact_p: object = None
    u0: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def initial_state(self):
        return self.problem.initial_state(self.u0)


def mms_pressure_constant(layout, assembler) -> float:
    """Mass-weighted mean of ``2xy``, making the manufactured pressure mean-free."""
    X = assembler.geo.X
    return assembler.integrate(2.0 * X[..., 0] * X[..., 1]) / assembler.integrate(np.ones_like(X[..., 0]))


def build_case(cfg: CaseConfig) -> Case:
    problem_kw = dict(
        rel_tolerance=cfg.rel_tolerance,
        max_iterations=cfg.max_iterations,
        lagged_viscosity=cfg.lagged_viscosity,
        convection=cfg.convection,
    )
    if cfg.case == "mms":
        layout = build_dof_layout(build_unit_square(cfg.nx, cfg.ny), ["all"])
        visc = cfg.viscosity
        fname = visc.f if isinstance(visc, AnalyticViscosity) else "sin2"
        g = visc.g if isinstance(visc, AnalyticViscosity) else 0.001
        problem = FlowProblem(layout, visc, **problem_kw)
        C = cfg.mms_C if cfg.mms_C is not None else mms_pressure_constant(layout, problem.asm)
        eu, ep, _ = mms_exact(C=C, f=fname, g=g)
        problem.boundary_velocity = lambda tag, x, y, t: eu(x, y, t)
        u0 = layout.interpolate_velocity(lambda x, y: eu(x, y, 0.0))
        return Case(cfg, problem, cfg.grid, eu, ep, u0, {"C": C})

    if cfg.case == "cavity":
        layout = build_dof_layout(build_unit_square(cfg.nx, cfg.ny), ["lid", "wall"])

        def bv(tag, x, y, t):
            if tag == "lid":
                return np.full_like(x, float(ramp(t, cfg.t_star))), np.zeros_like(x)
            return np.zeros_like(x), np.zeros_like(x)

        problem = FlowProblem(layout, cfg.viscosity, boundary_velocity=bv, **problem_kw)
        return Case(cfg, problem, cfg.grid)

    layout = build_dof_layout(build_aneurysm(cfg.nx, cfg.ny, cfg.H), ["inlet", "wall"])
    signal = InflowSignal(period=cfg.period, t_star=cfg.t_star)
    H = cfg.H

    def bv(tag, x, y, t):
        if tag == "inlet":
            amp = float(ramp(t, signal.ramp_time) * ica_waveform(t, signal))
            return 0.5 * (1.0 - (2.0 * y / H - 1.0) ** 2) * amp, np.zeros_like(y)
        return np.zeros_like(x), np.zeros_like(x)

    problem = FlowProblem(layout, cfg.viscosity, boundary_velocity=bv, **problem_kw)
    return Case(cfg, problem, cfg.grid, extras={"signal": signal})
