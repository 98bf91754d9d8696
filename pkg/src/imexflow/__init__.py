"""Variable-viscosity incompressible flow with implicit and IMEX time stepping on Q2/Q1 elements."""

from .cases import CaseConfig, build_case, parse_config, preset
from .mesh import build_aneurysm, build_unit_square
from .schemes import SCHEMES, FlowProblem, TimeGrid, run
from .study import convergence_study, simulate

__all__ = [
    "CaseConfig",
    "FlowProblem",
    "SCHEMES",
    "TimeGrid",
    "build_aneurysm",
    "build_case",
    "build_unit_square",
    "convergence_study",
    "parse_config",
    "preset",
    "run",
    "simulate",
]
__version__ = "0.1.0"
