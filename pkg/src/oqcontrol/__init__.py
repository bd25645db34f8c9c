"""Optimal control of an open two-qubit system with coherent and incoherent controls."""
from .controls import ControlGrid, CrabBounds, CrabParams
from .gpm import GpmConfig, run_gpm
from .krotov import KrotovConfig, run_method
from .model import SystemParams, case1_params, steering_params
from .pmp import check_pmp, zero_control_analysis
from .problem import OverlapProblem
from .propagate import solve_backward, solve_forward

__version__ = "0.1.0"

__all__ = [
    "ControlGrid", "CrabBounds", "CrabParams", "GpmConfig", "KrotovConfig", "OverlapProblem",
    "SystemParams", "case1_params", "check_pmp", "run_gpm", "run_method", "solve_backward",
    "solve_forward", "steering_params", "zero_control_analysis",
]
