"""Exact sparse Poisson regression: perspective relaxation, safe screening and branch-and-bound."""
from ._kernels import BACKEND
from .bnb import SolveReport, Status, branch_and_bound, exhaustive_solve, gap_percent
from .conic import build_conic_model, export_model, parse_model
from .dataset import Dataset, GenerationConfig, generate_synthetic, load_csv, save_csv
from .errors import POS_INF
from .loss import Coefficients, optimal_intercept, poisson_loss, solve_restricted
from .relax import bigM_relaxation_bound, recover_dual, solve_relaxation
from .screen import ScreeningResult, safe_screen

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "POS_INF",
    "Coefficients",
    "Dataset",
    "GenerationConfig",
    "ScreeningResult",
    "SolveReport",
    "Status",
    "bigM_relaxation_bound",
    "branch_and_bound",
    "build_conic_model",
    "exhaustive_solve",
    "export_model",
    "gap_percent",
    "generate_synthetic",
    "load_csv",
    "optimal_intercept",
    "parse_model",
    "poisson_loss",
    "recover_dual",
    "safe_screen",
    "save_csv",
    "solve_relaxation",
    "solve_restricted",
]
