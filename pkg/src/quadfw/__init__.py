"""quadfw: a primal heuristic for mixed-integer quadratically constrained
quadratic programs built on a penalty-relaxed Frank-Wolfe
branch-and-bound core."""

from .config import Config
from .ingest import parse_canonical, parse_qplib, write_canonical, write_report
from .model import Problem, QuadConstraint, Sense, VarKind, check_feasibility, eval_constraint, eval_objective
from .portfolio import run_portfolio
from .presolve import convexify_binary, eigen_symmetric, propagate_bounds, run_presolve

__version__ = "0.1.0"

__all__ = [
    "Config",
    "Problem",
    "QuadConstraint",
    "Sense",
    "VarKind",
    "check_feasibility",
    "convexify_binary",
    "eigen_symmetric",
    "eval_constraint",
    "eval_objective",
    "parse_canonical",
    "parse_qplib",
    "propagate_bounds",
    "run_portfolio",
    "run_presolve",
    "write_canonical",
    "write_report",
    "__version__",
]
