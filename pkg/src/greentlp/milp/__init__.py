"""Linear-model container, dense simplex, and branch-and-bound."""

from .bnb import MilpParams, branch_and_bound, solve_milp
from .lpformat import write_lp
from .model import (
    DenseModel,
    LinearModel,
    ModelError,
    ObjSense,
    Sense,
    SolveResult,
    Status,
    VarKind,
)
from .simplex import solve_dense, solve_lp

__all__ = [
    "DenseModel", "LinearModel", "MilpParams", "ModelError", "ObjSense", "Sense",
    "SolveResult", "Status", "branch_and_bound", "VarKind", "solve_dense", "solve_lp", "solve_milp", "write_lp",
]
