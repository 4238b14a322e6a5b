"""Built-in mixed-integer linear solver: model container, interval presolve,
bounded-variable simplex, and depth-first branch-and-bound over binaries."""

from .model import (
    MipConfig,
    MipModel,
    MipResult,
    ResidualReport,
    SolveStatus,
    evaluate_assignment,
    write_lp,
)
from .solve import PresolveResult, lp_solve, mip_solve, presolve_propagate

__all__ = [
    "MipConfig",
    "MipModel",
    "MipResult",
    "ResidualReport",
    "SolveStatus",
    "PresolveResult",
    "evaluate_assignment",
    "lp_solve",
    "mip_solve",
    "presolve_propagate",
    "write_lp",
]
