"""Mixed-integer linear model container and assignment checking."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InfiniteBoundError, UnknownVarError

__all__ = [
    "MipModel",
    "MipConfig",
    "MipResult",
    "SolveStatus",
    "ResidualReport",
    "evaluate_assignment",
    "write_lp",
]

LE, GE, EQ = "<=", ">=", "="
_SENSES = (LE, GE, EQ)


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class MipConfig:
    """Solver knobs; the defaults match the documented tolerances."""

    feastol: float = 1e-9
    inttol: float = 1e-7
    prune_gap: float = 1e-9
    max_pivots: int = 10**6
    node_limit: int | None = None
    time_limit: float | None = None
    feasibility_only: bool = False


@dataclass
class _Row:
    idx: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float


class MipModel:
    """Continuous box-bounded variables, binaries, sparse linear rows,
    linear minimization objective, optional warm-start assignment.

    Variable and row ids are dense (0, 1, 2, ...) in creation order.
    Duplicate coefficient entries for one variable in a row are summed.
    """

    def __init__(self):
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.is_binary: list[bool] = []
        self.rows: list[_Row] = []
        self.obj: dict[int, float] = {}
        self.obj_const: float = 0.0
        self.initial: np.ndarray | None = None

    # -- construction -----------------------------------------------------

    def add_continuous(self, lb: float, ub: float) -> int:
        lb, ub = float(lb), float(ub)
        if not (math.isfinite(lb) and math.isfinite(ub)):
            raise InfiniteBoundError(f"continuous bounds must be finite, got [{lb}, {ub}]")
        self.lb.append(lb)
        self.ub.append(ub)
        self.is_binary.append(False)
        return len(self.lb) - 1

    def add_binary(self) -> int:
        self.lb.append(0.0)
        self.ub.append(1.0)
        self.is_binary.append(True)
        return len(self.lb) - 1

    def add_row(self, coeffs, sense: str, rhs: float) -> int:
        if sense not in _SENSES:
            raise ValueError(f"sense must be one of {_SENSES}, got {sense!r}")
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise InfiniteBoundError(f"row rhs must be finite, got {rhs}")
        acc: dict[int, float] = {}
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        for var, c in items:
            var = int(var)
            if not 0 <= var < len(self.lb):
                raise UnknownVarError(f"row references unknown variable {var}")
            acc[var] = acc.get(var, 0.0) + float(c)
        idx = np.fromiter(sorted(acc), dtype=np.intp, count=len(acc))
        coef = np.array([acc[i] for i in idx], dtype=float)
        keep = coef != 0.0
        self.rows.append(_Row(idx[keep], coef[keep], sense, rhs))
        return len(self.rows) - 1

    def set_objective(self, coeffs, const: float = 0.0) -> None:
        acc: dict[int, float] = {}
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        for var, c in items:
            var = int(var)
            if not 0 <= var < len(self.lb):
                raise UnknownVarError(f"objective references unknown variable {var}")
            acc[var] = acc.get(var, 0.0) + float(c)
        self.obj = {k: v for k, v in acc.items() if v != 0.0}
        self.obj_const = float(const)

    def set_initial(self, assignment) -> None:
        x = np.asarray(assignment, dtype=float).reshape(-1)
        if x.shape[0] != self.n_vars:
            raise UnknownVarError(f"initial assignment length {x.shape[0]} != {self.n_vars}")
        self.initial = x

    # -- views -------------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.lb)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def binary_ids(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.is_binary))

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for var, v in self.obj.items():
            c[var] = v
        return c

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(v * x[k] for k, v in self.obj.items()) + self.obj_const)

    def dense(self):
        """Dense (A, sense codes, rhs, lb, ub, binary mask) arrays."""
        m, n = self.n_rows, self.n_vars
        a = np.zeros((m, n))
        senses = np.zeros(m, dtype=np.int8)
        rhs = np.zeros(m)
        for i, row in enumerate(self.rows):
            a[i, row.idx] = row.coef
            senses[i] = _SENSES.index(row.sense)
            rhs[i] = row.rhs
        return (a, senses, rhs, np.array(self.lb), np.array(self.ub),
                np.asarray(self.is_binary, dtype=bool))

    def copy(self) -> "MipModel":
        out = MipModel()
        out.lb = list(self.lb)
        out.ub = list(self.ub)
        out.is_binary = list(self.is_binary)
        out.rows = [_Row(r.idx.copy(), r.coef.copy(), r.sense, r.rhs) for r in self.rows]
        out.obj = dict(self.obj)
        out.obj_const = self.obj_const
        out.initial = None if self.initial is None else self.initial.copy()
        return out


@dataclass(frozen=True)
class MipResult:
    status: SolveStatus
    x: np.ndarray | None
    objective: float | None
    nodes: int
    solve_time: float
    pivots: int = 0

    @property
    def feasible(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE)


@dataclass(frozen=True)
class ResidualReport:
    max_row_violation: float
    max_bound_violation: float
    max_integrality_violation: float

    def within(self, feastol: float, inttol: float) -> bool:
        return (self.max_row_violation <= feastol
                and self.max_bound_violation <= feastol
                and self.max_integrality_violation <= inttol)


def evaluate_assignment(model: MipModel, x) -> ResidualReport:
    """Independent residual check of an assignment against every row,
    every bound, and binary integrality."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != model.n_vars:
        raise UnknownVarError(f"assignment length {x.shape[0]} != {model.n_vars}")
    row_viol = 0.0
    for row in model.rows:
        act = float(row.coef @ x[row.idx])
        if row.sense == LE:
            row_viol = max(row_viol, act - row.rhs)
        elif row.sense == GE:
            row_viol = max(row_viol, row.rhs - act)
        else:
            row_viol = max(row_viol, abs(act - row.rhs))
    lb = np.asarray(model.lb)
    ub = np.asarray(model.ub)
    bound_viol = float(max(np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0)))
    bins = model.binary_ids
    int_viol = float(np.max(np.abs(x[bins] - np.round(x[bins])), initial=0.0)) if bins.size else 0.0
    return ResidualReport(max(row_viol, 0.0), bound_viol, int_viol)


def write_lp(model: MipModel, path) -> None:
    """Dump the model in LP text format for cross-checking with other solvers."""
    lines = ["Minimize", " obj: " + _lp_expr(model.obj.items()) or " obj: 0"]
    lines.append("Subject To")
    for i, row in enumerate(model.rows):
        lines.append(f" r{i}: " + _lp_expr(zip(row.idx, row.coef)) + f" {row.sense} {row.rhs!r}")
    lines.append("Bounds")
    for j in range(model.n_vars):
        if not model.is_binary[j]:
            lines.append(f" {model.lb[j]!r} <= x{j} <= {model.ub[j]!r}")
    bins = [f"x{j}" for j in range(model.n_vars) if model.is_binary[j]]
    if bins:
        lines.append("Binaries")
        lines.append(" " + " ".join(bins))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _lp_expr(items) -> str:
    parts = []
    for var, c in items:
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {abs(c)!r} x{int(var)}")
    if not parts:
        return "0"
    expr = " ".join(parts)
    return expr[2:] if expr.startswith("+ ") else expr
