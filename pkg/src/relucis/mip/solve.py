"""Interval presolve, LP relaxation entry point, and branch-and-bound."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .model import MipConfig, MipModel, MipResult, SolveStatus, evaluate_assignment
from .simplex import solve_bounded_lp

__all__ = ["PresolveResult", "presolve_propagate", "lp_solve", "mip_solve"]

_PRESOLVE_PASSES = 50


@dataclass
class PresolveResult:
    model: MipModel
    fixed_binaries: int
    infeasible: bool


def _presolve_bounds(rows, lb, ub, is_bin, feastol, inttol):
    """Iterated interval propagation over rows; returns (lb, ub, infeasible)."""
    lb = lb.copy()
    ub = ub.copy()
    for _ in range(_PRESOLVE_PASSES):
        changed = False
        for row in rows:
            l, u = lb[row.idx], ub[row.idx]
            cl = row.coef * l
            cu = row.coef * u
            cmin = np.minimum(cl, cu)
            cmax = np.maximum(cl, cu)
            minact = float(cmin.sum())
            maxact = float(cmax.sum())
            tol = feastol * 64 + 1e-12 * max(1.0, abs(row.rhs))
            if row.sense in ("<=", "=") and minact > row.rhs + tol:
                return lb, ub, True
            if row.sense in (">=", "=") and maxact < row.rhs - tol:
                return lb, ub, True
            for pos, (var, c) in enumerate(zip(row.idx, row.coef)):
                if row.sense in ("<=", "="):
                    resid = row.rhs - (minact - cmin[pos])
                    if c > 0:
                        new_ub = resid / c
                        if new_ub < ub[var] - 1e-9:
                            ub[var] = max(new_ub, lb[var])
                            changed = True
                    else:
                        new_lb = resid / c
                        if new_lb > lb[var] + 1e-9:
                            lb[var] = min(new_lb, ub[var])
                            changed = True
                if row.sense in (">=", "="):
                    resid = row.rhs - (maxact - cmax[pos])
                    if c > 0:
                        new_lb = resid / c
                        if new_lb > lb[var] + 1e-9:
                            lb[var] = min(new_lb, ub[var])
                            changed = True
                    else:
                        new_ub = resid / c
                        if new_ub < ub[var] - 1e-9:
                            ub[var] = max(new_ub, lb[var])
                            changed = True
        # binaries forced to one side are fixed exactly
        for var in np.flatnonzero(is_bin):
            if lb[var] > inttol and lb[var] < 1.0:
                lb[var] = 1.0
                changed = True
            if ub[var] < 1.0 - inttol and ub[var] > 0.0:
                ub[var] = 0.0
                changed = True
            if lb[var] > ub[var] + inttol:
                return lb, ub, True
        if not changed:
            break
    return lb, ub, False


def presolve_propagate(model: MipModel, config: MipConfig | None = None) -> PresolveResult:
    """Tighten variable bounds by interval propagation over the rows.

    Fixes every binary whose opposite choice is infeasible on interval
    grounds; never removes an integer-feasible point.  Infeasibility is
    reported through the result, not raised.
    """
    cfg = config or MipConfig()
    lb0 = np.array(model.lb)
    ub0 = np.array(model.ub)
    is_bin = np.asarray(model.is_binary, dtype=bool)
    lb, ub, infeasible = _presolve_bounds(model.rows, lb0, ub0, is_bin, cfg.feastol, cfg.inttol)
    out = model.copy()
    out.lb = lb.tolist()
    out.ub = ub.tolist()
    was_free = (ub0 - lb0 > cfg.inttol) & is_bin
    now_fixed = (ub - lb <= cfg.inttol) & is_bin
    return PresolveResult(out, int(np.count_nonzero(was_free & now_fixed)), infeasible)


def lp_solve(model: MipModel, config: MipConfig | None = None):
    """Solve the LP relaxation (binaries relaxed to their current bounds).

    Returns ``(status, x, objective)`` with the model's objective constant
    included in the objective value.
    """
    cfg = config or MipConfig()
    a, senses, rhs, lb, ub, _ = model.dense()
    cost = model.objective_vector()
    status, x, obj, _ = solve_bounded_lp(a, senses, rhs, lb, ub, cost,
                                         feastol=cfg.feastol, max_pivots=cfg.max_pivots)
    if status != "optimal":
        return (SolveStatus.INFEASIBLE if status == "infeasible" else SolveStatus.ITERATION_LIMIT,
                None, None)
    return SolveStatus.OPTIMAL, x, obj + model.obj_const


def mip_solve(model: MipModel, config: MipConfig | None = None) -> MipResult:
    """Depth-first branch-and-bound over the binary variables.

    Branches on the most fractional binary (ties to the lowest id), diving
    into the nearest-integer child first.  A warm-start assignment on the
    model seeds the incumbent.  In feasibility-only mode the search stops at
    the first integer-feasible point.
    """
    cfg = config or MipConfig()
    t0 = time.perf_counter()
    a, senses, rhs, lb0, ub0, is_bin = model.dense()
    cost = model.objective_vector()
    bin_ids = np.flatnonzero(is_bin)

    best_x = None
    best_obj = np.inf
    if model.initial is not None:
        report = evaluate_assignment(model, model.initial)
        if report.within(cfg.feastol * 8, cfg.inttol):
            best_x = model.initial.copy()
            best_x[bin_ids] = np.round(best_x[bin_ids])
            best_obj = model.objective_value(best_x)
            if cfg.feasibility_only:
                return MipResult(SolveStatus.FEASIBLE, best_x, best_obj, 0,
                                 time.perf_counter() - t0)

    lb, ub, infeasible = _presolve_bounds(model.rows, lb0, ub0, is_bin, cfg.feastol, cfg.inttol)
    if infeasible:
        status = SolveStatus.FEASIBLE if best_x is not None else SolveStatus.INFEASIBLE
        return MipResult(status, best_x, None if best_x is None else best_obj, 0,
                         time.perf_counter() - t0)

    nodes = 0
    pivots_total = 0
    limit_hit = False
    stack: list[dict[int, float]] = [{}]
    while stack:
        if cfg.node_limit is not None and nodes >= cfg.node_limit:
            limit_hit = True
            break
        if cfg.time_limit is not None and time.perf_counter() - t0 > cfg.time_limit:
            limit_hit = True
            break
        fixes = stack.pop()
        nlb, nub = lb.copy(), ub.copy()
        for var, v in fixes.items():
            nlb[var] = nub[var] = v
        status, x, obj, piv = solve_bounded_lp(a, senses, rhs, nlb, nub, cost,
                                               feastol=cfg.feastol, max_pivots=cfg.max_pivots)
        nodes += 1
        pivots_total += piv
        if status == "iteration_limit":
            limit_hit = True
            break
        if status == "infeasible":
            continue
        if best_x is not None and obj >= best_obj - model.obj_const - cfg.prune_gap:
            continue
        frac = np.abs(x[bin_ids] - np.round(x[bin_ids])) if bin_ids.size else np.zeros(0)
        if not bin_ids.size or float(frac.max(initial=0.0)) <= cfg.inttol:
            cand = x.copy()
            cand[bin_ids] = np.round(cand[bin_ids])
            cand_obj = model.objective_value(cand)
            if cand_obj < best_obj - 1e-12 or best_x is None:
                best_x, best_obj = cand, cand_obj
            if cfg.feasibility_only:
                break
            continue
        j = int(bin_ids[int(np.argmax(np.minimum(frac, 1.0 - frac)))])
        near = 1.0 if x[j] >= 0.5 else 0.0
        stack.append({**fixes, j: 1.0 - near})
        stack.append({**fixes, j: near})

    elapsed = time.perf_counter() - t0
    if limit_hit:
        status = SolveStatus.FEASIBLE if best_x is not None else SolveStatus.ITERATION_LIMIT
        return MipResult(status, best_x, best_obj if best_x is not None else None,
                         nodes, elapsed, pivots_total)
    if best_x is None:
        return MipResult(SolveStatus.INFEASIBLE, None, None, nodes, elapsed, pivots_total)
    status = SolveStatus.FEASIBLE if cfg.feasibility_only else SolveStatus.OPTIMAL
    return MipResult(status, best_x, best_obj, nodes, elapsed, pivots_total)
