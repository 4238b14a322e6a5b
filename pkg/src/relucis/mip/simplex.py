"""Dense two-phase primal simplex for box-bounded variables.

Rows are converted to equalities with bounded slacks; infeasible starting
slacks are absorbed by phase-1 artificials.  The pivot rule is steepest
reduced cost with an automatic switch to Bland's rule after a run of
degenerate pivots, which guarantees termination.  All variables carry
finite bounds, so no ray can escape the feasible box and the LP is never
unbounded.
"""

from __future__ import annotations

import numpy as np

__all__ = ["solve_bounded_lp"]

_AT_LOWER, _AT_UPPER, _BASIC = 0, 1, 2
_REFACTOR_EVERY = 128
_STALL_LIMIT = 60


def solve_bounded_lp(a, senses, rhs, lb, ub, cost, *, feastol=1e-9, max_pivots=10**6):
    """Minimize ``cost . x`` subject to ``A x (sense) rhs`` and ``lb <= x <= ub``.

    ``senses`` holds codes 0/1/2 for <= / >= / =.  Returns
    ``(status, x, objective, pivots)`` with status one of ``"optimal"``,
    ``"infeasible"``, ``"iteration_limit"``; ``x`` covers the structural
    variables only.
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    cost = np.asarray(cost, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    senses = np.asarray(senses)

    if np.any(lb > ub + feastol):
        return "infeasible", None, None, 0
    if m == 0:
        x = np.where(cost > 0, lb, np.where(cost < 0, ub, lb))
        return "optimal", x, float(cost @ x), 0

    # Slack bounds from row activity ranges; rows impossible on interval
    # grounds are rejected here.
    contrib_min = np.minimum(a * lb, a * ub)
    contrib_max = np.maximum(a * lb, a * ub)
    minact = contrib_min.sum(axis=1)
    maxact = contrib_max.sum(axis=1)
    act_tol = feastol * 64 + 1e-12 * np.maximum(1.0, np.abs(rhs))
    s_lb = np.zeros(m)
    s_ub = np.zeros(m)
    for i in range(m):
        if senses[i] == 0:  # <=   slack s = rhs - a.x >= 0
            if rhs[i] - minact[i] < -act_tol[i]:
                return "infeasible", None, None, 0
            s_ub[i] = max(0.0, rhs[i] - minact[i])
        elif senses[i] == 1:  # >=  slack s <= 0
            if rhs[i] - maxact[i] > act_tol[i]:
                return "infeasible", None, None, 0
            s_lb[i] = min(0.0, rhs[i] - maxact[i])
        else:  # =
            if rhs[i] < minact[i] - act_tol[i] or rhs[i] > maxact[i] + act_tol[i]:
                return "infeasible", None, None, 0

    # Column layout: structural | slacks | (phase-1 artificials appended).
    ntot = n + m
    atot = np.zeros((m, ntot + m))
    atot[:, :n] = a
    atot[np.arange(m), n + np.arange(m)] = 1.0
    lbt = np.concatenate([lb, s_lb, np.zeros(m)])
    ubt = np.concatenate([ub, s_ub, np.zeros(m)])

    x = np.zeros(ntot + m)
    vstat = np.full(ntot + m, _AT_LOWER, dtype=np.int8)
    x[:n] = lb
    basis = np.arange(n, ntot, dtype=np.intp)
    vstat[basis] = _BASIC
    need = rhs - a @ x[:n]  # required slack values

    n_art = 0
    art_cost = np.zeros(ntot + m)
    for i in range(m):
        if need[i] > s_ub[i] + feastol:
            x[n + i] = s_ub[i]
            vstat[n + i] = _AT_UPPER
            col = ntot + n_art
            atot[i, col] = 1.0
            r0 = need[i] - s_ub[i]
            lbt[col], ubt[col] = 0.0, r0
            basis[i] = col
            vstat[col] = _BASIC
            x[col] = r0
            art_cost[col] = 1.0
            n_art += 1
        elif need[i] < s_lb[i] - feastol:
            x[n + i] = s_lb[i]
            vstat[n + i] = _AT_LOWER
            col = ntot + n_art
            atot[i, col] = -1.0
            r0 = s_lb[i] - need[i]
            lbt[col], ubt[col] = 0.0, r0
            basis[i] = col
            vstat[col] = _BASIC
            x[col] = r0
            art_cost[col] = 1.0
            n_art += 1
        else:
            x[n + i] = need[i]

    ncols = ntot + n_art
    atot = atot[:, :ncols]
    lbt, ubt = lbt[:ncols], ubt[:ncols]
    x = x[:ncols]
    vstat = vstat[:ncols]
    art_cost = art_cost[:ncols]
    binv = np.eye(m)
    if n_art:
        binv = _refactor(atot, basis, x, rhs, vstat, binv)

    pivots = 0
    if n_art:
        status, pivots = _iterate(atot, rhs, lbt, ubt, art_cost, basis, vstat, x,
                                  binv, feastol, max_pivots, pivots)
        if status == "iteration_limit":
            return status, None, None, pivots
        if float(art_cost @ x) > feastol:
            return "infeasible", None, None, pivots
        ubt[ntot:] = 0.0  # pin artificials; they can never re-enter

    full_cost = np.concatenate([cost, np.zeros(ncols - n)])
    status, pivots = _iterate(atot, rhs, lbt, ubt, full_cost, basis, vstat, x,
                              binv, feastol, max_pivots, pivots)
    if status == "iteration_limit":
        return status, None, None, pivots
    xs = x[:n].copy()
    np.clip(xs, lb, ub, out=xs)
    return "optimal", xs, float(cost @ xs), pivots


def _refactor(atot, basis, x, rhs, vstat, binv):
    b = atot[:, basis]
    try:
        binv = np.linalg.inv(b)
    except np.linalg.LinAlgError:
        binv = np.linalg.pinv(b)
    nonbasic = np.flatnonzero(vstat != _BASIC)
    res = rhs - atot[:, nonbasic] @ x[nonbasic]
    x[basis] = binv @ res
    return binv


def _iterate(atot, rhs, lbt, ubt, cost, basis, vstat, x, binv, feastol, max_pivots, pivots):
    m = atot.shape[0]
    dtol = 1e-9
    ztol = 1e-11
    bland = False
    stall = 0
    prev_obj = float(cost @ x)
    free = ubt - lbt > ztol

    while True:
        if pivots >= max_pivots:
            return "iteration_limit", pivots
        y = cost[basis] @ binv
        d = cost - y @ atot
        d[basis] = 0.0
        elig_lo = (vstat == _AT_LOWER) & free & (d < -dtol)
        elig_up = (vstat == _AT_UPPER) & free & (d > dtol)
        elig = elig_lo | elig_up
        if not elig.any():
            return "optimal", pivots
        if bland:
            e = int(np.flatnonzero(elig)[0])
        else:
            score = np.where(elig, np.abs(d), -1.0)
            e = int(np.argmax(score))
        direction = 1.0 if vstat[e] == _AT_LOWER else -1.0
        w = binv @ atot[:, e]
        z = direction * w

        xb = x[basis]
        t_best = ubt[e] - lbt[e]
        leave = -1  # bound flip by default
        hit_lower = False
        pos = z > ztol
        neg = z < -ztol
        if pos.any() or neg.any():
            ratios = np.full(m, np.inf)
            ratios[pos] = (xb[pos] - lbt[basis[pos]]) / z[pos]
            ratios[neg] = (xb[neg] - ubt[basis[neg]]) / z[neg]
            np.clip(ratios, 0.0, None, out=ratios)
            rmin = float(ratios.min())
            if rmin < t_best - 1e-12:
                cand = np.flatnonzero(ratios <= rmin + 1e-9)
                if bland:
                    leave = int(cand[np.argmin(basis[cand])])
                else:
                    leave = int(cand[np.argmax(np.abs(z[cand]))])
                t_best = rmin
                hit_lower = z[leave] > 0

        x[basis] -= t_best * z
        if leave < 0:
            # entering variable runs to its opposite bound
            vstat[e] = _AT_UPPER if vstat[e] == _AT_LOWER else _AT_LOWER
            x[e] = ubt[e] if vstat[e] == _AT_UPPER else lbt[e]
        else:
            lv = basis[leave]
            vstat[lv] = _AT_LOWER if hit_lower else _AT_UPPER
            x[lv] = lbt[lv] if hit_lower else ubt[lv]
            x[e] = (lbt[e] if direction > 0 else ubt[e]) + direction * t_best
            basis[leave] = e
            vstat[e] = _BASIC
            piv = w[leave]
            row = binv[leave] / piv
            binv -= np.outer(w, row)
            binv[leave] = row

        pivots += 1
        if pivots % _REFACTOR_EVERY == 0:
            binv = _refactor(atot, basis, x, rhs, vstat, binv)

        obj = float(cost @ x)
        if prev_obj - obj > 1e-13 * (1.0 + abs(obj)):
            stall = 0
            bland = False
        else:
            stall += 1
            if stall > _STALL_LIMIT:
                bland = True
        prev_obj = obj
