"""Control-invariant-set synthesis by fixed-point set recursion.

The admissible subset is initialized with the quantized safe set and is
repeatedly replaced by its one-step returnable subset until the covered
basis-cell index set stops changing.  Boxes failing verification are split
along their longest axis and retried; failing basis cells are discarded,
so every iteration is a subset of the previous one and termination is
guaranteed within ``|cells(safe)| + 1`` iterations.

Each verified box stores the admissible control found for it, giving a
piecewise-constant feedback law (the control atlas) which certifies the
result and warm-starts the online controller.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boxes import BoxSet, GridBox, GridSpec, OpenBox, complement_open_boxes, partition_box
from .errors import OutsideCisError
from .mip import MipConfig, SolveStatus, mip_solve
from .network import ControlDomain, Mlp, forward_batch
from .reach import LayerBounds, RealBox, global_bounds, reach_boxes
from .encode import build_returnability, prune_obstacles

__all__ = [
    "ControlAtlas",
    "SynthOptions",
    "ProgressEvent",
    "IterationStats",
    "returnable_verification",
    "one_step_returnable_q",
    "synthesize_cis",
    "termination_bound",
    "atlas_control",
    "verify_atlas",
    "closed_loop_rollout",
]


@dataclass
class SynthOptions:
    jobs: int = 1
    keep_history: bool = False
    objective: str = "feasibility"
    mip: MipConfig = field(default_factory=lambda: MipConfig(feasibility_only=True))
    candidate_controls: bool = True
    progress: Callable[["ProgressEvent"], None] | None = None


@dataclass
class ProgressEvent:
    iteration: int
    cell_count: int
    verified: int
    partitioned: int
    discarded: int
    solver_calls: int


@dataclass
class IterationStats:
    verified: int = 0
    partitioned: int = 0
    discarded: int = 0
    solver_calls: int = 0
    limit_flags: int = 0


@dataclass
class ControlAtlas:
    """Synthesized invariant set with one admissible control per box."""

    cis: BoxSet
    controls: dict[GridBox, np.ndarray]
    iterations: int
    control_domain: ControlDomain
    history: list[BoxSet] | None = None

    def __post_init__(self):
        self._cell_map: np.ndarray | None = None
        self._u_table: np.ndarray | None = None

    @property
    def grid(self) -> GridSpec:
        return self.cis.grid

    def is_empty(self) -> bool:
        return self.cis.is_empty()

    def contains(self, x, tol: float = 0.0) -> bool:
        return self.cis.contains_point(x, tol=tol)

    def control_at(self, x, tol: float = 0.0) -> np.ndarray:
        """Control of the box containing ``x``; on shared faces the box with
        the lexicographically smallest corner wins."""
        x = np.asarray(x, dtype=float).reshape(-1)
        for box in self.cis.boxes:  # boxes are in lexicographic order
            lo, hi = self.grid.box_bounds(box)
            if np.all(lo - tol <= x) and np.all(x <= hi + tol):
                return self.controls[box]
        raise OutsideCisError(f"state {x.tolist()} is outside the invariant set")

    def lookup_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """(basis-cell -> box ordinal, box ordinal -> control) arrays."""
        if self._cell_map is None:
            grid = self.grid
            cell_map = np.full(grid.n_cells, -1, dtype=np.int64)
            for bi, box in enumerate(self.cis.boxes):
                for c in box.iter_cells():
                    cell_map[grid.flat_index(c)] = bi
            n_u = len(self.control_domain.lower)
            u_table = np.zeros((max(len(self.cis.boxes), 1), n_u))
            for bi, box in enumerate(self.cis.boxes):
                u_table[bi] = self.controls[box]
            self._cell_map = cell_map
            self._u_table = u_table
        return self._cell_map, self._u_table


def termination_bound(safe: BoxSet) -> int:
    """Iteration bound of the synthesis recursion: |cells(safe)| + 1."""
    return safe.cell_count + 1


def atlas_control(atlas: ControlAtlas, x, tol: float = 0.0) -> np.ndarray:
    return atlas.control_at(x, tol=tol)


# ---------------------------------------------------------------------------
# box verification


@dataclass
class _VerifyContext:
    mlp: Mlp
    grid: GridSpec
    u: ControlDomain
    bounds: LayerBounds
    target_lo: np.ndarray        # (K, d) closed target boxes
    target_hi: np.ndarray
    obstacles: list[OpenBox]     # open cover of the target complement
    target_pull: np.ndarray      # midpoint of the target bounding box
    mip: MipConfig
    objective: str
    candidate_controls: bool


def _make_context(m, target, u, bounds, options) -> _VerifyContext:
    tlo, thi = target.real_bounds()
    obstacles = complement_open_boxes(target.grid, target)
    pull = (tlo.min(axis=0) + thi.max(axis=0)) / 2.0 if tlo.shape[0] else np.zeros(target.grid.ndim)
    return _VerifyContext(
        mlp=m, grid=target.grid, u=u, bounds=bounds,
        target_lo=tlo, target_hi=thi, obstacles=obstacles, target_pull=pull,
        mip=options.mip, objective=options.objective,
        candidate_controls=options.candidate_controls,
    )


def _contained_in_target(ctx: _VerifyContext, out: RealBox) -> bool:
    """Exact containment of a closed box in the target union.

    Equivalent to lying inside the state domain while meeting no open box
    of the complement cover; face contact with an obstacle is allowed.
    """
    lo, hi = np.asarray(out.lo), np.asarray(out.hi)
    if np.any(lo < ctx.grid.lower) or np.any(hi > ctx.grid.upper):
        return False
    for obs in ctx.obstacles:
        if obs.intersects_closed(out.lo, out.hi):
            return False
    return True


def _candidate_controls(ctx: _VerifyContext, box: RealBox) -> list[np.ndarray]:
    u_lo = np.asarray(ctx.u.lower)
    u_hi = np.asarray(ctx.u.upper)
    u_mid = (u_lo + u_hi) / 2.0
    cands = [u_mid]
    _, out0 = reach_boxes(ctx.mlp, box, RealBox.point(u_mid))
    c0 = (np.asarray(out0.lo) + np.asarray(out0.hi)) / 2.0 - ctx.target_pull
    n_u = len(u_lo)
    cols = []
    ok = True
    for q in range(n_u):
        h = (u_hi[q] - u_lo[q]) / 8.0
        if h <= 0:
            ok = False
            break
        probe = u_mid.copy()
        probe[q] += h
        _, outp = reach_boxes(ctx.mlp, box, RealBox.point(probe))
        cp = (np.asarray(outp.lo) + np.asarray(outp.hi)) / 2.0 - ctx.target_pull
        cols.append((cp - c0) / h)
    if ok and cols:
        m_resp = np.column_stack(cols)
        try:
            step, *_ = np.linalg.lstsq(m_resp, -c0, rcond=None)
            cands.insert(0, np.clip(u_mid + step, u_lo, u_hi))
        except np.linalg.LinAlgError:
            pass
    cands.append(u_lo.astype(float))
    cands.append(u_hi.astype(float))
    return cands


def _verify_one(ctx: _VerifyContext, gbox: GridBox):
    """Classify one box: ('verified', u, calls) or ('undetermined'/'filtered'/'limit', None, calls)."""
    lo, hi = ctx.grid.box_bounds(gbox)
    box = RealBox.from_arrays(lo, hi)
    _, fbar = reach_boxes(ctx.mlp, box, RealBox.of_domain(ctx.u))
    flo, fhi = np.asarray(fbar.lo), np.asarray(fbar.hi)
    hits = np.all(ctx.target_lo <= fhi, axis=1) & np.all(ctx.target_hi >= flo, axis=1)
    if not hits.any():
        return "filtered", None, 0

    cands = _candidate_controls(ctx, box) if ctx.candidate_controls else []
    for u_c in cands:
        _, out = reach_boxes(ctx.mlp, box, RealBox.point(u_c))
        if _contained_in_target(ctx, out):
            return "verified", u_c, 0

    model = build_returnability(ctx.mlp, box, ctx.u, _TargetView(ctx), ctx.bounds,
                                ctx.objective, obstacles=ctx.obstacles, fbar=fbar)
    result = mip_solve(model, ctx.mip)
    if result.status == SolveStatus.ITERATION_LIMIT:
        return "limit", None, 1
    if not result.feasible:
        return "undetermined", None, 1
    u_star = result.x[: ctx.mlp.n_u].copy()
    repairs = [u_star]
    if cands:
        for t in (1e-9, 1e-6, 1e-3, 1e-2, 0.1, 0.3):
            repairs.append(u_star + t * (cands[0] - u_star))
    for u_c in repairs:
        u_c = np.clip(u_c, ctx.u.lower, ctx.u.upper)
        _, out = reach_boxes(ctx.mlp, box, RealBox.point(u_c))
        if _contained_in_target(ctx, out):
            return "verified", u_c, 1
    # solver answer did not survive the exact containment re-check
    return "undetermined", None, 1


class _TargetView:
    """Adapter handing build_returnability a pre-quantized target."""

    def __init__(self, ctx: _VerifyContext):
        self.grid = ctx.grid
        self._empty = ctx.target_lo.shape[0] == 0

    def is_empty(self) -> bool:
        return self._empty


def _verify_chunk(ctx: _VerifyContext, boxes: list[GridBox]):
    return [_verify_one(ctx, b) for b in boxes]


def _verify_many(ctx, boxes, jobs, pool):
    if not boxes:
        return []
    if pool is None or jobs <= 1 or len(boxes) < 4:
        return _verify_chunk(ctx, list(boxes))
    chunk = max(1, (len(boxes) + 4 * jobs - 1) // (4 * jobs))
    chunks = [list(boxes[i : i + chunk]) for i in range(0, len(boxes), chunk)]
    futures = [pool.submit(_verify_chunk, ctx, c) for c in chunks]
    out = []
    for f in futures:
        out.extend(f.result())
    return out


def returnable_verification(m: Mlp, i_boxes, target: BoxSet, u: ControlDomain, *,
                            bounds: LayerBounds | None = None,
                            options: SynthOptions | None = None):
    """One-step returnability check of each box against the target union.

    A box whose full-control reachable box misses the target entirely is
    undetermined without a solver call; otherwise a single admissible
    control covering the whole box is searched for.  Output order follows
    input order.
    """
    opts = options or SynthOptions()
    if bounds is None:
        domain = RealBox(target.grid.lower, target.grid.upper)
        bounds = global_bounds(m, domain, u)
    ctx = _make_context(m, target, u, bounds, opts)
    recs = _verify_chunk(ctx, list(i_boxes))
    verified = [(b, rec[1]) for b, rec in zip(i_boxes, recs) if rec[0] == "verified"]
    undetermined = [b for b, rec in zip(i_boxes, recs) if rec[0] != "verified"]
    return verified, undetermined


def one_step_returnable_q(m: Mlp, i_set: BoxSet, target: BoxSet, u: ControlDomain, *,
                          bounds: LayerBounds | None = None,
                          options: SynthOptions | None = None,
                          pool=None):
    """One-step returnable subset of ``i_set`` into ``target``.

    Failed non-basis boxes are split and retried until only basis cells
    fail; those are dropped.  Returns the subset, its per-box controls, and
    iteration statistics.
    """
    opts = options or SynthOptions()
    if bounds is None:
        domain = RealBox(target.grid.lower, target.grid.upper)
        bounds = global_bounds(m, domain, u)
    stats = IterationStats()
    if i_set.is_empty() or target.is_empty():
        return BoxSet.empty(i_set.grid), {}, stats
    ctx = _make_context(m, target, u, bounds, opts)
    pairs: list[tuple[GridBox, np.ndarray]] = []
    work = list(i_set.boxes)
    while work:
        recs = _verify_many(ctx, work, opts.jobs, pool)
        nxt: list[GridBox] = []
        for box, (kind, u_c, calls) in zip(work, recs):
            stats.solver_calls += calls
            if kind == "verified":
                pairs.append((box, u_c))
                stats.verified += 1
                continue
            if kind == "limit":
                stats.limit_flags += 1
            if box.is_basis():
                stats.discarded += 1
            else:
                nxt.extend(partition_box(box))
                stats.partitioned += 1
        work = sorted(nxt, key=lambda b: (b.lo, b.hi))
    subset = BoxSet(i_set.grid, [b for b, _ in pairs], validate=False)
    return subset, dict(pairs), stats


def synthesize_cis(m: Mlp, grid: GridSpec, safe: BoxSet, u: ControlDomain,
                   options: SynthOptions | None = None) -> ControlAtlas:
    """Fixed-point recursion producing an invariant set and its control atlas.

    Starting from the quantized safe set, each iteration keeps the states
    that can be driven back into the previous iterate in one step.  The
    recursion stops when the covered cell set repeats; the final iterate is
    either empty or invariant under the stored piecewise-constant controls.
    """
    opts = options or SynthOptions()
    if safe.is_empty():
        return ControlAtlas(BoxSet.empty(grid), {}, 0, u,
                            history=[safe] if opts.keep_history else None)
    domain = RealBox(grid.lower, grid.upper)
    bounds = global_bounds(m, domain, u)
    history = [safe] if opts.keep_history else None
    prev = safe
    iterations = 0
    solver_calls = 0
    pool = None
    try:
        if opts.jobs > 1:
            pool = ProcessPoolExecutor(max_workers=opts.jobs)
        while True:
            cur, pairs, stats = one_step_returnable_q(
                m, prev, prev, u, bounds=bounds, options=opts, pool=pool)
            iterations += 1
            solver_calls += stats.solver_calls
            if history is not None:
                history.append(cur)
            if opts.progress is not None:
                opts.progress(ProgressEvent(iterations, cur.cell_count, stats.verified,
                                            stats.partitioned, stats.discarded, solver_calls))
            if cur.indices() == prev.indices():
                return ControlAtlas(cur, pairs, iterations, u, history=history)
            prev = cur
    finally:
        if pool is not None:
            pool.shutdown()


# ---------------------------------------------------------------------------
# certificates


@dataclass
class AtlasReport:
    ok: bool
    checked: int
    bad_boxes: list[GridBox]
    message: str


def verify_atlas(m: Mlp, atlas: ControlAtlas, tol: float = 0.0) -> AtlasReport:
    """Independent invariance certificate for a control atlas.

    Re-derives, for every box, the interval image under its stored control
    and checks exact containment in the synthesized set; also checks control
    admissibility and that the stored boxes tile the set.  Uses only the
    interval propagator, so it cross-checks the encoder/solver stack.
    """
    cis = atlas.cis
    if cis.is_empty():
        return AtlasReport(True, 0, [], "empty invariant set")
    grid = cis.grid
    cover = set()
    for box in atlas.controls:
        cover.update(grid.flat_index(c) for c in box.iter_cells())
    if frozenset(cover) != cis.indices():
        return AtlasReport(False, 0, [], "atlas boxes do not tile the invariant set")
    obstacles = complement_open_boxes(grid, cis)
    bad = []
    for box in cis.boxes:
        u_c = atlas.controls[box]
        if not atlas.control_domain.contains(u_c, tol=1e-12):
            bad.append(box)
            continue
        lo, hi = grid.box_bounds(box)
        _, out = reach_boxes(m, RealBox.from_arrays(lo, hi), RealBox.point(np.asarray(u_c)))
        olo, ohi = np.asarray(out.lo), np.asarray(out.hi)
        if np.any(olo < np.asarray(grid.lower) - tol) or np.any(ohi > np.asarray(grid.upper) + tol):
            bad.append(box)
            continue
        for obs in obstacles:
            if all(a < oh - tol and b > ol + tol
                   for a, b, ol, oh in zip(out.lo, out.hi, obs.lo, obs.hi)):
                bad.append(box)
                break
    ok = not bad
    msg = "all boxes certified" if ok else f"{len(bad)} of {len(cis.boxes)} boxes fail containment"
    return AtlasReport(ok, len(cis.boxes), bad, msg)


def closed_loop_rollout(m: Mlp, atlas: ControlAtlas, x0: np.ndarray, steps: int,
                        tol: float = 1e-9):
    """Simulate the atlas feedback law from row-stacked initial states.

    Returns ``(all_inside, exit_step, exit_state)``; states are located by
    their grid cell with a tolerant boundary fallback.
    """
    grid = atlas.grid
    cell_map, u_table = atlas.lookup_tables()
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    lower = np.asarray(grid.lower)
    d = grid.d_min
    cells = np.asarray(grid.cells)
    strides = np.asarray(grid.strides)
    for t in range(steps):
        k = np.floor((x - lower) / d).astype(np.int64)
        np.clip(k, 0, cells - 1, out=k)
        flat = k @ strides
        bid = cell_map[flat]
        misses = np.flatnonzero(bid < 0)
        for i in misses:
            bid[i] = _locate_tolerant(atlas, cell_map, x[i], tol)
            if bid[i] < 0:
                return False, t, x[i].copy()
        x = forward_batch(m, x, u_table[bid])
    return True, steps, None


def _locate_tolerant(atlas: ControlAtlas, cell_map: np.ndarray, x, tol: float) -> int:
    grid = atlas.grid
    best = -1
    for c in grid.cells_containing(x, tol=tol):
        bid = cell_map[grid.flat_index(c)]
        if bid >= 0 and (best < 0 or bid < best):
            best = int(bid)
    return best
