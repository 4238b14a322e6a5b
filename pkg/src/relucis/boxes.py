"""Exact hyperbox and box-union algebra over a quantized state grid.

The state domain is quantized into axis-aligned basis cells of side
``d_min`` (the last cell of each axis is clipped to the domain's upper
bound).  Boxes are stored as integer cell coordinates, so every set
operation is exact integer arithmetic; real coordinates appear only when
a box is handed to the reachability or optimization layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AlreadyBasisError,
    DegenerateDomainError,
    EmptySafeSetError,
    GridMismatchError,
    NonPositiveResolutionError,
)

__all__ = [
    "GridSpec",
    "GridBox",
    "BoxSet",
    "OpenBox",
    "make_grid",
    "quantize_safe_set",
    "partition_box",
    "boxset_algebra",
    "complement_open_boxes",
]

# Relative slack used only when snapping explicitly supplied real boxes
# onto the grid; all internal arithmetic is exact.
_SNAP_REL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Quantization of a box-shaped state domain into unit cells.

    ``cells[j] = ceil((upper[j] - lower[j]) / d_min)``; the real coordinate
    of integer grid index ``k`` along axis ``j`` is
    ``min(lower[j] + k * d_min, upper[j])``.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    d_min: float
    cells: tuple[int, ...]

    @property
    def ndim(self) -> int:
        return len(self.lower)

    @property
    def n_cells(self) -> int:
        return math.prod(self.cells)

    @property
    def strides(self) -> tuple[int, ...]:
        out = [1] * self.ndim
        for j in range(self.ndim - 2, -1, -1):
            out[j] = out[j + 1] * self.cells[j + 1]
        return tuple(out)

    def coord(self, dim: int, k: int) -> float:
        return min(self.lower[dim] + k * self.d_min, self.upper[dim])

    def box_bounds(self, box: "GridBox") -> tuple[np.ndarray, np.ndarray]:
        """Real lower/upper corner vectors of a grid box."""
        lo = np.array([self.coord(j, box.lo[j]) for j in range(self.ndim)])
        hi = np.array([self.coord(j, box.hi[j]) for j in range(self.ndim)])
        return lo, hi

    def validate_box(self, box: "GridBox") -> None:
        if len(box.lo) != self.ndim or len(box.hi) != self.ndim:
            raise DegenerateDomainError(f"box dimension {len(box.lo)} != grid dimension {self.ndim}")
        for j in range(self.ndim):
            if not (0 <= box.lo[j] < box.hi[j] <= self.cells[j]):
                raise DegenerateDomainError(f"box {box} out of grid range along axis {j}")

    def flat_index(self, cell: Sequence[int]) -> int:
        s = self.strides
        return sum(int(cell[j]) * s[j] for j in range(self.ndim))

    def unflatten(self, idx: int) -> tuple[int, ...]:
        out = []
        for j, s in enumerate(self.strides):
            out.append(idx // s)
            idx %= s
        return tuple(out)

    def cell_of_point(self, x: Sequence[float]) -> tuple[int, ...]:
        """Integer coordinates of the cell whose half-open interior holds x (clipped)."""
        out = []
        for j in range(self.ndim):
            k = int(math.floor((x[j] - self.lower[j]) / self.d_min))
            out.append(min(max(k, 0), self.cells[j] - 1))
        return tuple(out)

    def cells_containing(self, x: Sequence[float], tol: float = 0.0) -> list[tuple[int, ...]]:
        """All cells whose closure contains x (within tol), lexicographically sorted."""
        axes: list[list[int]] = []
        for j in range(self.ndim):
            ks = []
            base = int(math.floor((x[j] - self.lower[j]) / self.d_min))
            for k in (base - 1, base, base + 1):
                if 0 <= k < self.cells[j]:
                    if self.coord(j, k) - tol <= x[j] <= self.coord(j, k + 1) + tol:
                        ks.append(k)
            if not ks:
                return []
            axes.append(ks)
        out: list[tuple[int, ...]] = [()]
        for ks in axes:
            out = [c + (k,) for c in out for k in ks]
        return sorted(out)


@dataclass(frozen=True)
class GridBox:
    """Axis-aligned box in integer grid coordinates, ``lo < hi`` elementwise.

    A box with every side length equal to one is a basis cell.
    """

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    @property
    def ndim(self) -> int:
        return len(self.lo)

    def is_basis(self) -> bool:
        return all(h - l == 1 for l, h in zip(self.lo, self.hi))

    def side_lengths(self) -> tuple[int, ...]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))

    def cell_count(self) -> int:
        return math.prod(self.side_lengths())

    def overlaps(self, other: "GridBox") -> bool:
        return all(a < d and c < b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def iter_cells(self) -> Iterable[tuple[int, ...]]:
        ranges = [range(l, h) for l, h in zip(self.lo, self.hi)]
        out = [()]
        for r in ranges:
            out = [c + (k,) for c in out for k in r]
        return out


@dataclass(frozen=True)
class OpenBox:
    """Open axis-aligned box in real coordinates; endpoints sit on the grid."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def intersects_closed(self, lo: Sequence[float], hi: Sequence[float]) -> bool:
        """Whether the open box meets the closed box [lo, hi].

        Face contact does not count: the open box excludes its boundary.
        """
        return all(a < oh and b > ol for a, b, ol, oh in zip(lo, hi, self.lo, self.hi))


class BoxSet:
    """Finite disjoint union of grid boxes over one grid.

    The box list is kept in lexicographic ``lo`` order; the set of covered
    basis-cell indices is the canonical representation, so two box sets are
    equal exactly when their index sets coincide.
    """

    __slots__ = ("grid", "boxes", "_indices")

    def __init__(self, grid: GridSpec, boxes: Iterable[GridBox], *, validate: bool = True):
        self.grid = grid
        self.boxes: tuple[GridBox, ...] = tuple(sorted(boxes, key=lambda b: (b.lo, b.hi)))
        self._indices: frozenset[int] | None = None
        if validate:
            for b in self.boxes:
                grid.validate_box(b)
            for i in range(len(self.boxes)):
                for j in range(i + 1, len(self.boxes)):
                    if self.boxes[i].overlaps(self.boxes[j]):
                        raise DegenerateDomainError(
                            f"boxes {self.boxes[i]} and {self.boxes[j]} overlap"
                        )

    @classmethod
    def empty(cls, grid: GridSpec) -> "BoxSet":
        return cls(grid, (), validate=False)

    @classmethod
    def from_indices(cls, grid: GridSpec, indices: Iterable[int]) -> "BoxSet":
        boxes = _merge_cells(grid, frozenset(indices))
        out = cls(grid, boxes, validate=False)
        out._indices = frozenset(indices)
        return out

    def indices(self) -> frozenset[int]:
        if self._indices is None:
            idx: set[int] = set()
            for b in self.boxes:
                idx.update(self.grid.flat_index(c) for c in b.iter_cells())
            self._indices = frozenset(idx)
        return self._indices

    @property
    def cell_count(self) -> int:
        return len(self.indices())

    def is_empty(self) -> bool:
        return not self.boxes

    def equals(self, other: "BoxSet") -> bool:
        self._check_grid(other)
        return self.indices() == other.indices()

    def union(self, other: "BoxSet") -> "BoxSet":
        self._check_grid(other)
        return BoxSet.from_indices(self.grid, self.indices() | other.indices())

    def intersect(self, other: "BoxSet") -> "BoxSet":
        self._check_grid(other)
        return BoxSet.from_indices(self.grid, self.indices() & other.indices())

    def difference(self, other: "BoxSet") -> "BoxSet":
        self._check_grid(other)
        return BoxSet.from_indices(self.grid, self.indices() - other.indices())

    def complement(self) -> "BoxSet":
        full = frozenset(range(self.grid.n_cells))
        return BoxSet.from_indices(self.grid, full - self.indices())

    def real_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-box real corner arrays, shape (n_boxes, ndim) each."""
        if not self.boxes:
            d = self.grid.ndim
            return np.zeros((0, d)), np.zeros((0, d))
        lo = np.array([self.grid.box_bounds(b)[0] for b in self.boxes])
        hi = np.array([self.grid.box_bounds(b)[1] for b in self.boxes])
        return lo, hi

    def contains_point(self, x: Sequence[float], tol: float = 0.0) -> bool:
        lo, hi = self.real_bounds()
        if lo.shape[0] == 0:
            return False
        xv = np.asarray(x, dtype=float)
        ok = np.all(lo - tol <= xv, axis=1) & np.all(xv <= hi + tol, axis=1)
        return bool(ok.any())

    def _check_grid(self, other: "BoxSet") -> None:
        if self.grid != other.grid:
            raise GridMismatchError("box sets live on different grids")

    def __repr__(self) -> str:  # pragma: no cover
        return f"BoxSet({len(self.boxes)} boxes, {self.cell_count} cells)"


def make_grid(lower: Sequence[float], upper: Sequence[float], d_min: float) -> GridSpec:
    """Quantize the domain [lower, upper] into cells of side d_min.

    ``cells[j] = ceil(span_j / d_min)``; a ratio within 1e-9 of an integer is
    treated as that integer so exact divisions never grow a spurious sliver
    cell from floating-point division.
    """
    lo = tuple(float(v) for v in lower)
    hi = tuple(float(v) for v in upper)
    if len(lo) != len(hi):
        raise DegenerateDomainError("lower and upper have different lengths")
    if not all(a < b for a, b in zip(lo, hi)):
        raise DegenerateDomainError(f"domain must satisfy lower < upper, got {lo} vs {hi}")
    if not d_min > 0:
        raise NonPositiveResolutionError(f"d_min must be positive, got {d_min}")
    cells = []
    for a, b in zip(lo, hi):
        ratio = (b - a) / d_min
        near = round(ratio)
        cells.append(int(near) if abs(ratio - near) <= 1e-9 * max(1.0, abs(ratio)) else math.ceil(ratio))
    return GridSpec(lo, hi, float(d_min), tuple(cells))


def partition_box(box: GridBox) -> tuple[GridBox, GridBox]:
    """Split a box in two along its longest axis at the floor midpoint.

    Ties pick the lowest axis index.  The halves are disjoint and their
    union is the input box.
    """
    sides = box.side_lengths()
    if all(s == 1 for s in sides):
        raise AlreadyBasisError(f"{box} is a basis cell")
    dim = max(range(box.ndim), key=lambda j: sides[j])  # first max: lowest axis wins ties
    mid = box.lo[dim] + sides[dim] // 2
    hi1 = tuple(mid if j == dim else v for j, v in enumerate(box.hi))
    lo2 = tuple(mid if j == dim else v for j, v in enumerate(box.lo))
    return GridBox(box.lo, hi1), GridBox(lo2, box.hi)


def quantize_safe_set(
    grid: GridSpec,
    halfspaces: Sequence[tuple[Sequence[float], float]] | None = None,
    *,
    boxes: Sequence[tuple[Sequence[float], Sequence[float]]] | None = None,
) -> BoxSet:
    """Inner-approximate a safe set by the basis cells it fully contains.

    Either ``halfspaces`` (pairs ``(normal, offset)`` meaning
    ``normal . x <= offset``, valid for convex sets: a cell is kept when all
    its vertices satisfy every halfspace) or ``boxes`` (explicit real boxes,
    snapped inward onto the grid) must be given.
    """
    if (halfspaces is None) == (boxes is None):
        raise ValueError("provide exactly one of halfspaces or boxes")
    if halfspaces is not None:
        keep = _cells_inside_halfspaces(grid, halfspaces)
        indices = frozenset(np.flatnonzero(keep.ravel(order="C")).tolist())
    else:
        indices = _cells_of_real_boxes(grid, boxes)
    if not indices:
        raise EmptySafeSetError("no basis cell lies inside the safe set")
    return BoxSet.from_indices(grid, indices)


def _cells_inside_halfspaces(grid, halfspaces) -> np.ndarray:
    axes_lo = [np.array([grid.coord(j, k) for k in range(grid.cells[j])]) for j in range(grid.ndim)]
    axes_hi = [np.array([grid.coord(j, k + 1) for k in range(grid.cells[j])]) for j in range(grid.ndim)]
    los = np.meshgrid(*axes_lo, indexing="ij")
    his = np.meshgrid(*axes_hi, indexing="ij")
    keep = np.ones(grid.cells, dtype=bool)
    for normal, offset in halfspaces:
        n = np.asarray(normal, dtype=float)
        if n.shape != (grid.ndim,):
            raise DegenerateDomainError(f"halfspace normal has shape {n.shape}, expected ({grid.ndim},)")
        # Max of n.x over a cell is attained coordinatewise at a corner.
        support = sum(np.maximum(n[j] * los[j], n[j] * his[j]) for j in range(grid.ndim))
        keep &= support <= float(offset)
    return keep


def _cells_of_real_boxes(grid, boxes) -> frozenset[int]:
    tol = _SNAP_REL * grid.d_min
    indices: set[int] = set()
    for blo, bhi in boxes:
        lo_idx, hi_idx = [], []
        degenerate = False
        for j in range(grid.ndim):
            a = max(float(blo[j]), grid.lower[j])
            b = min(float(bhi[j]), grid.upper[j])
            kl = int(math.ceil((a - grid.lower[j]) / grid.d_min - tol))
            if b >= grid.upper[j] - tol:
                kh = grid.cells[j]
            else:
                kh = int(math.floor((b - grid.lower[j]) / grid.d_min + tol))
            kl, kh = max(kl, 0), min(kh, grid.cells[j])
            if kl >= kh:
                degenerate = True
                break
            lo_idx.append(kl)
            hi_idx.append(kh)
        if degenerate:
            continue
        box = GridBox(tuple(lo_idx), tuple(hi_idx))
        indices.update(grid.flat_index(c) for c in box.iter_cells())
    return frozenset(indices)


def boxset_algebra(a: BoxSet, b: BoxSet, op: str):
    """Set algebra on basis-index sets: union/intersect/difference/equals/is_empty."""
    if op == "union":
        return a.union(b)
    if op == "intersect":
        return a.intersect(b)
    if op == "difference":
        return a.difference(b)
    if op == "equals":
        return a.equals(b)
    if op == "is_empty":
        return a.is_empty()
    raise ValueError(f"unknown op {op!r}")


def complement_open_boxes(grid: GridSpec, t: BoxSet) -> list[OpenBox]:
    """Open-box cover of the complement of ``t`` within the grid domain.

    A closed grid-domain box is contained in ``t`` (up to faces shared with
    the complement, which open boxes exclude) exactly when it intersects no
    returned member.  Complement cells are merged greedily: runs along axis
    0 first, then equal runs along each higher axis.
    """
    if t.grid != grid:
        raise GridMismatchError("box set does not belong to this grid")
    comp = frozenset(range(grid.n_cells)) - t.indices()
    merged = _merge_cells(grid, comp)
    out = []
    for b in merged:
        lo, hi = grid.box_bounds(b)
        out.append(OpenBox(tuple(lo.tolist()), tuple(hi.tolist())))
    return out


def _merge_cells(grid: GridSpec, indices: frozenset[int]) -> tuple[GridBox, ...]:
    """Greedy merge of basis cells into maximal disjoint boxes (canonical order)."""
    if not indices:
        return ()
    d = grid.ndim
    cells = sorted((grid.unflatten(i) for i in indices), key=lambda c: (c[1:], c[0]))
    boxes: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    run_start = run_end = None
    run_tail: tuple[int, ...] | None = None
    for c in cells:
        tail = c[1:]
        if run_tail == tail and c[0] == run_end:
            run_end += 1
            continue
        if run_tail is not None:
            boxes.append(((run_start, *run_tail), (run_end, *(t + 1 for t in run_tail))))
        run_start, run_end, run_tail = c[0], c[0] + 1, tail
    boxes.append(((run_start, *run_tail), (run_end, *(t + 1 for t in run_tail))))

    for dim in range(1, d):
        def key(bx):
            lo, hi = bx
            k = tuple((lo[j], hi[j]) for j in range(d) if j != dim)
            return (k, lo[dim])

        boxes.sort(key=key)
        merged: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
        for lo, hi in boxes:
            if merged:
                plo, phi = merged[-1]
                same = all(plo[j] == lo[j] and phi[j] == hi[j] for j in range(d) if j != dim)
                if same and phi[dim] == lo[dim]:
                    merged[-1] = (plo, tuple(hi[j] if j == dim else phi[j] for j in range(d)))
                    continue
            merged.append((lo, hi))
        boxes = merged

    out = tuple(GridBox(lo, hi) for lo, hi in sorted(boxes))
    return out
