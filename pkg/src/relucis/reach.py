"""Interval reachability through the dynamics network.

Propagates coordinatewise bounds layer by layer: the affine step splits
each weight row into its positive and negative parts (so each bound is
attained at a vertex of the input box), and the ReLU step clamps both
bounds at zero.  The output box over-approximates the true one-step
reachable set for any state/control boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError
from .network import ControlDomain, Mlp

__all__ = [
    "RealBox",
    "LayerBounds",
    "lin_layer",
    "reach_boxes",
    "f_bar_n",
    "global_bounds",
    "horizon_bounds",
]


@dataclass(frozen=True)
class RealBox:
    """Closed axis-aligned box in real coordinates, lo <= hi elementwise."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise DimMismatchError("box corner lengths differ")
        if not all(a <= b for a, b in zip(self.lo, self.hi)):
            raise DimMismatchError(f"box has lo > hi: {self.lo} vs {self.hi}")

    @classmethod
    def from_arrays(cls, lo, hi) -> "RealBox":
        return cls(tuple(float(v) for v in np.asarray(lo).reshape(-1)),
                   tuple(float(v) for v in np.asarray(hi).reshape(-1)))

    @classmethod
    def point(cls, x) -> "RealBox":
        x = tuple(float(v) for v in np.asarray(x).reshape(-1))
        return cls(x, x)

    @classmethod
    def of_domain(cls, dom: ControlDomain) -> "RealBox":
        return cls(dom.lower, dom.upper)

    @property
    def ndim(self) -> int:
        return len(self.lo)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lo) - tol) and np.all(x <= np.asarray(self.hi) + tol))

    def contains_box(self, other: "RealBox", tol: float = 0.0) -> bool:
        return all(a - tol <= c and d <= b + tol
                   for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def intersects(self, other: "RealBox") -> bool:
        """Closed-box intersection test; shared faces count."""
        return all(a <= d and c <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))


@dataclass
class LayerBounds:
    """Per-layer bounds: ``pre[i]`` bounds pre-activations of affine layer
    i+1, ``post[i]`` the corresponding clamped post-activation bounds
    (hidden layers only)."""

    pre: list[tuple[np.ndarray, np.ndarray]]
    post: list[tuple[np.ndarray, np.ndarray]]

    @property
    def output(self) -> RealBox:
        lo, hi = self.pre[-1]
        return RealBox.from_arrays(lo, hi)


def lin_layer(a, b, W, B) -> tuple[np.ndarray, np.ndarray]:
    """Tight coordinatewise bounds of ``W z + B`` over ``z in [a, b]``.

    Each weight row is split by sign: positive entries take the matching
    input bound, negative entries take the opposite one, so both bounds are
    attained at vertices of the input box.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    W = np.asarray(W, dtype=float)
    B = np.asarray(B, dtype=float).reshape(-1)
    if a.shape != b.shape or W.ndim != 2 or W.shape[1] != a.shape[0] or B.shape[0] != W.shape[0]:
        raise DimMismatchError(
            f"lin_layer shapes: a{a.shape} b{b.shape} W{W.shape} B{B.shape}"
        )
    if np.any(a > b):
        raise DimMismatchError("lower bound exceeds upper bound")
    wp = np.maximum(W, 0.0)
    wn = np.minimum(W, 0.0)
    ahat = wp @ a + wn @ b + B
    bhat = wp @ b + wn @ a + B
    return ahat, bhat


def reach_boxes(m: Mlp, xk: RealBox, uk: RealBox) -> tuple[LayerBounds, RealBox]:
    """Propagate the stacked state/control box through every layer.

    Returns the collected per-layer bounds and the output box, which
    contains the image of ``xk x uk`` under the dynamics.
    """
    if xk.ndim != m.n_x or uk.ndim != m.n_u:
        raise DimMismatchError(f"expected dims ({m.n_x}, {m.n_u}), got ({xk.ndim}, {uk.ndim})")
    a = np.concatenate([xk.lo, uk.lo])
    b = np.concatenate([xk.hi, uk.hi])
    pre, post = [], []
    for i, (w, bias) in enumerate(zip(m.weights, m.biases)):
        ahat, bhat = lin_layer(a, b, w, bias)
        pre.append((ahat, bhat))
        if i < m.n_layers - 1:
            a = np.maximum(0.0, ahat)
            b = np.maximum(0.0, bhat)
            post.append((a, b))
    bounds = LayerBounds(pre, post)
    return bounds, bounds.output


def f_bar_n(m: Mlp, x0: RealBox, u: ControlDomain, n: int) -> RealBox:
    """n-fold composition of the one-step box map under the full control box."""
    if n < 1:
        raise DimMismatchError("composition length must be >= 1")
    ubox = RealBox.of_domain(u)
    box = x0
    for _ in range(n):
        _, box = reach_boxes(m, box, ubox)
    return box


def global_bounds(m: Mlp, x: RealBox, u: ControlDomain) -> LayerBounds:
    """Layer bounds over the whole state/control domain (big-M source)."""
    bounds, _ = reach_boxes(m, x, RealBox.of_domain(u))
    return bounds


def horizon_bounds(m: Mlp, x0, u: ControlDomain, N: int) -> list[LayerBounds]:
    """Per-prediction-step layer bounds seeded from the point ``x0``.

    Step n feeds the previous step's output box back as the state box, with
    the full control domain at every step.
    """
    if N < 1:
        raise DimMismatchError("horizon must be >= 1")
    ubox = RealBox.of_domain(u)
    state = RealBox.point(x0)
    out = []
    for _ in range(N):
        bounds, state = reach_boxes(m, state, ubox)
        out.append(bounds)
    return out
