"""ReLU multilayer-perceptron dynamics: evaluation, construction, file I/O.

The dynamics model maps a stacked state/control vector through dense
layers with elementwise ``max(0, .)`` between them; the final layer is
affine.  Input width is ``n_x + n_u`` and output width is ``n_x``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, SchemaError

__all__ = [
    "Mlp",
    "ControlDomain",
    "forward",
    "forward_trace",
    "linear_to_mlp",
    "save_mlp",
    "load_mlp",
]


@dataclass(frozen=True)
class Mlp:
    """Weights and biases of the dynamics network, immutable after creation."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    n_x: int
    n_u: int

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimMismatchError("weights and biases must pair up, one per layer")
        prev = self.n_x + self.n_u
        for i, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise DimMismatchError(f"layer {i}: weight/bias shapes {w.shape}/{b.shape}")
            if w.shape[1] != prev:
                raise DimMismatchError(
                    f"layer {i}: expected {prev} input columns, got {w.shape[1]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DimMismatchError(f"layer {i}: non-finite entries")
            prev = w.shape[0]
        if prev != self.n_x:
            raise DimMismatchError(f"output width {prev} != state dimension {self.n_x}")
        for arr in (*self.weights, *self.biases):
            arr.flags.writeable = False

    @property
    def n_layers(self) -> int:
        """Number of affine layers (hidden layers plus the output layer)."""
        return len(self.weights)

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights[:-1])


@dataclass(frozen=True)
class ControlDomain:
    """Admissible control box [lower, upper]."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise DimMismatchError("control bounds have different lengths")
        if not all(a <= b for a, b in zip(self.lower, self.upper)):
            raise DimMismatchError("control lower bound exceeds upper bound")

    @property
    def ndim(self) -> int:
        return len(self.lower)

    def mid(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2.0

    def clamp(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)

    def contains(self, u: np.ndarray, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= np.asarray(self.lower) - tol) and np.all(u <= np.asarray(self.upper) + tol))


def _stack_input(m: Mlp, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if x.shape[0] != m.n_x or u.shape[0] != m.n_u:
        raise DimMismatchError(f"expected dims ({m.n_x}, {m.n_u}), got ({x.shape[0]}, {u.shape[0]})")
    return np.concatenate([x, u])


def forward(m: Mlp, x, u) -> np.ndarray:
    """One dynamics step: ReLU between layers, affine output layer."""
    z = _stack_input(m, x, u)
    for w, b in zip(m.weights[:-1], m.biases[:-1]):
        z = np.maximum(0.0, w @ z + b)
    return m.weights[-1] @ z + m.biases[-1]


def forward_trace(m: Mlp, x, u):
    """Forward pass keeping per-layer pre/post activations.

    Returns ``(x_next, [(zhat_1, z_1), ..., (zhat_{L-1}, z_{L-1})])``.
    """
    z = _stack_input(m, x, u)
    trace = []
    for w, b in zip(m.weights[:-1], m.biases[:-1]):
        zhat = w @ z + b
        z = np.maximum(0.0, zhat)
        trace.append((zhat, z))
    return m.weights[-1] @ z + m.biases[-1], trace


def forward_batch(m: Mlp, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized dynamics step for row-stacked states/controls."""
    z = np.hstack([np.atleast_2d(x), np.atleast_2d(u)])
    for w, b in zip(m.weights[:-1], m.biases[:-1]):
        z = np.maximum(0.0, z @ w.T + b)
    return z @ m.weights[-1].T + m.biases[-1]


def linear_to_mlp(A, Bu, c=None) -> Mlp:
    """Exact ReLU embedding of the affine map ``x+ = A x + Bu u + c``.

    Uses the identity ``t = max(0, t) - max(0, -t)``: the hidden layer holds
    the stacked positive/negative parts, the output layer subtracts them.
    Interval propagation through this construction is exact per coordinate.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Bu = np.atleast_2d(np.asarray(Bu, dtype=float))
    n_x = A.shape[0]
    if A.shape != (n_x, n_x):
        raise DimMismatchError(f"A must be square, got {A.shape}")
    if Bu.shape[0] != n_x:
        if Bu.shape == (1, n_x):  # accept a flat vector for single-input systems
            Bu = Bu.reshape(n_x, 1)
        else:
            raise DimMismatchError(f"Bu has {Bu.shape[0]} rows, expected {n_x}")
    n_u = Bu.shape[1]
    c = np.zeros(n_x) if c is None else np.asarray(c, dtype=float).reshape(-1)
    if c.shape[0] != n_x:
        raise DimMismatchError(f"offset has length {c.shape[0]}, expected {n_x}")
    m1 = np.hstack([A, Bu])
    w1 = np.vstack([m1, -m1])
    b1 = np.concatenate([c, -c])
    w2 = np.hstack([np.eye(n_x), -np.eye(n_x)])
    b2 = np.zeros(n_x)
    return Mlp((w1, w2), (b1, b2), n_x=n_x, n_u=n_u)


def mlp_to_dict(m: Mlp) -> dict:
    return {
        "kind": "relu_mlp",
        "n_x": m.n_x,
        "n_u": m.n_u,
        "layers": [
            {"rows": int(w.shape[0]), "cols": int(w.shape[1]),
             "weights": [[float(v) for v in row] for row in w],
             "bias": [float(v) for v in b]}
            for w, b in zip(m.weights, m.biases)
        ],
    }


def mlp_from_dict(doc: dict) -> Mlp:
    if not isinstance(doc, dict):
        raise SchemaError("model document is not an object")
    for key in ("n_x", "n_u", "layers"):
        if key not in doc:
            raise SchemaError(f"model document missing field {key!r}")
    if doc.get("kind", "relu_mlp") != "relu_mlp":
        raise SchemaError(f"unsupported model kind {doc.get('kind')!r}")
    layers = doc["layers"]
    if not isinstance(layers, list) or not layers:
        raise SchemaError("field 'layers' must be a non-empty list")
    weights, biases = [], []
    for i, layer in enumerate(layers, start=1):
        if not isinstance(layer, dict):
            raise SchemaError(f"layer {i} is not an object")
        for key in ("rows", "cols", "weights", "bias"):
            if key not in layer:
                raise SchemaError(f"layer {i} missing field {key!r}")
        w = np.array(layer["weights"], dtype=float)
        b = np.array(layer["bias"], dtype=float)
        if w.ndim != 2 or w.shape != (layer["rows"], layer["cols"]):
            raise SchemaError(f"layer {i} weights do not match declared rows x cols")
        if b.shape != (layer["rows"],):
            raise SchemaError(f"layer {i} bias length does not match rows")
        weights.append(w)
        biases.append(b)
    return Mlp(tuple(weights), tuple(biases), n_x=int(doc["n_x"]), n_u=int(doc["n_u"]))


def save_mlp(m: Mlp, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mlp_to_dict(m), fh, indent=1)
        fh.write("\n")


def load_mlp(path) -> Mlp:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"model file is not valid JSON: {exc}") from exc
    return mlp_from_dict(doc)
