"""Mixed-integer encodings of the verification and control problems.

Three building blocks are composed into two model builders:

* a ReLU block that carries an interval ``[a, b] = max(0, [ahat, bhat])``
  through a hidden layer with three activation-status binaries per neuron;
* a box-inclusion block forcing a candidate box to avoid every open box of
  a target-set complement (two binaries per obstacle per state coordinate);
* a pointwise big-M ReLU block for trajectory prediction
  (one binary per neuron per step).

``build_returnability`` asks for a single admissible control driving every
state of a box into a target union in one step; ``build_mpc`` assembles the
receding-horizon tracking problem constrained to a control invariant set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import BoxSet, OpenBox, complement_open_boxes
from .errors import DimMismatchError, EmptyCisError, EmptyTargetError, OutsideDomainError
from .mip import MipModel
from .network import ControlDomain, Mlp, forward_trace
from .reach import LayerBounds, RealBox, horizon_bounds, reach_boxes

__all__ = [
    "ReluBlockVars",
    "InclusionVars",
    "MpcEncoding",
    "encode_milc_relu",
    "encode_milc_inc",
    "encode_pointwise_relu",
    "prune_obstacles",
    "build_returnability",
    "build_mpc",
    "warm_start",
]


@dataclass
class ReluBlockVars:
    """Variable ids of one interval ReLU block (per hidden layer)."""

    a_hat: list[int]
    b_hat: list[int]
    a: list[int]
    b: list[int]
    alpha: list[int]
    beta: list[int]
    gamma: list[int]


@dataclass
class InclusionVars:
    """Per-obstacle binary ids of one box-inclusion block."""

    phi: list[list[int]]
    psi: list[list[int]]
    obstacles: list[OpenBox]


def encode_milc_relu(model: MipModel, ahat_ids, bhat_ids, zlo, zhi) -> ReluBlockVars:
    """Rows forcing ``[a, b] = max(0, [ahat, bhat])`` coordinatewise.

    ``zlo``/``zhi`` are valid pre-activation bounds; exactly one of the three
    binaries is set per neuron, selecting whether the interval is entirely
    negative, straddles zero, or is entirely nonnegative.
    """
    n = len(ahat_ids)
    if len(bhat_ids) != n or len(zlo) != n or len(zhi) != n:
        raise DimMismatchError("ReLU block inputs have mismatched lengths")
    a = [model.add_continuous(max(0.0, zlo[j]), max(0.0, zhi[j])) for j in range(n)]
    b = [model.add_continuous(max(0.0, zlo[j]), max(0.0, zhi[j])) for j in range(n)]
    alpha = [model.add_binary() for _ in range(n)]
    beta = [model.add_binary() for _ in range(n)]
    gamma = [model.add_binary() for _ in range(n)]
    for j in range(n):
        ah, bh = ahat_ids[j], bhat_ids[j]
        lo, hi = float(zlo[j]), float(zhi[j])
        model.add_row({alpha[j]: 1.0, beta[j]: 1.0, gamma[j]: 1.0}, "=", 1.0)
        model.add_row({a[j]: 1.0, ah: -1.0}, ">=", 0.0)
        model.add_row({a[j]: 1.0, gamma[j]: -hi}, "<=", 0.0)
        model.add_row({a[j]: 1.0, ah: -1.0, alpha[j]: lo, beta[j]: lo}, "<=", 0.0)
        model.add_row({b[j]: 1.0, bh: -1.0}, ">=", 0.0)
        model.add_row({b[j]: 1.0, bh: -1.0, alpha[j]: lo}, "<=", 0.0)
        model.add_row({b[j]: 1.0, beta[j]: -hi, gamma[j]: -hi}, "<=", 0.0)
        model.add_row({a[j]: 1.0, b[j]: -1.0}, "<=", 0.0)
    return ReluBlockVars(list(ahat_ids), list(bhat_ids), a, b, alpha, beta, gamma)


def encode_milc_inc(model: MipModel, xlo_ids, xhi_ids, obstacles, domain: RealBox) -> InclusionVars:
    """Rows forcing the box ``[xlo, xhi]`` to miss every open obstacle box.

    Per obstacle, at least one coordinate must have the whole candidate box
    on one closed side of the obstacle; which side is selected by the
    binaries.  With no obstacles no rows are emitted.
    """
    n_x = len(xlo_ids)
    if len(xhi_ids) != n_x or domain.ndim != n_x:
        raise DimMismatchError("inclusion block inputs have mismatched lengths")
    dlo, dhi = domain.arrays()
    phi_all, psi_all = [], []
    for obs in obstacles:
        phi = [model.add_binary() for _ in range(n_x)]
        psi = [model.add_binary() for _ in range(n_x)]
        cover = {}
        for j in range(n_x):
            model.add_row({phi[j]: 1.0, psi[j]: 1.0}, "<=", 1.0)
            cover[phi[j]] = 1.0
            cover[psi[j]] = 1.0
        model.add_row(cover, ">=", 1.0)
        for j in range(n_x):
            olo, ohi = float(obs.lo[j]), float(obs.hi[j])
            model.add_row({xhi_ids[j]: 1.0, phi[j]: -(olo - dhi[j])}, "<=", dhi[j])
            model.add_row({xhi_ids[j]: 1.0, phi[j]: (olo - dlo[j])}, ">=", olo)
            model.add_row({xlo_ids[j]: 1.0, psi[j]: -(ohi - dlo[j])}, ">=", dlo[j])
            model.add_row({xlo_ids[j]: 1.0, psi[j]: (ohi - dhi[j])}, "<=", ohi)
        phi_all.append(phi)
        psi_all.append(psi)
    return InclusionVars(phi_all, psi_all, list(obstacles))


def encode_pointwise_relu(model: MipModel, zhat_ids, z_ids, sigma_ids, zlo, zhi) -> list[int]:
    """Big-M rows forcing ``z = max(0, zhat)`` for point values.

    ``z >= 0`` is carried by the z variables' lower bounds; the remaining
    rows are emitted here and their ids returned.
    """
    rows = []
    for j in range(len(zhat_ids)):
        zh, zz, sg = zhat_ids[j], z_ids[j], sigma_ids[j]
        lo, hi = float(zlo[j]), float(zhi[j])
        rows.append(model.add_row({zz: 1.0, zh: -1.0}, ">=", 0.0))
        rows.append(model.add_row({zz: 1.0, zh: -1.0, sg: -lo}, "<=", -lo))
        rows.append(model.add_row({zz: 1.0, sg: -hi}, "<=", 0.0))
    return rows


def prune_obstacles(fbar: RealBox, obstacles) -> list[OpenBox]:
    """Drop obstacles whose closed version misses the reachable box.

    Sound because any candidate box produced under ``fbar`` cannot meet a
    dropped obstacle either; face contact keeps the obstacle (conservative).
    """
    flo, fhi = fbar.lo, fbar.hi
    kept = []
    for obs in obstacles:
        if all(ol <= fh and oh >= fl for fl, fh, ol, oh in zip(flo, fhi, obs.lo, obs.hi)):
            kept.append(obs)
    return kept


def _add_lin_pair(model, coeffs, rhs):
    # equality emitted as a <=/>= pair sharing coefficients
    model.add_row(coeffs, "<=", rhs)
    model.add_row(coeffs, ">=", rhs)


def build_returnability(
    m: Mlp,
    box_i: RealBox,
    u: ControlDomain,
    target: BoxSet,
    bounds: LayerBounds,
    objective: str = "feasibility",
    *,
    obstacles: list[OpenBox] | None = None,
    fbar: RealBox | None = None,
) -> MipModel:
    """Model deciding whether one admissible control returns ``box_i`` to
    ``target`` in a single step.

    The control variables occupy ids ``0 .. n_u-1``.  The interval image of
    ``box_i`` under the candidate control is propagated layer by layer with
    shared control in both bound chains; the output box must avoid every
    retained open box of the target complement.  ``bounds`` must cover the
    whole state/control domain.  Objective is empty (``"feasibility"``) or
    an L1 pull of the output box midpoint toward the origin
    (``"l1_center"``).
    """
    if target.is_empty():
        raise EmptyTargetError("returnability target is empty")
    if box_i.ndim != m.n_x:
        raise DimMismatchError(f"box dimension {box_i.ndim} != state dimension {m.n_x}")
    grid = target.grid
    domain = RealBox(grid.lower, grid.upper)
    if obstacles is None:
        obstacles = complement_open_boxes(grid, target)
    if fbar is None:
        _, fbar = reach_boxes(m, box_i, RealBox.of_domain(u))
    kept = prune_obstacles(fbar, obstacles)

    model = MipModel()
    u_ids = [model.add_continuous(u.lower[q], u.upper[q]) for q in range(m.n_u)]
    xlo, xhi = box_i.arrays()
    n_layers = m.n_layers
    a_prev: list[int] | None = None
    b_prev: list[int] | None = None
    ahat: list[int] = []
    bhat: list[int] = []
    for i, (w, bias) in enumerate(zip(m.weights, m.biases)):
        zlo, zhi = bounds.pre[i]
        vlo, vhi = zlo, zhi
        if i == n_layers - 1:
            # output box must stay inside the state domain for inclusion in
            # the target to be possible at all
            vlo = np.maximum(zlo, np.asarray(domain.lo))
            vhi = np.minimum(zhi, np.asarray(domain.hi))
        ahat = [model.add_continuous(vlo[j], vhi[j]) for j in range(w.shape[0])]
        bhat = [model.add_continuous(vlo[j], vhi[j]) for j in range(w.shape[0])]
        if i == 0:
            wx, wu = w[:, : m.n_x], w[:, m.n_x :]
            wxp, wxn = np.maximum(wx, 0.0), np.minimum(wx, 0.0)
            const_a = wxp @ xlo + wxn @ xhi + bias
            const_b = wxp @ xhi + wxn @ xlo + bias
            for j in range(w.shape[0]):
                ca = {ahat[j]: 1.0}
                cb = {bhat[j]: 1.0}
                for q in range(m.n_u):
                    if wu[j, q] != 0.0:
                        ca[u_ids[q]] = -wu[j, q]
                        cb[u_ids[q]] = -wu[j, q]
                _add_lin_pair(model, ca, float(const_a[j]))
                _add_lin_pair(model, cb, float(const_b[j]))
        else:
            wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
            for j in range(w.shape[0]):
                ca = {ahat[j]: 1.0}
                cb = {bhat[j]: 1.0}
                for q in range(w.shape[1]):
                    if wp[j, q] != 0.0:
                        ca[a_prev[q]] = -wp[j, q]
                        cb[b_prev[q]] = -wp[j, q]
                    if wn[j, q] != 0.0:
                        ca[b_prev[q]] = -wn[j, q]
                        cb[a_prev[q]] = -wn[j, q]
                _add_lin_pair(model, ca, float(bias[j]))
                _add_lin_pair(model, cb, float(bias[j]))
        for j in range(w.shape[0]):
            model.add_row({ahat[j]: 1.0, bhat[j]: -1.0}, "<=", 0.0)
        if i < n_layers - 1:
            blk = encode_milc_relu(model, ahat, bhat, zlo, zhi)
            a_prev, b_prev = blk.a, blk.b

    encode_milc_inc(model, ahat, bhat, kept, domain)

    if objective == "l1_center":
        zlo, zhi = bounds.pre[-1]
        span = float(np.abs(zlo).max() + np.abs(zhi).max()) + 1.0
        slacks = []
        for j in range(m.n_x):
            t = model.add_continuous(0.0, 2 * span)
            model.add_row({t: 1.0, ahat[j]: -1.0, bhat[j]: -1.0}, ">=", 0.0)
            model.add_row({t: 1.0, ahat[j]: 1.0, bhat[j]: 1.0}, ">=", 0.0)
            slacks.append(t)
        model.set_objective({t: 1.0 for t in slacks})
    elif objective != "feasibility":
        raise ValueError(f"unknown objective {objective!r}")
    return model


@dataclass
class MpcEncoding:
    """A built receding-horizon model plus the variable-id layout."""

    model: MipModel
    n_x: int
    n_u: int
    horizon: int
    u_ids: list[list[int]]
    x_ids: list[list[int]]              # states x_{k|1} .. x_{k|N}
    zhat_ids: list[list[list[int]]]     # [step][hidden layer]
    z_ids: list[list[list[int]]]
    sigma_ids: list[list[list[int]]]
    inc_steps: list[int]                # steps carrying inclusion blocks
    inc_vars: list[InclusionVars]
    state_slack_ids: list[list[int]]    # per step n=1..N (empty sublist where weight 0)
    ctrl_slack_ids: list[list[int]]
    references: list[np.ndarray]
    x0: np.ndarray


def build_mpc(m: Mlp, x0, cfg, cis: BoxSet, *, k: int = 0) -> MpcEncoding:
    """Assemble the receding-horizon tracking model constrained to ``cis``.

    Dynamics are equality rows with pointwise big-M ReLU blocks using
    per-step bounds seeded from ``x0``; the invariant-set membership rows
    are applied at every prediction step (``variant="full"``) or at the
    first step only (``variant="first_step"``).  Cost is a weighted L1
    tracking objective handled through slack variables.
    """
    if cis.is_empty():
        raise EmptyCisError("control invariant set is empty")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != m.n_x:
        raise DimMismatchError(f"x0 has length {x0.shape[0]}, expected {m.n_x}")
    grid = cis.grid
    domain = RealBox(grid.lower, grid.upper)
    if not domain.contains(x0, tol=1e-9):
        raise OutsideDomainError(f"x0 {x0.tolist()} outside state domain")
    N = int(cfg.horizon)
    u_dom = cfg.control_domain
    q = np.asarray(cfg.q, dtype=float)
    r = np.asarray(cfg.r, dtype=float)
    qn = np.asarray(cfg.q_terminal, dtype=float)
    hb = horizon_bounds(m, x0, u_dom, N)
    obstacles = complement_open_boxes(grid, cis)
    refs = [np.asarray(cfg.reference(k + n), dtype=float) for n in range(1, N + 1)]

    model = MipModel()
    enc = MpcEncoding(model, m.n_x, m.n_u, N, [], [], [], [], [], [], [], [], [], refs, x0)
    obj: dict[int, float] = {}
    obj_const = float(np.sum(q * np.abs(x0 - np.asarray(cfg.reference(k)))))

    prev_x: list[int] | None = None  # None means x_{k|0} (constant)
    for n in range(N):
        u_ids = [model.add_continuous(u_dom.lower[qq], u_dom.upper[qq]) for qq in range(m.n_u)]
        enc.u_ids.append(u_ids)
        bounds = hb[n]
        zhat_step, z_step, sigma_step = [], [], []
        a_prev: list[int] | None = None
        for i, (w, bias) in enumerate(zip(m.weights, m.biases)):
            zlo, zhi = bounds.pre[i]
            if i == m.n_layers - 1:
                vlo = np.maximum(zlo, np.asarray(domain.lo))
                vhi = np.minimum(zhi, np.asarray(domain.hi))
                out_ids = [model.add_continuous(vlo[j], vhi[j]) for j in range(m.n_x)]
            else:
                out_ids = [model.add_continuous(zlo[j], zhi[j]) for j in range(w.shape[0])]
            for j in range(w.shape[0]):
                coeffs = {out_ids[j]: 1.0}
                rhs = float(bias[j])
                if i == 0:
                    wx, wu = w[j, : m.n_x], w[j, m.n_x :]
                    if prev_x is None:
                        rhs += float(wx @ x0)
                    else:
                        for qq in range(m.n_x):
                            if wx[qq] != 0.0:
                                coeffs[prev_x[qq]] = -wx[qq]
                    for qq in range(m.n_u):
                        if wu[qq] != 0.0:
                            coeffs[u_ids[qq]] = -wu[qq]
                else:
                    for qq in range(w.shape[1]):
                        if w[j, qq] != 0.0:
                            coeffs[a_prev[qq]] = -w[j, qq]
                model.add_row(coeffs, "=", rhs)
            if i < m.n_layers - 1:
                z_ids = [model.add_continuous(max(0.0, zlo[j]), max(0.0, zhi[j]))
                         for j in range(w.shape[0])]
                sigma = [model.add_binary() for _ in range(w.shape[0])]
                encode_pointwise_relu(model, out_ids, z_ids, sigma, zlo, zhi)
                zhat_step.append(out_ids)
                z_step.append(z_ids)
                sigma_step.append(sigma)
                a_prev = z_ids
            else:
                x_ids = out_ids
        enc.zhat_ids.append(zhat_step)
        enc.z_ids.append(z_step)
        enc.sigma_ids.append(sigma_step)
        enc.x_ids.append(x_ids)

        if cfg.variant == "full" or n == 0:
            kept = prune_obstacles(hb[n].output, obstacles)
            inc = encode_milc_inc(model, x_ids, x_ids, kept, domain)
            enc.inc_steps.append(n)
            enc.inc_vars.append(inc)

        # stage costs: states n=1..N-1 with q, terminal with qn, controls with r
        weights = qn if n == N - 1 else q
        xr = refs[n]
        state_slacks = []
        for j in range(m.n_x):
            if weights[j] == 0.0:
                continue
            cap = weights[j] * (abs(domain.lo[j] - xr[j]) + abs(domain.hi[j] - xr[j])) + 1.0
            t = model.add_continuous(0.0, cap)
            model.add_row({t: 1.0, x_ids[j]: -weights[j]}, ">=", -weights[j] * xr[j])
            model.add_row({t: 1.0, x_ids[j]: weights[j]}, ">=", weights[j] * xr[j])
            obj[t] = 1.0
            state_slacks.append(t)
        enc.state_slack_ids.append(state_slacks)
        ctrl_slacks = []
        for qq in range(m.n_u):
            if r[qq] == 0.0:
                continue
            cap = r[qq] * max(abs(u_dom.lower[qq]), abs(u_dom.upper[qq])) + 1.0
            s = model.add_continuous(0.0, cap)
            model.add_row({s: 1.0, u_ids[qq]: -r[qq]}, ">=", 0.0)
            model.add_row({s: 1.0, u_ids[qq]: r[qq]}, ">=", 0.0)
            obj[s] = 1.0
            ctrl_slacks.append(s)
        enc.ctrl_slack_ids.append(ctrl_slacks)
        prev_x = x_ids

    model.set_objective(obj, const=obj_const)
    return enc


def warm_start(x0, atlas, m: Mlp, cfg, k: int = 0, enc: MpcEncoding | None = None) -> np.ndarray:
    """Feasible assignment for the receding-horizon model.

    Rolls the atlas feedback law forward over the horizon, records every
    pre/post activation and the matching activation binaries, and selects
    the obstacle-side binaries from the planned states.  The result
    satisfies every model row to solver precision and its objective equals
    the rolled plan's cost, so it seeds the incumbent for branch-and-bound.
    """
    if enc is None:
        enc = build_mpc(m, x0, cfg, atlas.cis, k=k)
    x = np.zeros(enc.model.n_vars)
    state = np.asarray(x0, dtype=float).reshape(-1)
    for n in range(enc.horizon):
        u = atlas.control_at(state, tol=1e-9)
        nxt, trace = forward_trace(m, state, u)
        for qq, uid in enumerate(enc.u_ids[n]):
            x[uid] = u[qq]
        for li, (zhat, z) in enumerate(trace):
            for j, vid in enumerate(enc.zhat_ids[n][li]):
                x[vid] = zhat[j]
            for j, vid in enumerate(enc.z_ids[n][li]):
                x[vid] = z[j]
            for j, vid in enumerate(enc.sigma_ids[n][li]):
                x[vid] = 1.0 if zhat[j] >= 0.0 else 0.0
        for j, vid in enumerate(enc.x_ids[n]):
            x[vid] = nxt[j]
        # objective slacks at their exact values
        weights = np.asarray(cfg.q_terminal if n == enc.horizon - 1 else cfg.q, dtype=float)
        xr = enc.references[n]
        pos = 0
        for j in range(enc.n_x):
            if weights[j] == 0.0:
                continue
            x[enc.state_slack_ids[n][pos]] = weights[j] * abs(nxt[j] - xr[j])
            pos += 1
        r = np.asarray(cfg.r, dtype=float)
        pos = 0
        for qq in range(enc.n_u):
            if r[qq] == 0.0:
                continue
            x[enc.ctrl_slack_ids[n][pos]] = r[qq] * abs(u[qq])
            pos += 1
        state = nxt
    # obstacle-side binaries per inclusion step
    for inc_pos, n in enumerate(enc.inc_steps):
        planned = x[np.asarray(enc.x_ids[n])]
        inc = enc.inc_vars[inc_pos]
        for oi, obs in enumerate(inc.obstacles):
            for j in range(enc.n_x):
                x[inc.phi[oi][j]] = 1.0 if planned[j] <= obs.lo[j] else 0.0
                x[inc.psi[oi][j]] = 1.0 if planned[j] >= obs.hi[j] else 0.0
    return x
