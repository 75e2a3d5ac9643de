"""Exact radial power flow, the linear voltage equation and linearized losses.

Injections follow the market convention: ``p[i] > 0`` is net consumption
at node ``i``.  Flows ``P[i], Q[i]`` are measured at the receiving end of
line ``i``; the sending end carries ``P[i] + LP[i]``.  All arrays are in
matrix order (``net.node_ids``) and per unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DlmpError, InputError, PowerFlowDivergence
from .network import ROOT, Network

VOLTAGE_MODES = ("coupled", "center", "unity")


@dataclass(frozen=True)
class PFState:
    v: np.ndarray
    dd: np.ndarray  # angle drop across each line, rad (diagnostic only)
    P: np.ndarray
    Q: np.ndarray
    LP: np.ndarray
    LQ: np.ndarray
    p: np.ndarray
    q: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    @property
    def p0(self) -> float:
        """Real power drawn from the substation."""
        return float(self.p.sum() + self.LP.sum())

    @property
    def q0(self) -> float:
        return float(self.q.sum() + self.LQ.sum())


def _check_injections(net: Network, p, q) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    if p.shape != (net.n,) or q.shape != (net.n,):
        raise InputError(f"injections must have length {net.n}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise InputError("injections must be finite")
    return p, q


def sweep_power_flow(
    net: Network, p, q, tol: float = 1e-8, max_iter: int = 100
) -> PFState:
    """Backward/forward sweep on the DistFlow branch equations.

    The backward pass accumulates receiving-end flows from the current
    losses, the forward pass updates squared voltages from the parent
    voltage and the sending-end flow.  Iterates from a flat start until
    the largest change in voltages, flows and losses is below ``tol``.
    """
    p, q = _check_injections(net, p, q)
    n, r, x = net.n, net.r, net.x
    z2 = r**2 + x**2
    parent = net.parent
    D = net.D
    v2 = np.full(n, net.v0**2)
    LP = np.zeros(n)
    LQ = np.zeros(n)
    P = D @ p
    Q = D @ q
    v2_parent = np.empty(n)
    residual = math.inf

    for it in range(1, max_iter + 1):
        P_new = D @ (p + LP) - LP
        Q_new = D @ (q + LQ) - LQ
        S2 = P_new**2 + Q_new**2
        LP_new = r * S2 / v2
        LQ_new = x * S2 / v2
        Ps = P_new + LP_new
        Qs = Q_new + LQ_new
        v2_new = np.empty(n)
        for k in range(n):
            up = parent[k + 1]
            w_up = net.v0**2 if up == ROOT else v2_new[up - 1]
            v2_parent[k] = w_up
            v2_new[k] = w_up - 2 * (r[k] * Ps[k] + x[k] * Qs[k]) + z2[k] * (Ps[k] ** 2 + Qs[k] ** 2) / w_up
            if not 0.25 < v2_new[k] < 2.25:
                raise PowerFlowDivergence(
                    f"voltage at node {net.ext_ids[k + 1]} left the (0.5, 1.5) p.u. band",
                    residual=residual,
                    iterations=it,
                )
        residual = max(
            np.max(np.abs(np.sqrt(v2_new) - np.sqrt(v2))),
            np.max(np.abs(P_new - P)),
            np.max(np.abs(Q_new - Q)),
            np.max(np.abs(LP_new - LP)),
            np.max(np.abs(LQ_new - LQ)),
        )
        P, Q, LP, LQ, v2 = P_new, Q_new, LP_new, LQ_new, v2_new
        if residual < tol:
            break
    else:
        raise PowerFlowDivergence("sweep did not converge", residual=residual, iterations=max_iter)

    # Losses consistent with the final voltages, so the branch voltage drop holds exactly.
    S2 = P**2 + Q**2
    LP = r * S2 / v2
    LQ = x * S2 / v2
    Ps, Qs = P + LP, Q + LQ
    dd = np.arctan2(x * Ps - r * Qs, v2_parent - r * Ps - x * Qs)
    return PFState(v=np.sqrt(v2), dd=dd, P=P, Q=Q, LP=LP, LQ=LQ, p=p, q=q, iterations=it, residual=residual)


def linearized_voltages(net: Network, p, q, LP, LQ) -> np.ndarray:
    """Node voltages from the linear drop equation.

    The printed form carries ``+Mq``; stacking the two halves of ``M``
    forces the same sign on both terms, which is what is used here.
    """
    p, q = np.asarray(p, float), np.asarray(q, float)
    return net.v0 - net.Mp @ (p + np.asarray(LP, float)) - net.Mq @ (q + np.asarray(LQ, float))


@dataclass(frozen=True)
class LossModel:
    """First-order loss model around a power-flow center point.

    Gradient matrices are indexed ``[line j, node i]``.
    """

    LP0: np.ndarray
    LQ0: np.ndarray
    dLP_dp: np.ndarray
    dLP_dq: np.ndarray
    dLQ_dp: np.ndarray
    dLQ_dq: np.ndarray
    p_center: np.ndarray
    q_center: np.ndarray
    voltage_mode: str = "coupled"

    def evaluate(self, p, q) -> tuple[np.ndarray, np.ndarray]:
        dp = np.asarray(p, float) - self.p_center
        dq = np.asarray(q, float) - self.q_center
        LP = self.LP0 + self.dLP_dp @ dp + self.dLP_dq @ dq
        LQ = self.LQ0 + self.dLQ_dp @ dp + self.dLQ_dq @ dq
        return LP, LQ

    @property
    def n(self) -> int:
        return len(self.LP0)


def _flow_jacobian(net: Network, state: PFState, voltage_mode: str):
    """Jacobian of the branch equations in the unknowns ``[P, Q, LP, LQ, W]``.

    Rows: flow accumulation (P, Q), loss definitions (LP, LQ) and, when the
    voltage coupling is kept, the squared-voltage drop per line.  With
    ``voltage_mode`` "center"/"unity" the voltage is frozen in the loss
    definitions, which reduces the system to the plain flow/loss recursion.
    """
    n, r, x = net.n, net.r, net.x
    P, Q, LP, LQ = state.P, state.Q, state.LP, state.LQ
    if voltage_mode == "unity":
        W = np.ones(n)
    else:
        W = state.v**2
    coupled = voltage_mode == "coupled"
    nv = 5 if coupled else 4
    iP, iQ, iLP, iLQ, iW = (np.arange(n) + k * n for k in range(5))
    rows, cols, vals = [], [], []

    def put(rr, cc, vv):
        rows.append(np.atleast_1d(rr))
        cols.append(np.atleast_1d(cc))
        vals.append(np.broadcast_to(np.asarray(vv, float), np.atleast_1d(rr).shape))

    # P_k - sum_children (P_c + LP_c) = p_k
    put(iP, iP, 1.0)
    put(iQ, iQ, 1.0)
    for k in range(n):
        for c in net.children[k + 1]:
            put(iP[k], iP[c - 1], -1.0)
            put(iP[k], iLP[c - 1], -1.0)
            put(iQ[k], iQ[c - 1], -1.0)
            put(iQ[k], iLQ[c - 1], -1.0)
    # LP_k W_k - r_k (P_k^2 + Q_k^2) = 0
    put(iLP, iLP, W)
    put(iLP, iP, -2 * r * P)
    put(iLP, iQ, -2 * r * Q)
    put(iLQ, iLQ, W)
    put(iLQ, iP, -2 * x * P)
    put(iLQ, iQ, -2 * x * Q)
    if coupled:
        put(iLP, iW, LP)
        put(iLQ, iW, LQ)
        # W_k - W_u + 2(r Ps + x Qs) - |z|^2 (Ps^2 + Qs^2) / W_u = 0
        Ps, Qs = P + LP, Q + LQ
        z2 = r**2 + x**2
        Wu = np.array([net.v0**2 if net.parent[k + 1] == ROOT else W[net.parent[k + 1] - 1] for k in range(n)])
        dPs = 2 * r - 2 * z2 * Ps / Wu
        dQs = 2 * x - 2 * z2 * Qs / Wu
        put(iW, iW, 1.0)
        put(iW, iP, dPs)
        put(iW, iLP, dPs)
        put(iW, iQ, dQs)
        put(iW, iLQ, dQs)
        for k in range(n):
            up = net.parent[k + 1]
            if up != ROOT:
                put(iW[k], iW[up - 1], -1.0 + z2[k] * (Ps[k] ** 2 + Qs[k] ** 2) / Wu[k] ** 2)
    J = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv * n, nv * n)
    )
    return J, nv


def flow_jacobian_solution(net: Network, state: PFState, voltage_mode: str = "coupled") -> np.ndarray:
    """Sensitivities of ``[P, Q, LP, LQ, (W)]`` to ``[p, q]``, shape (nv*N, 2N)."""
    if voltage_mode not in VOLTAGE_MODES:
        raise InputError(f"voltage_mode must be one of {VOLTAGE_MODES}")
    n = net.n
    J, nv = _flow_jacobian(net, state, voltage_mode)
    rhs = np.zeros((nv * n, 2 * n))
    rhs[:n, :n] = np.eye(n)
    rhs[n : 2 * n, n:] = np.eye(n)
    try:
        lu = spla.splu(J)
    except RuntimeError as exc:
        raise DlmpError(f"singular flow/loss sensitivity system: {exc}") from exc
    X = lu.solve(rhs)
    if not np.all(np.isfinite(X)):
        raise DlmpError("singular flow/loss sensitivity system")
    return X


def linearize_losses(net: Network, center: PFState, voltage_mode: str = "coupled") -> LossModel:
    """Taylor loss model at ``center``.

    ``voltage_mode``:
      * ``"coupled"`` -- exact first-order sensitivity of the sweep solution,
        including the change of line voltages with the injections;
      * ``"center"`` -- voltages frozen at the center point;
      * ``"unity"`` -- voltages frozen at 1 p.u.
    """
    n = net.n
    X = flow_jacobian_solution(net, center, voltage_mode)
    LPr, LQr = slice(2 * n, 3 * n), slice(3 * n, 4 * n)
    return LossModel(
        LP0=center.LP.copy(),
        LQ0=center.LQ.copy(),
        dLP_dp=X[LPr, :n],
        dLP_dq=X[LPr, n:],
        dLQ_dp=X[LQr, :n],
        dLQ_dq=X[LQr, n:],
        p_center=center.p.copy(),
        q_center=center.q.copy(),
        voltage_mode=voltage_mode,
    )
