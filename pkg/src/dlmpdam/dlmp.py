"""Energy / loss / voltage / congestion decomposition of nodal prices.

For consumption at node ``i`` (real or reactive)::

    energy     = lambda
    loss       = lambda_p * sum_j dLP_j/di + lambda_q * sum_j dLQ_j/di
    voltage    = sum_k (mu_max_k - mu_min_k) * dV_k/di
    congestion = sum_j rho1_j * dP_j/di + rho2_j * dQ_j/di

with ``rho1 = rho++ - rho-- + rho+- - rho-+`` and
``rho2 = rho++ - rho-- - rho+- + rho-+`` over the four line rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DlmpError
from .network import Network
from .powerflow import LossModel, PFState, flow_jacobian_solution

COMPONENTS = ("energy", "loss", "voltage", "congestion")
CSV_COLUMNS = (
    "node",
    "t",
    "omega_p",
    "omega_p_energy",
    "omega_p_loss",
    "omega_p_voltage",
    "omega_p_congestion",
    "omega_q",
    "omega_q_energy",
    "omega_q_loss",
    "omega_q_voltage",
    "omega_q_congestion",
)


@dataclass(frozen=True)
class SensitivityBundle:
    """First-order sensitivities, p.u. per p.u., indexed ``[line or node, injected node]``."""

    dLP_dp: np.ndarray
    dLP_dq: np.ndarray
    dLQ_dp: np.ndarray
    dLQ_dq: np.ndarray
    dP_dp: np.ndarray
    dP_dq: np.ndarray
    dQ_dp: np.ndarray
    dQ_dq: np.ndarray
    dV_dp: np.ndarray | None = None
    dV_dq: np.ndarray | None = None


def _bundle_from_losses(net: Network, Gpp, Gpq, Gqp, Gqq) -> SensitivityBundle:
    # receiving-end flows: P = D (p + LP) - LP
    DI = net.D - np.eye(net.n)
    return SensitivityBundle(
        dLP_dp=Gpp,
        dLP_dq=Gpq,
        dLQ_dp=Gqp,
        dLQ_dq=Gqq,
        dP_dp=net.D + DI @ Gpp,
        dP_dq=DI @ Gpq,
        dQ_dp=DI @ Gqp,
        dQ_dq=net.D + DI @ Gqq,
    )


def flow_and_loss_sensitivities(net: Network, state: PFState, voltage_mode: str = "coupled") -> SensitivityBundle:
    """Loss and flow sensitivities at a power-flow state, from one sparse solve."""
    n = net.n
    X = flow_jacobian_solution(net, state, voltage_mode)
    blk = lambda k, side: X[k * n : (k + 1) * n, :n] if side == "p" else X[k * n : (k + 1) * n, n:]  # noqa: E731
    bundle = _bundle_from_losses(net, blk(2, "p"), blk(2, "q"), blk(3, "p"), blk(3, "q"))
    if not np.allclose(bundle.dP_dp, blk(0, "p"), atol=1e-9) or not np.allclose(bundle.dQ_dq, blk(1, "q"), atol=1e-9):
        raise DlmpError("flow sensitivities inconsistent with loss sensitivities")
    return bundle


def loss_model_sensitivities(net: Network, lm: LossModel) -> SensitivityBundle:
    """Sensitivities implied by a loss model (the ones the clearing LP uses)."""
    return voltage_sensitivities(net, _bundle_from_losses(net, lm.dLP_dp, lm.dLP_dq, lm.dLQ_dp, lm.dLQ_dq))


def voltage_sensitivities(net: Network, bundle: SensitivityBundle) -> SensitivityBundle:
    """Attach ``dV/dp`` and ``dV/dq`` from the linear voltage equation including loss terms."""
    I = np.eye(net.n)
    dV_dp = -(net.Mp @ (I + bundle.dLP_dp) + net.Mq @ bundle.dLQ_dp)
    dV_dq = -(net.Mp @ bundle.dLP_dq + net.Mq @ (I + bundle.dLQ_dq))
    return SensitivityBundle(**{**bundle.__dict__, "dV_dp": dV_dp, "dV_dq": dV_dq})


@dataclass(frozen=True)
class DlmpReport:
    """Prices ``(T, N)`` per component; ``p``/``q`` are $/MWh and $/MVArh."""

    node_ids: tuple[int, ...]
    p: dict  # component -> (T, N)
    q: dict

    @property
    def omega_p(self) -> np.ndarray:
        return sum(self.p[c] for c in COMPONENTS)

    @property
    def omega_q(self) -> np.ndarray:
        return sum(self.q[c] for c in COMPONENTS)

    @property
    def T(self) -> int:
        return self.p["energy"].shape[0]

    def column(self, node: int) -> int:
        return self.node_ids.index(node)

    def at(self, node: int, kind: str = "p", component: str | None = None) -> np.ndarray:
        """Per-slot series at ``node``; ``component=None`` gives the total."""
        k = self.column(node)
        if component is None:
            return (self.omega_p if kind == "p" else self.omega_q)[:, k]
        return (self.p if kind == "p" else self.q)[component][:, k]

    def rows(self):
        op, oq = self.omega_p, self.omega_q
        for t in range(self.T):
            for k, node in enumerate(self.node_ids):
                yield (
                    node,
                    t + 1,
                    op[t, k],
                    *(self.p[c][t, k] for c in COMPONENTS),
                    oq[t, k],
                    *(self.q[c][t, k] for c in COMPONENTS),
                )

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in self.rows():
                w.writerow([row[0], row[1], *(repr(float(v)) for v in row[2:])])
        return path


def _line_combos(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pp, mm, pm, mp = rho[..., 0], rho[..., 1], rho[..., 2], rho[..., 3]
    return pp - mm + pm - mp, pp - mm - pm + mp


def decompose(duals, bundles, net: Network, base_mva: float = 1.0, congestion_lines: str = "all") -> DlmpReport:
    """Price components from the LP duals and one sensitivity bundle per slot.

    ``congestion_lines="upstream"`` restricts the congestion sum to the
    lines on the node's own path to the substation.
    """
    T, N = duals.mu_min.shape
    if len(bundles) != T:
        raise DlmpError(f"need {T} sensitivity bundles, got {len(bundles)}")
    if congestion_lines not in ("all", "upstream"):
        raise DlmpError(f"congestion_lines must be 'all' or 'upstream', got {congestion_lines!r}")
    p = {c: np.zeros((T, N)) for c in COMPONENTS}
    q = {c: np.zeros((T, N)) for c in COMPONENTS}
    rho1, rho2 = _line_combos(duals.rho)
    mask = net.U.T if congestion_lines == "upstream" else np.ones((N, N))  # [line j, node i]
    for t, sb in enumerate(bundles):
        if sb.dV_dp is None:
            sb = voltage_sensitivities(net, sb)
        lp, lq = duals.lambda_p[t], duals.lambda_q[t]
        dmu = duals.mu_max[t] - duals.mu_min[t]
        p["energy"][t] = lp
        q["energy"][t] = lq
        p["loss"][t] = lp * sb.dLP_dp.sum(axis=0) + lq * sb.dLQ_dp.sum(axis=0)
        q["loss"][t] = lq * sb.dLQ_dq.sum(axis=0) + lp * sb.dLP_dq.sum(axis=0)
        p["voltage"][t] = dmu @ sb.dV_dp / base_mva
        q["voltage"][t] = dmu @ sb.dV_dq / base_mva
        p["congestion"][t] = rho1[t] @ (mask * sb.dP_dp) + rho2[t] @ (mask * sb.dQ_dp)
        q["congestion"][t] = rho1[t] @ (mask * sb.dP_dq) + rho2[t] @ (mask * sb.dQ_dq)
    return DlmpReport(node_ids=tuple(net.node_ids), p=p, q=q)
