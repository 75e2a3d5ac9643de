"""Day-ahead distribution market: case data, the clearing MILP and its duals.

Per slot the model carries net nodal consumption ``pn, qn`` (MW, MVAr) as
free variables tied to the participants by one equality row per node.
Voltages, line flows and losses are affine in ``pn, qn`` through the
linear voltage equation and the slot's loss model, so every network
constraint is a dense row over ``[pn, qn]``.  The dual of the node row
for ``pn[t, i]`` is the marginal cost of consumption at node ``i``.

Objective terms are $/MWh times the slot length; duals are reported per
MWh (divided by the slot length).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .assets import (
    BessUnit,
    DemandBid,
    GeneratorOffer,
    NodalTerms,
    VreUnit,
    bess_constraints,
    gen_demand_constraints,
    segment_values,
    vre_constraints,
)
from .errors import CaseValidationError, InputError, SolverError
from .network import ROOT, Network
from .powerflow import VOLTAGE_MODES, LossModel, PFState, linearize_losses, sweep_power_flow
from .solver import LinearModel, Solution

SQRT2 = math.sqrt(2.0)
# (sign of P, sign of Q) for the four outer-box line rows: ++, --, +-, -+
LINE_SIGNS = ((1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0))
SUBSTATION = "substation"


@dataclass(frozen=True)
class MarketCase:
    network: Network
    lmp_p: np.ndarray  # (T,) $/MWh
    lmp_q: np.ndarray | None = None  # (T,) $/MVArh, defaults to q_ratio * lmp_p
    dt: float = 1.0
    generators: tuple[GeneratorOffer, ...] = ()
    demands: tuple[DemandBid, ...] = ()
    bess: tuple[BessUnit, ...] = ()
    vre: tuple[VreUnit, ...] = ()
    epsilon: float = 0.1
    gamma: float = 0.75
    vre_scale: float = 1.0
    load_scale: float = 1.0
    base_mva: float = 1.0
    q_ratio: float = 0.3
    allow_export: bool = False
    vre_reactive_mode: str = "box"
    loss_voltage_mode: str = "coupled"
    name: str = "case"
    bid_seed: int | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lmp_p = np.atleast_1d(np.asarray(self.lmp_p, float))
        if lmp_p.ndim != 1 or lmp_p.size < 1 or not np.all(np.isfinite(lmp_p)):
            raise CaseValidationError("lmp_p must be a finite vector with one price per slot", "wholesale")
        lmp_q = lmp_p * self.q_ratio if self.lmp_q is None else np.atleast_1d(np.asarray(self.lmp_q, float))
        if lmp_q.shape != lmp_p.shape or not np.all(np.isfinite(lmp_q)):
            raise CaseValidationError("lmp_q must match lmp_p", "wholesale")
        object.__setattr__(self, "lmp_p", lmp_p)
        object.__setattr__(self, "lmp_q", lmp_q)
        if not 0 < self.epsilon < 0.5:
            raise CaseValidationError(f"epsilon must lie in (0, 0.5), got {self.epsilon}", "config.epsilon")
        if not 0 < self.gamma < 1:
            raise CaseValidationError(f"gamma must lie in (0, 1), got {self.gamma}", "config.gamma")
        if self.dt <= 0 or self.base_mva <= 0:
            raise CaseValidationError("dt and base_mva must be positive")
        if self.vre_scale < 0 or self.load_scale <= 0:
            raise CaseValidationError("need vre_scale >= 0 and load_scale > 0", "config")
        if self.vre_reactive_mode not in ("box", "equality"):
            raise CaseValidationError(f"unknown vre_reactive_mode {self.vre_reactive_mode!r}", "config")
        if self.loss_voltage_mode not in VOLTAGE_MODES:
            raise CaseValidationError(f"loss_voltage_mode must be one of {VOLTAGE_MODES}", "config")
        T = lmp_p.size
        for kind, units, prefix in (
            ("generators", self.generators, "G"),
            ("demands", self.demands, "D"),
            ("bess", self.bess, "B"),
            ("vre", self.vre, "R"),
        ):
            named = []
            for k, u in enumerate(units):
                loc = f"{kind}[{k}]"
                try:
                    row = self.network.row(u.node)
                except InputError as exc:
                    raise CaseValidationError(str(exc), loc) from None
                del row
                if isinstance(u, DemandBid) and u.caps.ndim == 2 and u.caps.shape[1] != T:
                    raise CaseValidationError(f"caps cover {u.caps.shape[1]} slots, horizon is {T}", loc)
                named.append(u if u.name else dataclasses.replace(u, name=f"{prefix}{k}"))
            object.__setattr__(self, kind, tuple(named))
        names = [u.name for units in (self.generators, self.demands, self.bess, self.vre) for u in units]
        dup = {n for n in names if names.count(n) > 1} | ({SUBSTATION, "node"} & set(names))
        if dup:
            raise CaseValidationError(f"duplicate or reserved unit names {sorted(dup)}")

    @property
    def T(self) -> int:
        return self.lmp_p.size

    @property
    def sites(self) -> tuple[str, ...]:
        seen: list[str] = []
        for u in self.vre:
            if u.site not in seen:
                seen.append(u.site)
        return tuple(seen)

    def with_options(self, **changes) -> "MarketCase":
        return dataclasses.replace(self, **changes)

    def vre_available(self, pep_points: np.ndarray, sites) -> np.ndarray:
        """Available VRE output ``(T, n_vre)`` in MW from per-site efficient points ``(T, |R|)``."""
        pep_points = np.asarray(pep_points, float)
        if pep_points.shape[0] != self.T:
            raise InputError(f"efficient points cover {pep_points.shape[0]} slots, horizon is {self.T}")
        col = {s: k for k, s in enumerate(sites)}
        out = np.zeros((self.T, len(self.vre)))
        for k, u in enumerate(self.vre):
            if u.site not in col:
                raise InputError(f"no samples for VRE site {u.site!r}")
            out[:, k] = self.vre_scale * u.scale * pep_points[:, col[u.site]]
        return out


def _check_available(case: MarketCase, available) -> np.ndarray:
    if available is None:
        available = np.zeros((case.T, len(case.vre)))
    available = np.asarray(available, float).reshape(case.T, len(case.vre))
    if np.any(available < 0) or not np.all(np.isfinite(available)):
        raise InputError("VRE availability must be finite and non-negative")
    return available


def center_injections(case: MarketCase, available, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Expected operating point of slot ``t`` in p.u.: must-serve plus first bid segment, less VRE."""
    available = _check_available(case, available)
    net = case.network
    p = np.zeros(net.n)
    q = np.zeros(net.n)
    for d in case.demands:
        caps = segment_values(d.caps, d.caps.shape[0], case.T)
        mw = case.load_scale * caps[: min(2, caps.shape[0]), t].sum()
        k = net.row(d.node)
        p[k] += mw
        q[k] += d.kappa * mw
    for j, u in enumerate(case.vre):
        k = net.row(u.node)
        p[k] -= available[t, j]
        q[k] -= u.kappa * available[t, j]
    return p / case.base_mva, q / case.base_mva


def center_states(case: MarketCase, available) -> list[PFState]:
    states = []
    for t in range(case.T):
        p, q = center_injections(case, available, t)
        states.append(sweep_power_flow(case.network, p, q))
    return states


def loss_models(case: MarketCase, states) -> list[LossModel]:
    return [linearize_losses(case.network, s, case.loss_voltage_mode) for s in states]


@dataclass(frozen=True)
class AffineMap:
    """``y = c + Ap @ pn + Aq @ qn`` with ``pn, qn`` in MW."""

    c: np.ndarray
    Ap: np.ndarray
    Aq: np.ndarray

    def __call__(self, pn, qn) -> np.ndarray:
        return self.c + self.Ap @ pn + self.Aq @ qn


def network_maps(net: Network, lm: LossModel, base_mva: float) -> dict[str, AffineMap]:
    """Voltages (p.u.), receiving-end flows (MW) and line losses (MW) as affine maps of ``pn, qn``."""
    b = base_mva
    I = np.eye(net.n)
    Gpp, Gpq, Gqp, Gqq = lm.dLP_dp, lm.dLP_dq, lm.dLQ_dp, lm.dLQ_dq
    LPc = lm.LP0 - Gpp @ lm.p_center - Gpq @ lm.q_center
    LQc = lm.LQ0 - Gqp @ lm.p_center - Gqq @ lm.q_center
    DI = net.D - I
    return {
        "V": AffineMap(
            net.v0 - net.Mp @ LPc - net.Mq @ LQc,
            -(net.Mp @ (I + Gpp) + net.Mq @ Gqp) / b,
            -(net.Mp @ Gpq + net.Mq @ (I + Gqq)) / b,
        ),
        "P": AffineMap(b * DI @ LPc, net.D + DI @ Gpp, DI @ Gpq),
        "Q": AffineMap(b * DI @ LQc, DI @ Gqp, net.D + DI @ Gqq),
        "LP": AffineMap(b * LPc, Gpp, Gpq),
        "LQ": AffineMap(b * LQc, Gqp, Gqq),
    }


@dataclass
class DamModel:
    case: MarketCase
    model: LinearModel
    available: np.ndarray  # (T, n_vre) MW
    losses: list  # LossModel per slot
    maps: list  # dict of AffineMap per slot
    terms: NodalTerms
    p0: np.ndarray
    q0: np.ndarray
    pn: np.ndarray  # (T, N) columns
    qn: np.ndarray
    balance_p: np.ndarray  # (T,) rows
    balance_q: np.ndarray
    node_p: np.ndarray  # (T, N) rows
    node_q: np.ndarray
    vmin: np.ndarray  # (T, N) rows
    vmax: np.ndarray
    line: np.ndarray  # (T, N, 4) rows, -1 where the line is unrated
    units: dict = field(default_factory=dict)  # unit name -> variable blocks


def _add_assets(model: LinearModel, case: MarketCase, available: np.ndarray, terms: NodalTerms) -> dict:
    net = case.network
    units = {}
    for g in case.generators:
        units[g.name] = gen_demand_constraints(model, g, net.row(g.node), terms, case.dt)
    for d in case.demands:
        units[d.name] = gen_demand_constraints(model, d, net.row(d.node), terms, case.dt, case.load_scale)
    for b in case.bess:
        units[b.name] = bess_constraints(model, b, net.row(b.node), terms, case.dt)
    for k, u in enumerate(case.vre):
        units[u.name] = vre_constraints(
            model, u, available[:, k], net.row(u.node), terms, case.dt, case.vre_reactive_mode
        )
    return units


def _substation(model: LinearModel, case: MarketCase) -> tuple[np.ndarray, np.ndarray]:
    p0 = model.add_vars(
        f"{SUBSTATION}.p0", case.T, lb=-np.inf if case.allow_export else 0.0, cost=case.lmp_p * case.dt
    )
    q0 = model.add_vars(f"{SUBSTATION}.q0", case.T, lb=-np.inf, cost=case.lmp_q * case.dt)
    return p0, q0


def _node_rows(model, name, t, net_vars, cols_per_node, const) -> np.ndarray:
    cols, coefs = [], []
    for i, entries in enumerate(cols_per_node):
        cols.append([net_vars[i]] + [c for c, _ in entries])
        coefs.append([1.0] + [-v for _, v in entries])
    return model.add_rows(name, cols, coefs, "==", const)


def build_dam(case: MarketCase, available=None, losses=None) -> DamModel:
    """Assemble the clearing MILP for ``case``.

    ``available`` is the VRE output ``(T, n_vre)`` the market may use;
    ``losses`` holds one loss model per slot (built at the center point
    of each slot when omitted).
    """
    available = _check_available(case, available)
    net, T, N, b = case.network, case.T, case.network.n, case.base_mva
    if losses is None:
        losses = loss_models(case, center_states(case, available))
    if len(losses) != T or any(lm.n != N for lm in losses):
        raise InputError("need one loss model per slot, sized to the network")

    model = LinearModel(name=f"dam:{case.name}")
    terms = NodalTerms(T, N)
    units = _add_assets(model, case, available, terms)
    p0, q0 = _substation(model, case)
    pn = model.add_vars("node.p", (T, N), lb=-np.inf)
    qn = model.add_vars("node.q", (T, N), lb=-np.inf)

    balance_p = np.empty(T, int)
    balance_q = np.empty(T, int)
    node_p = np.empty((T, N), int)
    node_q = np.empty((T, N), int)
    vmin = np.empty((T, N), int)
    vmax = np.empty((T, N), int)
    line = np.full((T, N, 4), -1, int)
    maps = []
    rated = np.flatnonzero(np.isfinite(net.capacity))
    for t in range(T):
        lm = losses[t]
        mp = network_maps(net, lm, b)
        maps.append(mp)
        x = np.concatenate([pn[t], qn[t]])
        node_p[t] = _node_rows(model, "node_p", t, pn[t], terms.p_cols[t], terms.p_const[t])
        node_q[t] = _node_rows(model, "node_q", t, qn[t], terms.q_cols[t], terms.q_const[t])
        # p0 = sum(pn) + total losses
        row_p = np.concatenate([[1.0], -(1.0 + mp["LP"].Ap.sum(axis=0)), -mp["LP"].Aq.sum(axis=0)])
        row_q = np.concatenate([[1.0], -mp["LQ"].Ap.sum(axis=0), -(1.0 + mp["LQ"].Aq.sum(axis=0))])
        balance_p[t] = model.add_dense_rows("balance_p", np.concatenate([[p0[t]], x]), row_p, "==", [mp["LP"].c.sum()])[0]
        balance_q[t] = model.add_dense_rows("balance_q", np.concatenate([[q0[t]], x]), row_q, "==", [mp["LQ"].c.sum()])[0]
        V = mp["V"]
        AV = np.hstack([V.Ap, V.Aq])
        vmin[t] = model.add_dense_rows("vmin", x, AV, ">=", 1.0 - case.epsilon - V.c)
        vmax[t] = model.add_dense_rows("vmax", x, AV, "<=", 1.0 + case.epsilon - V.c)
        if rated.size:
            P, Q = mp["P"], mp["Q"]
            for k, (sp_, sq_) in enumerate(LINE_SIGNS):
                A = np.hstack([sp_ * P.Ap[rated] + sq_ * Q.Ap[rated], sp_ * P.Aq[rated] + sq_ * Q.Aq[rated]])
                rhs = SQRT2 * net.capacity[rated] * b - (sp_ * P.c[rated] + sq_ * Q.c[rated])
                line[t, rated, k] = model.add_dense_rows("line", x, A, "<=", rhs)
    return DamModel(
        case=case,
        model=model,
        available=available,
        losses=list(losses),
        maps=maps,
        terms=terms,
        p0=p0,
        q0=q0,
        pn=pn,
        qn=qn,
        balance_p=balance_p,
        balance_q=balance_q,
        node_p=node_p,
        node_q=node_q,
        vmin=vmin,
        vmax=vmax,
        line=line,
        units=units,
    )


@dataclass
class MarketSolution:
    status: str
    objective: float
    x: np.ndarray
    groups: dict  # variable group name -> column indices
    p0: np.ndarray  # (T,) MW
    q0: np.ndarray
    pn: np.ndarray  # (T, N) MW net consumption
    qn: np.ndarray
    V: np.ndarray  # (T, N) p.u., linear model
    P: np.ndarray  # (T, N) MW receiving-end flows
    Q: np.ndarray
    loss_p: np.ndarray  # (T, N) MW
    loss_q: np.ndarray
    mip_gap: float | None = None

    def value(self, group: str) -> np.ndarray:
        return self.x[self.groups[group]]

    @property
    def binaries(self) -> dict[str, np.ndarray]:
        return {k: np.round(self.value(k)).astype(int) for k in self.groups if k.endswith((".zch", ".zdis"))}

    def curtailment(self, unit: str) -> np.ndarray:
        return self.value(f"{unit}.curtail")


def _solution(dam: DamModel, sol: Solution) -> MarketSolution:
    x = sol.x
    pn, qn = x[dam.pn], x[dam.qn]
    out = {k: np.empty_like(pn) for k in ("V", "P", "Q", "LP", "LQ")}
    for t, mp in enumerate(dam.maps):
        for k in out:
            out[k][t] = mp[k](pn[t], qn[t])
    return MarketSolution(
        status=sol.status,
        objective=sol.objective,
        x=x,
        groups=dict(dam.model.var_groups),
        p0=x[dam.p0],
        q0=x[dam.q0],
        pn=pn,
        qn=qn,
        V=out["V"],
        P=out["P"],
        Q=out["Q"],
        loss_p=out["LP"],
        loss_q=out["LQ"],
        mip_gap=sol.mip_gap,
    )


def clear(dam: DamModel, time_limit: float | None = None, mip_rel_gap: float = 1e-6) -> MarketSolution:
    return _solution(dam, dam.model.solve_milp(time_limit=time_limit, mip_rel_gap=mip_rel_gap))


@dataclass
class Duals:
    """Shadow prices per MWh.  ``rho[..., k]`` follows ``LINE_SIGNS`` (++, --, +-, -+)."""

    lambda_p: np.ndarray  # (T,)
    lambda_q: np.ndarray
    mu_min: np.ndarray  # (T, N)
    mu_max: np.ndarray
    rho: np.ndarray  # (T, N, 4)
    node_p: np.ndarray  # (T, N) duals of the node definition rows
    node_q: np.ndarray
    lp_objective: float
    lp: MarketSolution | None = None


def fixed_binary_model(dam: DamModel, sol: MarketSolution) -> LinearModel:
    model = dam.model.copy()
    ints = np.flatnonzero(np.asarray(model.integer) == 1)
    model.fix(ints, np.round(sol.x[ints]))
    model.name = f"{dam.model.name}:fixed"
    return model


def extract_duals(dam: DamModel, sol: MarketSolution) -> Duals:
    """Fix the binaries at their cleared values, re-solve the LP and read its duals."""
    lp = fixed_binary_model(dam, sol).solve_lp()
    y = lp.duals / dam.case.dt
    rho = np.zeros(dam.line.shape)
    has = dam.line >= 0
    rho[has] = -y[dam.line[has]]
    return Duals(
        lambda_p=y[dam.balance_p],
        lambda_q=y[dam.balance_q],
        mu_min=y[dam.vmin],
        mu_max=-y[dam.vmax],
        rho=rho,
        node_p=y[dam.node_p],
        node_q=y[dam.node_q],
        lp_objective=lp.objective,
        lp=_solution(dam, lp),
    )


# -- schedules and re-pricing ---------------------------------------------


def schedule_table(dam: DamModel, sol: MarketSolution) -> list[dict]:
    """Tidy rows ``t`` (1-based), ``unit``, ``kind``, ``value`` for every priced quantity."""
    rows = []
    for group, idx in dam.model.var_groups.items():
        unit, kind = group.split(".", 1)
        if unit == "node":
            continue
        vals = sol.x[idx]
        if vals.ndim == 1:
            for t, v in enumerate(vals):
                rows.append({"t": t + 1, "unit": unit, "kind": kind, "value": float(v)})
        else:
            for w in range(vals.shape[0]):
                for t, v in enumerate(vals[w]):
                    rows.append({"t": t + 1, "unit": unit, "kind": f"{kind}{w + 1}", "value": float(v)})
    return rows


def unit_prices(case: MarketCase) -> dict[tuple[str, str], tuple[str, np.ndarray]]:
    """``(unit, kind) -> (objective part, $ per MWh of the quantity per slot)`` from the case data."""
    T = case.T
    prices: dict[tuple[str, str], tuple[str, np.ndarray]] = {
        (SUBSTATION, "p0"): ("O_p", case.lmp_p),
        (SUBSTATION, "q0"): ("O_q", case.lmp_q),
    }
    for g in case.generators:
        W = len(g.caps)
        cp = segment_values(g.prices, W, T)
        cq = np.zeros((W, T)) if g.q_prices is None else segment_values(g.q_prices, W, T)
        for w in range(W):
            prices[(g.name, f"p{w + 1}")] = ("O_p", cp[w])
            prices[(g.name, f"q+{w + 1}")] = ("O_q", cq[w])
            prices[(g.name, f"q-{w + 1}")] = ("O_q", cq[w])
    for d in case.demands:
        prices[(d.name, "curtail")] = ("O_p", np.full(T, d.voll))
        W = d.caps.shape[0]
        if W > 1:
            cp = segment_values(d.prices, W - 1, T)
            cq = np.zeros((W - 1, T)) if d.q_prices is None else segment_values(d.q_prices, W - 1, T)
            for w in range(W - 1):
                prices[(d.name, f"p{w + 1}")] = ("O_p", -cp[w])
                prices[(d.name, f"p{w + 1}/q")] = ("O_q", -d.kappa * cq[w])
    for bu in case.bess:
        prices[(bu.name, "ch")] = ("O_p", np.full(T, -bu.bid))
        prices[(bu.name, "dis")] = ("O_p", np.full(T, bu.offer))
    for u in case.vre:
        prices[(u.name, "curtail")] = ("O_p", np.full(T, u.zeta))
    return prices


def reprice(case: MarketCase, table) -> dict[str, float]:
    """Objective of a schedule table recomputed from the case prices: ``O_p``, ``O_q`` and ``total``."""
    prices = unit_prices(case)
    parts = {"O_p": 0.0, "O_q": 0.0}
    for row in table:
        t = int(row["t"]) - 1
        key = (row["unit"], row["kind"])
        value = float(row["value"])
        if key in prices:
            part, price = prices[key]
            parts[part] += case.dt * price[t] * value
        # a served bid segment also buys its reactive share
        qkey = (row["unit"], f"{row['kind']}/q")
        if qkey in prices:
            part, price = prices[qkey]
            parts[part] += case.dt * price[t] * value
    parts["total"] = parts["O_p"] + parts["O_q"]
    return parts


# -- oracles --------------------------------------------------------------


def objective_sensitivity(
    dam: DamModel, sol: MarketSolution, t: int, node: int, delta: float = 1e-4, reactive: bool = False
) -> float:
    """Central difference of the fixed-binary LP objective in extra consumption at ``node``, per MWh."""
    base = fixed_binary_model(dam, sol)
    row = (dam.node_q if reactive else dam.node_p)[t, dam.case.network.row(node)]
    step = delta * dam.case.base_mva
    vals = []
    for sign in (1.0, -1.0):
        m = base.copy()
        m.shift_rhs([row], sign * step)
        vals.append(m.solve_lp().objective)
    return (vals[0] - vals[1]) / (2 * step * dam.case.dt)


def nodal_balance_prices(dam: DamModel, sol: MarketSolution) -> tuple[np.ndarray, np.ndarray]:
    """Prices from a branch-flow reformulation with an explicit balance row per node.

    Flows, line losses and voltages are variables; the loss rows use the
    same loss models, written in terms of the flow variables, so each
    node's consumption enters its own balance row only.  The binaries are
    fixed at the values in ``sol``.  Returns ``(omega_p, omega_q)`` of shape (T, N).
    """
    case, net = dam.case, dam.case.network
    T, N, b = case.T, net.n, case.base_mva
    model = LinearModel(name=f"nodal:{case.name}")
    terms = NodalTerms(T, N)
    _add_assets(model, case, dam.available, terms)
    p0, q0 = _substation(model, case)
    P = model.add_vars("flow.P", (T, N), lb=-np.inf)
    Q = model.add_vars("flow.Q", (T, N), lb=-np.inf)
    LP = model.add_vars("flow.LP", (T, N), lb=-np.inf)
    LQ = model.add_vars("flow.LQ", (T, N), lb=-np.inf)
    V = model.add_vars("flow.V", (T, N), lb=-np.inf)
    for group, idx in dam.model.var_groups.items():
        if group in model.var_groups and np.asarray(dam.model.integer)[np.ravel(idx)].any():
            model.fix(model.var_groups[group], np.round(sol.x[idx]))

    C = np.zeros((N, N))  # C[i, c] = 1 if c is a child of i
    root_kids = [c - 1 for c in net.children[ROOT]]
    for k in range(N):
        for c in net.children[k + 1]:
            C[k, c - 1] = 1.0
    A = np.eye(N) - C
    bal_p = np.empty((T, N), int)
    bal_q = np.empty((T, N), int)
    rated = np.flatnonzero(np.isfinite(net.capacity))
    for t in range(T):
        lm = dam.losses[t]
        mp = dam.maps[t]
        for name, flow, loss, cols, const, out in (
            ("bal_p", P, LP, terms.p_cols[t], terms.p_const[t], bal_p),
            ("bal_q", Q, LQ, terms.q_cols[t], terms.q_const[t], bal_q),
        ):
            rc, rv = [], []
            for k in range(N):
                kids = np.flatnonzero(C[k])
                rc.append([flow[t, k], *flow[t, kids], *loss[t, kids], *[c for c, _ in cols[k]]])
                rv.append([1.0, *[-1.0] * (2 * len(kids)), *[-v for _, v in cols[k]]])
            out[t] = model.add_rows(name, rc, rv, "==", const)
        model.add_rows("root_p", [[p0[t], *P[t, root_kids], *LP[t, root_kids]]], [[1.0] + [-1.0] * 2 * len(root_kids)], "==", [0.0])
        model.add_rows("root_q", [[q0[t], *Q[t, root_kids], *LQ[t, root_kids]]], [[1.0] + [-1.0] * 2 * len(root_kids)], "==", [0.0])
        # losses in terms of flows: injection = A @ flow - C @ loss
        cols = np.concatenate([LP[t], LQ[t], P[t], Q[t]])
        for name, target, Gp, Gq, c0 in (
            ("loss_p", 0, lm.dLP_dp, lm.dLP_dq, mp["LP"].c),
            ("loss_q", 1, lm.dLQ_dp, lm.dLQ_dq, mp["LQ"].c),
        ):
            own = np.eye(N)
            M_LP = (own if target == 0 else 0.0) + Gp @ C
            M_LQ = (own if target == 1 else 0.0) + Gq @ C
            mat = np.hstack([M_LP, M_LQ, -Gp @ A, -Gq @ A])
            model.add_dense_rows(name, cols, mat, "==", c0)
        vc, vv, vr = [], [], []
        for k in range(N):
            up = net.parent[k + 1]
            c = [V[t, k], P[t, k], LP[t, k], Q[t, k], LQ[t, k]]
            v = [1.0, net.r[k] / b, net.r[k] / b, net.x[k] / b, net.x[k] / b]
            if up == ROOT:
                vr.append(net.v0)
            else:
                c.append(V[t, up - 1])
                v.append(-1.0)
                vr.append(0.0)
            vc.append(c)
            vv.append(v)
        model.add_rows("vdrop", vc, vv, "==", vr)
        model.add_rows("vmin", [[V[t, k]] for k in range(N)], [[1.0]] * N, ">=", np.full(N, 1 - case.epsilon))
        model.add_rows("vmax", [[V[t, k]] for k in range(N)], [[1.0]] * N, "<=", np.full(N, 1 + case.epsilon))
        for sp_, sq_ in LINE_SIGNS:
            if rated.size:
                model.add_rows(
                    "line",
                    [[P[t, j], Q[t, j]] for j in rated],
                    [[sp_, sq_]] * rated.size,
                    "<=",
                    SQRT2 * net.capacity[rated] * b,
                )
    lp = model.solve_lp()
    if not np.isfinite(lp.objective):
        raise SolverError("nodal balance LP failed")
    y = lp.duals / case.dt
    return y[bal_p], y[bal_q]
