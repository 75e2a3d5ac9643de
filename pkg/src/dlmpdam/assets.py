"""Market participants and the variables/rows they contribute to the clearing model.

Every builder writes into a :class:`~dlmpdam.solver.LinearModel` and
records its effect on nodal net consumption in a :class:`NodalTerms`
accumulator (consumption positive, MW / MVAr).  Objective coefficients
are $/MWh times the slot length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CaseValidationError
from .solver import LinearModel


def segment_values(values, W: int, T: int, name: str = "") -> np.ndarray:
    """Per-segment data as a ``(W, T)`` array: scalar, ``(W,)`` (constant over slots) or ``(W, T)``."""
    arr = np.asarray(values, float)
    if arr.ndim == 0:
        return np.full((W, T), float(arr))
    if arr.ndim == 1 and arr.size == W:
        return np.repeat(arr[:, None], T, axis=1)
    if arr.shape == (W, T):
        return arr
    raise CaseValidationError(f"expected {W} segment values, optionally per slot ({W}x{T}); got shape {arr.shape}", name or None)


@dataclass(frozen=True)
class GeneratorOffer:
    node: int
    caps: tuple[float, ...]  # MW per segment
    prices: tuple[float, ...]  # $/MWh per segment (scalar per segment or per slot)
    q_prices: tuple[float, ...] | None = None  # $/MVArh per segment
    p_min: float = 0.0
    p_max: float | None = None
    kappa: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not self.caps:
            raise CaseValidationError("generator needs at least one segment", self.name or f"node {self.node}")
        if any(c < 0 for c in self.caps):
            raise CaseValidationError("segment caps must be non-negative", self.name)
        if self.kappa < 0:
            raise CaseValidationError("kappa must be non-negative", self.name)
        upper = self.p_max if self.p_max is not None else sum(self.caps)
        if self.p_min > upper or sum(self.caps) < self.p_min:
            raise CaseValidationError(
                f"inconsistent bounds: p_min={self.p_min}, p_max={upper}, sum(caps)={sum(self.caps)}", self.name
            )


@dataclass(frozen=True)
class DemandBid:
    """Segmented load.  Segment 0 is must-serve and carries no bid.

    ``caps`` are MW at 100% load, shape (W,) or (W, T); ``prices`` and
    ``q_prices`` cover segments 1..W-1, shape (W-1,) or (W-1, T).
    """

    node: int
    caps: np.ndarray
    prices: np.ndarray
    q_prices: np.ndarray | None = None
    kappa: float = 0.0
    voll: float = 1000.0
    p_min: float | None = None
    p_max: float | None = None
    name: str = ""

    def __post_init__(self):
        caps = np.asarray(self.caps, float)
        if caps.ndim == 0 or caps.shape[0] < 1 or np.any(caps < 0):
            raise CaseValidationError("demand caps must be a non-empty non-negative array", self.name)
        prices = np.asarray(self.prices, float)
        if prices.shape[:1] != (caps.shape[0] - 1,):
            raise CaseValidationError(f"need {caps.shape[0] - 1} bid price rows, got {prices.shape}", self.name)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "prices", prices)
        if self.q_prices is not None:
            object.__setattr__(self, "q_prices", np.asarray(self.q_prices, float))


@dataclass(frozen=True)
class BessUnit:
    node: int
    e_min: float
    e_max: float
    e0: float
    p_max: float
    p_min: float = 0.0
    beta: float = 1.0  # self-discharge retention per slot
    beta_dis: float = 1.0
    beta_ch: float = 1.0
    offer: float = 25.0  # $/MWh paid for discharge
    bid: float = 20.0  # $/MWh paid by the unit for charging
    e_final_min: float | None = None
    name: str = ""

    def __post_init__(self):
        if not self.e_min <= self.e0 <= self.e_max:
            raise CaseValidationError("need e_min <= e0 <= e_max", self.name)
        for label in ("beta", "beta_dis", "beta_ch"):
            val = getattr(self, label)
            if not 0 < val <= 1:
                raise CaseValidationError(f"{label} must lie in (0, 1]", self.name)
        if not 0 <= self.p_min <= self.p_max:
            raise CaseValidationError("need 0 <= p_min <= p_max", self.name)


@dataclass(frozen=True)
class VreUnit:
    node: int
    site: str
    scale: float = 1.0
    kappa: float = 0.3
    zeta: float = 100.0
    name: str = ""

    def __post_init__(self):
        if not self.scale > 0:
            raise CaseValidationError("scale must be positive", self.name)
        if self.kappa < 0 or self.zeta < 0:
            raise CaseValidationError("kappa and zeta must be non-negative", self.name)


@dataclass
class NodalTerms:
    """Linear expression of net consumption per (slot, node row)."""

    T: int
    n: int
    p_cols: list = field(default_factory=list)
    q_cols: list = field(default_factory=list)
    p_const: np.ndarray = None
    q_const: np.ndarray = None

    def __post_init__(self):
        self.p_cols = [[[] for _ in range(self.n)] for _ in range(self.T)]
        self.q_cols = [[[] for _ in range(self.n)] for _ in range(self.T)]
        self.p_const = np.zeros((self.T, self.n))
        self.q_const = np.zeros((self.T, self.n))

    def add_p(self, t: int, row: int, col: int, coef: float) -> None:
        self.p_cols[t][row].append((int(col), float(coef)))

    def add_q(self, t: int, row: int, col: int, coef: float) -> None:
        self.q_cols[t][row].append((int(col), float(coef)))


def gen_demand_constraints(model: LinearModel, unit, row: int, terms: NodalTerms, dt: float, load_scale: float = 1.0):
    """Segment sums, segment/total bounds and the reactive coupling of a generator or load."""
    if isinstance(unit, GeneratorOffer):
        return _generator(model, unit, row, terms, dt)
    if isinstance(unit, DemandBid):
        return _demand(model, unit, row, terms, dt, load_scale)
    raise TypeError(f"not a generator offer or demand bid: {unit!r}")


def _generator(model: LinearModel, g: GeneratorOffer, row: int, terms: NodalTerms, dt: float) -> dict:
    T, W = terms.T, len(g.caps)
    tag = g.name or f"gen@{g.node}"
    prices = segment_values(g.prices, W, T, tag)
    qp = np.zeros((W, T)) if g.q_prices is None else segment_values(g.q_prices, W, T, tag)
    caps = np.repeat(np.asarray(g.caps, float)[:, None], T, axis=1)
    pg = model.add_vars(f"{tag}.p", (W, T), lb=0.0, ub=caps, cost=prices * dt)
    qup = model.add_vars(f"{tag}.q+", (W, T), lb=0.0, cost=qp * dt)
    qdn = model.add_vars(f"{tag}.q-", (W, T), lb=0.0, cost=qp * dt)
    cols = [[qup[w, t], qdn[w, t], pg[w, t]] for w in range(W) for t in range(T)]
    model.add_rows(f"{tag}.reactive", cols, [[1.0, 1.0, -g.kappa]] * len(cols), "<=", np.zeros(len(cols)))
    if g.p_min > 0:
        model.add_rows(f"{tag}.pmin", [pg[:, t] for t in range(T)], [np.ones(W)] * T, ">=", np.full(T, g.p_min))
    if g.p_max is not None and g.p_max < caps[:, 0].sum():
        model.add_rows(f"{tag}.pmax", [pg[:, t] for t in range(T)], [np.ones(W)] * T, "<=", np.full(T, g.p_max))
    for t in range(T):
        for w in range(W):
            terms.add_p(t, row, pg[w, t], -1.0)
            terms.add_q(t, row, qup[w, t], -1.0)
            terms.add_q(t, row, qdn[w, t], 1.0)
    return {"p": pg, "q+": qup, "q-": qdn}


def _demand(model: LinearModel, d: DemandBid, row: int, terms: NodalTerms, dt: float, load_scale: float) -> dict:
    T = terms.T
    tag = d.name or f"load@{d.node}"
    W = d.caps.shape[0]
    caps = segment_values(d.caps, W, T, tag) * load_scale
    must = caps[0]
    y = model.add_vars(f"{tag}.curtail", T, lb=0.0, ub=must, cost=d.voll * dt)
    out = {"curtail": y, "must": must, "kappa": d.kappa}
    for t in range(T):
        terms.p_const[t, row] += must[t]
        terms.q_const[t, row] += d.kappa * must[t]
        terms.add_p(t, row, y[t], -1.0)
        terms.add_q(t, row, y[t], -d.kappa)
    if W > 1:
        prices = segment_values(d.prices, W - 1, T, tag)
        qprices = np.zeros_like(prices) if d.q_prices is None else segment_values(d.q_prices, W - 1, T, tag)
        # Served reactive is kappa * served real, so the reactive bid is worth kappa * q_price per MW.
        pd = model.add_vars(f"{tag}.p", (W - 1, T), lb=0.0, ub=caps[1:], cost=-(prices + d.kappa * qprices) * dt)
        out["p"] = pd
        for t in range(T):
            for w in range(W - 1):
                terms.add_p(t, row, pd[w, t], 1.0)
                terms.add_q(t, row, pd[w, t], d.kappa)
    served_cols = [[y[t]] + ([] if W == 1 else list(out["p"][:, t])) for t in range(T)]
    served_coefs = [[-1.0] + [1.0] * (W - 1) for _ in range(T)]
    if d.p_min is not None:
        model.add_rows(f"{tag}.pmin", served_cols, served_coefs, ">=", d.p_min - must)
    if d.p_max is not None:
        model.add_rows(f"{tag}.pmax", served_cols, served_coefs, "<=", d.p_max - must)
    return out


def bess_constraints(model: LinearModel, b: BessUnit, row: int, terms: NodalTerms, dt: float) -> dict:
    """SOC recursion, SOC and rate limits, and charge/discharge mutual exclusion.

    ``dis`` is energy sold to the grid, ``ch`` energy bought from it::

        e[t] = beta * e[t-1] + dt * (beta_ch * ch[t-1] - dis[t-1] / beta_dis)

    with ``e[0] = e0`` and ``e[1..T]`` as variables.
    """
    T = terms.T
    tag = b.name or f"bess@{b.node}"
    ch = model.add_vars(f"{tag}.ch", T, lb=0.0, ub=b.p_max, cost=-b.bid * dt)
    dis = model.add_vars(f"{tag}.dis", T, lb=0.0, ub=b.p_max, cost=b.offer * dt)
    zch = model.add_vars(f"{tag}.zch", T, binary=True)
    zdis = model.add_vars(f"{tag}.zdis", T, binary=True)
    e_lb = np.full(T, b.e_min)
    if b.e_final_min is not None:
        e_lb[-1] = max(b.e_min, b.e_final_min)
    soc = model.add_vars(f"{tag}.soc", T, lb=e_lb, ub=b.e_max)

    model.add_rows(f"{tag}.ch_max", [[ch[t], zch[t]] for t in range(T)], [[1.0, -b.p_max]] * T, "<=", np.zeros(T))
    model.add_rows(f"{tag}.dis_max", [[dis[t], zdis[t]] for t in range(T)], [[1.0, -b.p_max]] * T, "<=", np.zeros(T))
    if b.p_min > 0:
        model.add_rows(f"{tag}.ch_min", [[ch[t], zch[t]] for t in range(T)], [[1.0, -b.p_min]] * T, ">=", np.zeros(T))
        model.add_rows(f"{tag}.dis_min", [[dis[t], zdis[t]] for t in range(T)], [[1.0, -b.p_min]] * T, ">=", np.zeros(T))
    model.add_rows(f"{tag}.exclusive", [[zch[t], zdis[t]] for t in range(T)], [[1.0, 1.0]] * T, "<=", np.ones(T))

    cols, coefs, rhs = [], [], []
    for t in range(T):
        c = [soc[t], ch[t], dis[t]]
        v = [1.0, -dt * b.beta_ch, dt / b.beta_dis]
        if t == 0:
            rhs.append(b.beta * b.e0)
        else:
            c.append(soc[t - 1])
            v.append(-b.beta)
            rhs.append(0.0)
        cols.append(c)
        coefs.append(v)
    model.add_rows(f"{tag}.soc", cols, coefs, "==", rhs)

    for t in range(T):
        terms.add_p(t, row, ch[t], 1.0)
        terms.add_p(t, row, dis[t], -1.0)
    return {"ch": ch, "dis": dis, "zch": zch, "zdis": zdis, "soc": soc}


def vre_constraints(
    model: LinearModel,
    u: VreUnit,
    available: np.ndarray,
    row: int,
    terms: NodalTerms,
    dt: float,
    reactive_mode: str = "box",
) -> dict:
    """Real output ``available - curtail``; reactive up to ``kappa * available``.

    Reactive capability is tied to the efficient point, not to the
    curtailed output.  ``reactive_mode="equality"`` pins it at the cap.
    """
    T = terms.T
    tag = u.name or f"vre@{u.node}"
    available = np.asarray(available, float)
    y = model.add_vars(f"{tag}.curtail", T, lb=0.0, ub=available, cost=u.zeta * dt)
    qcap = u.kappa * available
    if reactive_mode == "box":
        q = model.add_vars(f"{tag}.q", T, lb=0.0, ub=qcap)
    elif reactive_mode == "equality":
        q = model.add_vars(f"{tag}.q", T, lb=qcap, ub=qcap)
    else:
        raise CaseValidationError(f"unknown vre_reactive_mode {reactive_mode!r}")
    for t in range(T):
        terms.p_const[t, row] -= available[t]
        terms.add_p(t, row, y[t], 1.0)
        terms.add_q(t, row, q[t], -1.0)
    return {"curtail": y, "q": q, "available": available}


BID_RANGES = ((13.8, 28.1), (10.3, 26.5))
Q_BID_RATIO = 0.3


def random_bids(
    n_loads: int,
    seed: int,
    ranges=BID_RANGES,
    q_ratio: float = Q_BID_RATIO,
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform bid prices ``(n_loads, len(ranges))`` per bid segment and reactive bids at ``q_ratio`` of them."""
    rng = np.random.default_rng(seed)
    lo = np.array([r[0] for r in ranges])
    hi = np.array([r[1] for r in ranges])
    prices = rng.uniform(lo, hi, size=(n_loads, len(ranges)))
    return prices, q_ratio * prices
