"""Case files, scenario pipeline and tabular outputs.

Pipeline per run: efficient VRE points per slot, center-point power flow,
loss models, clearing MILP, fixed-binary LP duals, price decomposition.
"""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np
import scipy

from .assets import BID_RANGES, Q_BID_RATIO, BessUnit, DemandBid, GeneratorOffer, VreUnit, random_bids
from .dlmp import DlmpReport, decompose, loss_model_sensitivities
from .errors import CaseValidationError, DlmpError, InputError, TopologyError
from .market import (
    MarketCase,
    MarketSolution,
    build_dam,
    center_states,
    clear,
    extract_duals,
    loss_models,
    reprice,
    schedule_table,
)
from .network import LineParams, build_topology
from .pep import HistoricalData, load_history_csv, pep_schedule, schedule_matrix
from .powerflow import sweep_power_flow

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int = {"type": "integer"}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CASE_SCHEMA = _obj(
    {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "base_mva": _pos,
        "horizon": _obj({"T": {"type": "integer", "minimum": 1}, "dt": _pos}),
        "network": _obj(
            {
                "v0": _pos,
                "base_kv": _pos,
                "units": {"enum": ["pu", "ohm"]},
                "lines": {
                    "type": "array",
                    "minItems": 1,
                    "items": _obj(
                        {"id": _int, "from": _int, "to": _int, "r": _nonneg, "x": _nonneg, "s_max": {"type": ["number", "null"]}},
                        ("from", "to", "r", "x"),
                    ),
                },
            },
            ("lines",),
        ),
        "wholesale": _obj(
            {"lmp_p": {"type": "array", "items": _num, "minItems": 1}, "lmp_q": {"type": "array", "items": _num}, "q_ratio": _nonneg},
            ("lmp_p",),
        ),
        "load_profile": {"type": "array", "items": _nonneg},
        "loads": {
            "type": "array",
            "items": _obj(
                {
                    "node": _int,
                    "p_mw": _nonneg,
                    "q_mvar": _num,
                    "segments": {"type": "array", "items": _nonneg, "minItems": 1},
                    "bids": {"type": "array", "items": _num},
                    "q_bids": {"type": "array", "items": _num},
                    "voll": _nonneg,
                    "name": {"type": "string"},
                },
                ("node", "p_mw"),
            ),
        },
        "generators": {
            "type": "array",
            "items": _obj(
                {
                    "node": _int,
                    "segments": {
                        "type": "array",
                        "minItems": 1,
                        "items": _obj({"cap": _nonneg, "price": _num, "q_price": _num}, ("cap", "price")),
                    },
                    "p_min": _nonneg,
                    "p_max": _nonneg,
                    "kappa": _nonneg,
                    "name": {"type": "string"},
                },
                ("node", "segments"),
            ),
        },
        "bess": {
            "type": "array",
            "items": _obj(
                {
                    "node": _int,
                    "e_min": _nonneg,
                    "e_max": _nonneg,
                    "e0": _nonneg,
                    "p_max": _nonneg,
                    "p_min": _nonneg,
                    "beta": _pos,
                    "beta_dis": _pos,
                    "beta_ch": _pos,
                    "offer": _num,
                    "bid": _num,
                    "e_final_min": _nonneg,
                    "name": {"type": "string"},
                },
                ("node", "e_max", "e0", "p_max"),
            ),
        },
        "vre": {
            "type": "array",
            "items": _obj(
                {"node": _int, "site": {"type": "string"}, "scale": _pos, "kappa": _nonneg, "zeta": _nonneg, "name": {"type": "string"}},
                ("node", "site"),
            ),
        },
        "config": _obj(
            {
                "epsilon": _pos,
                "gamma": _pos,
                "k": _nonneg,
                "load_scale": _pos,
                "bid_seed": _int,
                "q_bid_ratio": _nonneg,
                "voll": _nonneg,
                "vre_reactive_mode": {"enum": ["box", "equality"]},
                "loss_voltage": {"enum": ["coupled", "center", "unity"]},
                "allow_export": {"type": "boolean"},
                "samples": {"type": "string"},
                "probe_node": _int,
            }
        ),
    },
    ("network", "wholesale", "loads"),
)


def _where(path) -> str:
    out = "$"
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def parse_case(doc: dict, source: str = "<case>", seed: int | None = None, base_dir: Path | None = None) -> MarketCase:
    """Validate a case document and build the :class:`MarketCase`."""
    errors = sorted(jsonschema.Draft202012Validator(CASE_SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise CaseValidationError(e.message, f"{source}: {_where(e.absolute_path)}")
    cfg = doc.get("config", {})
    net_doc = doc["network"]
    base_mva = float(doc.get("base_mva", 1.0))
    zb = 1.0
    if net_doc.get("units", "pu") == "ohm":
        if "base_kv" not in net_doc:
            raise CaseValidationError("base_kv is required when units are ohm", f"{source}: $.network")
        zb = net_doc["base_kv"] ** 2 / base_mva
    lines = []
    for k, ln in enumerate(net_doc["lines"]):
        loc = f"{source}: $.network.lines[{k}]"
        if "id" in ln and ln["id"] != ln["to"]:
            raise CaseValidationError(f"line id {ln['id']} must equal its downstream node {ln['to']}", loc)
        cap = ln.get("s_max")
        try:
            lines.append(
                LineParams(
                    index=ln["to"],
                    upstream_node=ln["from"],
                    r=ln["r"] / zb,
                    x=ln["x"] / zb,
                    capacity=float("inf") if cap is None else cap / base_mva,
                )
            )
        except InputError as exc:
            raise CaseValidationError(str(exc), loc) from None
    try:
        net = build_topology(lines, v0=net_doc.get("v0", 1.0))
    except TopologyError as exc:
        raise TopologyError(f"{source}: {exc}") from None
    except InputError as exc:
        raise CaseValidationError(str(exc), f"{source}: $.network.lines") from exc

    lmp_p = np.asarray(doc["wholesale"]["lmp_p"], float)
    T = int(doc.get("horizon", {}).get("T", lmp_p.size))
    if lmp_p.size != T:
        raise CaseValidationError(f"{lmp_p.size} prices for a horizon of {T}", f"{source}: $.wholesale.lmp_p")
    lmp_q = doc["wholesale"].get("lmp_q")
    if lmp_q is not None and len(lmp_q) != T:
        raise CaseValidationError(f"{len(lmp_q)} prices for a horizon of {T}", f"{source}: $.wholesale.lmp_q")
    profile = np.asarray(doc.get("load_profile", np.ones(T)), float)
    if profile.size != T:
        raise CaseValidationError(f"{profile.size} values for a horizon of {T}", f"{source}: $.load_profile")

    bid_seed = seed if seed is not None else cfg.get("bid_seed")
    q_ratio = cfg.get("q_bid_ratio", Q_BID_RATIO)
    loads = doc["loads"]
    need_bids = [k for k, ld in enumerate(loads) if "bids" not in ld and len(ld.get("segments", [0.5, 0.25, 0.25])) > 1]
    generated = {}
    if need_bids:
        if bid_seed is None:
            raise CaseValidationError("loads without bids need config.bid_seed", f"{source}: $.config")
        n_seg = {len(loads[k].get("segments", [0.5, 0.25, 0.25])) - 1 for k in need_bids}
        width = max(n_seg)
        ranges = BID_RANGES[:width] if width <= len(BID_RANGES) else BID_RANGES + (BID_RANGES[-1],) * (width - len(BID_RANGES))
        prices, qprices = random_bids(len(need_bids), bid_seed, ranges, q_ratio)
        generated = {k: (prices[n], qprices[n]) for n, k in enumerate(need_bids)}

    demands = []
    for k, ld in enumerate(loads):
        loc = f"{source}: $.loads[{k}]"
        seg = np.asarray(ld.get("segments", [0.5, 0.25, 0.25]), float)
        if abs(seg.sum() - 1.0) > 1e-9:
            raise CaseValidationError(f"segment shares sum to {seg.sum()}, not 1", loc)
        W = seg.size
        if k in generated:
            bids, qbids = generated[k][0][: W - 1], generated[k][1][: W - 1]
        else:
            bids = np.asarray(ld.get("bids", []), float)
            qbids = np.asarray(ld.get("q_bids", q_ratio * bids), float)
        if bids.size != W - 1 or qbids.size != W - 1:
            raise CaseValidationError(f"need {W - 1} bid prices", loc)
        p = ld["p_mw"]
        kappa = ld.get("q_mvar", 0.0) / p if p > 0 else 0.0
        try:
            demands.append(
                DemandBid(
                    node=ld["node"],
                    caps=p * seg[:, None] * profile[None, :],
                    prices=bids,
                    q_prices=qbids,
                    kappa=kappa,
                    voll=ld.get("voll", cfg.get("voll", 1000.0)),
                    name=ld.get("name", ""),
                )
            )
        except InputError as exc:
            raise CaseValidationError(str(exc), loc) from None

    def build(kind, cls, conv):
        out = []
        for k, item in enumerate(doc.get(kind, [])):
            try:
                out.append(cls(**conv(item)))
            except (InputError, TypeError) as exc:
                raise CaseValidationError(str(exc), f"{source}: $.{kind}[{k}]") from None
        return tuple(out)

    gens = build(
        "generators",
        GeneratorOffer,
        lambda g: dict(
            node=g["node"],
            caps=tuple(s["cap"] for s in g["segments"]),
            prices=tuple(s["price"] for s in g["segments"]),
            q_prices=tuple(s.get("q_price", 0.0) for s in g["segments"]),
            p_min=g.get("p_min", 0.0),
            p_max=g.get("p_max"),
            kappa=g.get("kappa", 0.0),
            name=g.get("name", ""),
        ),
    )
    bess = build("bess", BessUnit, lambda b: {"e_min": 0.0, **b})
    vre = build("vre", VreUnit, dict)

    samples = cfg.get("samples")
    if samples is not None and base_dir is not None:
        samples = str((base_dir / samples).resolve())
    try:
        return MarketCase(
            network=net,
            lmp_p=lmp_p,
            lmp_q=lmp_q,
            dt=float(doc.get("horizon", {}).get("dt", 1.0)),
            generators=gens,
            demands=tuple(demands),
            bess=bess,
            vre=vre,
            epsilon=cfg.get("epsilon", 0.1),
            gamma=cfg.get("gamma", 0.75),
            vre_scale=cfg.get("k", 1.0),
            load_scale=cfg.get("load_scale", 1.0),
            base_mva=base_mva,
            q_ratio=doc["wholesale"].get("q_ratio", 0.3),
            allow_export=cfg.get("allow_export", False),
            vre_reactive_mode=cfg.get("vre_reactive_mode", "box"),
            loss_voltage_mode=cfg.get("loss_voltage", "coupled"),
            name=doc.get("name", Path(source).stem),
            bid_seed=bid_seed,
            metadata={"source": source, "samples": samples, "probe_node": cfg.get("probe_node")},
        )
    except CaseValidationError as exc:
        raise CaseValidationError(str(exc), source) from None


def load_case(path: str | Path, seed: int | None = None) -> MarketCase:
    """Read a JSON case file; ``seed`` overrides ``config.bid_seed``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read case file {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseValidationError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from None
    if not isinstance(doc, dict):
        raise CaseValidationError("top level must be an object", str(path))
    return parse_case(doc, str(path), seed=seed, base_dir=path.parent)


def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package (``case69.json``, ``tutorial2.json``, ...)."""
    ref = resources.files("dlmpdam.data") / name
    if not ref.is_file():
        raise InputError(f"no bundled data file {name!r}")
    return Path(str(ref))


# -- scenarios ------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    load_scale: float = 1.0
    k: float = 1.0
    gammas: tuple[float, ...] = (0.75,)
    bess: bool = False
    bid_seed: int | None = None

    def __post_init__(self):
        if self.load_scale <= 0 or self.k < 0:
            raise InputError(f"scenario {self.name}: need load_scale > 0 and k >= 0")
        if not self.gammas:
            raise InputError(f"scenario {self.name}: empty gamma list")
        for g in self.gammas:
            if not 0 < g < 1:
                raise InputError(f"scenario {self.name}: gamma {g} outside (0, 1)")


SCENARIOS = {
    "I": ScenarioSpec("I", load_scale=2.0, k=0.0),
    "II": ScenarioSpec("II", load_scale=2.0, k=1.0),
    "III": ScenarioSpec("III", load_scale=1.0, k=2.0),
    "IV": ScenarioSpec("IV", load_scale=1.0, k=4.0),
}


@dataclass
class RunRecord:
    scenario: str
    gamma: float
    digest: str
    status: str
    objective: float
    lp_objective: float
    repriced: dict
    timing: dict
    outputs: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    solver: str = f"scipy {scipy.__version__} / HiGHS"
    bid_seed: int | None = None
    # in-memory results, not serialized
    case: MarketCase | None = field(default=None, repr=False)
    solution: MarketSolution | None = field(default=None, repr=False)
    duals: object = field(default=None, repr=False)
    report: DlmpReport | None = field(default=None, repr=False)
    available: np.ndarray | None = field(default=None, repr=False)
    pep_points: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        keep = ("scenario", "gamma", "digest", "status", "objective", "lp_objective", "repriced", "timing", "outputs", "checks", "solver", "bid_seed")
        return {k: getattr(self, k) for k in keep}


@contextlib.contextmanager
def stage(name: str, timing: dict):
    """Time a pipeline stage and tag any error raised inside it."""
    start = time.perf_counter()
    try:
        yield
    except DlmpError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    finally:
        timing[name] = round(time.perf_counter() - start, 6)


def _canonical(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _canonical(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name not in ("metadata", "_index")}
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()] if obj.ndim else _canonical(obj.item())
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return repr(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def case_digest(case: MarketCase, history: HistoricalData | None, spec: ScenarioSpec, gamma: float) -> str:
    payload = {
        "case": _canonical(case),
        "history": None if history is None else _canonical(history),
        "spec": _canonical(spec),
        "gamma": repr(float(gamma)),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def scenario_case(case: MarketCase, spec: ScenarioSpec, gamma: float) -> MarketCase:
    changes = {"load_scale": spec.load_scale, "vre_scale": spec.k, "gamma": gamma}
    if not spec.bess:
        changes["bess"] = ()
    return case.with_options(**changes)


def efficient_points(case: MarketCase, history: HistoricalData | None, gamma: float) -> tuple[np.ndarray, tuple[str, ...]]:
    """Per-slot efficient points ``(T, |sites|)`` for the case's VRE sites (zeros when VRE is off)."""
    sites = case.sites
    if not case.vre or case.vre_scale == 0:
        return np.zeros((case.T, len(sites))), sites
    if history is None:
        raise InputError("the case has VRE units but no historical samples were given")
    if history.horizon != case.T:
        raise InputError(f"history covers {history.horizon} slots, horizon is {case.T}")
    missing = set(sites) - set(history.sites)
    if missing:
        raise InputError(f"no samples for VRE sites {sorted(missing)}")
    cols = [history.sites.index(s) for s in sites]
    sub = HistoricalData(sites, history.days, history.values[:, :, cols], history.probabilities)
    return schedule_matrix(pep_schedule(sub, gamma)), sites


def run_scenario(
    spec: ScenarioSpec,
    case: MarketCase,
    history: HistoricalData | None = None,
    out_dir: str | Path | None = None,
    gamma: float | None = None,
    time_limit: float | None = 600.0,
) -> RunRecord:
    """Efficient points, center sweep, loss models, clearing, duals and prices for one scenario."""
    gamma = spec.gammas[0] if gamma is None else gamma
    timing: dict[str, float] = {}
    with stage("setup", timing):
        if spec.bid_seed is not None and spec.bid_seed != case.bid_seed:
            source = case.metadata.get("source")
            if not source:
                raise InputError("re-seeding bids needs a case loaded from a file")
            case = load_case(source, seed=spec.bid_seed)
        run_case = scenario_case(case, spec, gamma)
    with stage("pep", timing):
        points, sites = efficient_points(run_case, history, gamma)
        available = run_case.vre_available(points, sites)
    with stage("powerflow", timing):
        states = center_states(run_case, available)
        lms = loss_models(run_case, states)
    with stage("market", timing):
        dam = build_dam(run_case, available, lms)
        sol = clear(dam, time_limit=time_limit)
        duals = extract_duals(dam, sol)
    with stage("dlmp", timing):
        bundles = [loss_model_sensitivities(run_case.network, lm) for lm in lms]
        report = decompose(duals, bundles, run_case.network, run_case.base_mva)
    with stage("checks", timing):
        table = schedule_table(dam, sol)
        repriced = reprice(run_case, table)
        checks = run_checks(run_case, sol, duals, report, repriced)
    record = RunRecord(
        scenario=spec.name,
        gamma=gamma,
        digest=case_digest(run_case, history, spec, gamma),
        status=sol.status,
        objective=sol.objective,
        lp_objective=duals.lp_objective,
        repriced=repriced,
        timing=timing,
        checks=checks,
        bid_seed=run_case.bid_seed,
        case=run_case,
        solution=sol,
        duals=duals,
        report=report,
        available=available,
        pep_points=points,
    )
    if out_dir is not None:
        with stage("output", timing):
            write_outputs(record, Path(out_dir), table, states, sites)
    return record


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def run_checks(case: MarketCase, sol: MarketSolution, duals, report: DlmpReport, repriced: dict) -> dict:
    """Identities every run must satisfy, with the re-swept voltage error for information."""
    comp = sum(report.p[c] for c in report.p)
    checks = {
        "objective_vs_repriced": _rel(sol.objective, repriced["total"]),
        "objective_vs_lp": _rel(sol.objective, duals.lp_objective),
        "component_sum": float(np.max(np.abs(report.omega_p - comp))),
        "price_vs_node_dual_p": float(np.max(np.abs(report.omega_p - duals.node_p))),
        "price_vs_node_dual_q": float(np.max(np.abs(report.omega_q - duals.node_q))),
    }
    errs = []
    for t in range(case.T):
        try:
            st = sweep_power_flow(case.network, sol.pn[t] / case.base_mva, sol.qn[t] / case.base_mva)
        except DlmpError:
            errs.append(np.inf)
            continue
        errs.append(float(np.max(np.abs(st.v - sol.V[t]))))
    checks["voltage_error_vs_sweep"] = max(errs)
    return checks


def write_outputs(record: RunRecord, out: Path, table, states, sites) -> None:
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    paths["dlmp"] = str(record.report.to_csv(out / "dlmp.csv"))
    paths["schedule"] = str(write_rows(out / "schedule.csv", ("t", "unit", "kind", "value"), ([r["t"], r["unit"], r["kind"], repr(r["value"])] for r in table)))
    paths["pep"] = str(
        write_rows(
            out / "pep.csv",
            ("t", "site", "v_mw"),
            ([t + 1, s, repr(float(record.pep_points[t, k]))] for t in range(record.pep_points.shape[0]) for k, s in enumerate(sites)),
        )
    )
    net = record.case.network
    sol = record.solution
    paths["network"] = str(
        write_rows(
            out / "network.csv",
            ("t", "node", "pn_mw", "qn_mvar", "v_linear", "p_mw", "q_mvar", "loss_p_mw", "loss_q_mvar", "v_center", "angle_center"),
            (
                [t + 1, node, *(repr(float(a[t, k])) for a in (sol.pn, sol.qn, sol.V, sol.P, sol.Q, sol.loss_p, sol.loss_q)), repr(float(states[t].v[k])), repr(float(states[t].dd[k]))]
                for t in range(record.case.T)
                for k, node in enumerate(net.node_ids)
            ),
        )
    )
    record.outputs = paths
    (out / "run.json").write_text(json.dumps(record.summary(), indent=2, sort_keys=True), encoding="utf-8")


def write_rows(path: Path, header: Sequence[str], rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def read_schedule_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [{"t": int(r["t"]), "unit": r["unit"], "kind": r["kind"], "value": float(r["value"])} for r in csv.DictReader(fh)]


def reprice_schedule_csv(case: MarketCase, path: str | Path) -> dict:
    return reprice(case, read_schedule_csv(path))


def sweep_confidence(
    case: MarketCase,
    history: HistoricalData | None,
    gammas: Sequence[float],
    spec: ScenarioSpec | None = None,
    probe: int | None = None,
    out_dir: str | Path | None = None,
) -> tuple[list[dict], list[RunRecord]]:
    """One run per gamma; rows ``t, gamma, omega_p, omega_q`` at the probe node."""
    gammas = tuple(gammas)
    if not gammas:
        raise InputError("empty gamma list")
    spec = spec or ScenarioSpec("sweep", load_scale=case.load_scale, k=case.vre_scale, gammas=gammas, bess=bool(case.bess))
    spec = dataclasses.replace(spec, gammas=gammas)
    probe = probe if probe is not None else case.metadata.get("probe_node") or case.network.node_ids[-1]
    rows, records = [], []
    for g in gammas:
        sub = None if out_dir is None else Path(out_dir) / f"gamma_{g:g}"
        rec = run_scenario(spec, case, history, out_dir=sub, gamma=g)
        records.append(rec)
        op = rec.report.at(probe, "p")
        oq = rec.report.at(probe, "q")
        for t in range(case.T):
            rows.append({"t": t + 1, "gamma": g, "node": probe, "omega_p": float(op[t]), "omega_q": float(oq[t])})
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_rows(
            Path(out_dir) / "gamma_sweep.csv",
            ("t", "gamma", "node", "omega_p", "omega_q"),
            ([r["t"], r["gamma"], r["node"], repr(r["omega_p"]), repr(r["omega_q"])] for r in rows),
        )
    return rows, records


def load_samples(case: MarketCase, path: str | Path | None = None) -> HistoricalData | None:
    """Historical samples from ``path`` or the case's ``config.samples``."""
    path = path or case.metadata.get("samples")
    if path is None:
        return None
    return load_history_csv(path, horizon=case.T)
