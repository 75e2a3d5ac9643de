"""Command-line entry point: ``dlmpdam {pep,clear,dlmp,scenario,sweep-gamma}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import runner
from .errors import DlmpError, InputError, PowerFlowDivergence, SolverError
from .market import build_dam, center_states, clear, loss_models, reprice, schedule_table
from .pep import pep_schedule

EXIT_CODES = ((InputError, 2), (PowerFlowDivergence, 3), (SolverError, 4))


def _gammas(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty gamma list")
    return values


def _common(p: argparse.ArgumentParser, gamma_help: str = "confidence level in (0, 1)") -> None:
    p.add_argument("--case", default=None, help="case JSON (default: bundled 69-node case)")
    p.add_argument("--samples", default=None, help="historical VRE samples CSV (default: the case's config.samples)")
    p.add_argument("--gamma", type=_gammas, default=None, help=gamma_help)
    p.add_argument("--k", type=float, default=None, help="VRE output scale K")
    p.add_argument("--load-scale", type=float, default=None, help="load multiplier")
    p.add_argument("--seed", type=int, default=None, help="seed for generated demand bids")
    p.add_argument("--out-dir", default=None, help="directory for CSV/JSON outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dlmpdam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("pep", help="efficient points of the VRE samples per timeslot"))
    _common(sub.add_parser("clear", help="clear the day-ahead market and write the schedule"))
    _common(sub.add_parser("dlmp", help="clear, price and decompose nodal prices"))
    sc = sub.add_parser("scenario", help="run a preset study scenario (I-IV)")
    sc.add_argument("name", choices=sorted(runner.SCENARIOS))
    sc.add_argument("--bess", action="store_true", help="keep the case's storage units")
    _common(sc)
    _common(sub.add_parser("sweep-gamma", help="one run per confidence level"), "comma-separated confidence levels")
    return parser


def _load(args):
    with runner.stage("load", {}):
        path = Path(args.case) if args.case else runner.bundled_path("case69.json")
        case = runner.load_case(path, seed=args.seed)
        history = runner.load_samples(case, args.samples)
    return case, history


def _spec(args, case, name: str, bess: bool | None = None) -> runner.ScenarioSpec:
    base = runner.SCENARIOS.get(name)
    return runner.ScenarioSpec(
        name=name,
        load_scale=args.load_scale if args.load_scale is not None else (base.load_scale if base else case.load_scale),
        k=args.k if args.k is not None else (base.k if base else case.vre_scale),
        gammas=args.gamma if args.gamma else (case.gamma,),
        bess=bool(case.bess) if bess is None else bess,
    )


def _out(args, default: str) -> Path:
    return Path(args.out_dir) if args.out_dir else Path(default)


def cmd_pep(args) -> dict:
    case, history = _load(args)
    if history is None:
        raise InputError("no samples: pass --samples or set config.samples in the case")
    gamma = (args.gamma or (case.gamma,))[0]
    results = pep_schedule(history, gamma)
    out = _out(args, "out-pep")
    out.mkdir(parents=True, exist_ok=True)
    path = runner.write_rows(
        out / "pep.csv",
        ("t", "site", "point", "probability"),
        ([t + 1, site, repr(float(res.v[k])), repr(float(res.probability))] for t, res in enumerate(results) for k, site in enumerate(history.sites)),
    )
    return {"pep": str(path), "gamma": gamma}


def cmd_clear(args) -> dict:
    case, history = _load(args)
    spec = _spec(args, case, "clear")
    gamma = spec.gammas[0]
    timing: dict = {}
    with runner.stage("setup", timing):
        run_case = runner.scenario_case(case, spec, gamma)
    with runner.stage("pep", timing):
        points, sites = runner.efficient_points(run_case, history, gamma)
        available = run_case.vre_available(points, sites)
    with runner.stage("powerflow", timing):
        lms = loss_models(run_case, center_states(run_case, available))
    with runner.stage("market", timing):
        dam = build_dam(run_case, available, lms)
        sol = clear(dam)
    table = schedule_table(dam, sol)
    out = _out(args, "out-clear")
    out.mkdir(parents=True, exist_ok=True)
    path = runner.write_rows(out / "schedule.csv", ("t", "unit", "kind", "value"), ([r["t"], r["unit"], r["kind"], repr(r["value"])] for r in table))
    summary = {"objective": sol.objective, "repriced": reprice(run_case, table), "schedule": str(path), "gamma": gamma, "timing": timing}
    (out / "clear.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    return summary


def cmd_dlmp(args) -> dict:
    case, history = _load(args)
    spec = _spec(args, case, "dlmp")
    rec = runner.run_scenario(spec, case, history, out_dir=_out(args, "out-dlmp"))
    return rec.summary()


def cmd_scenario(args) -> dict:
    case, history = _load(args)
    spec = _spec(args, case, args.name, bess=args.bess)
    name = args.name + ("-bess" if args.bess else "")
    rec = runner.run_scenario(spec, case, history, out_dir=_out(args, f"out-scenario-{name}"))
    return rec.summary()


def cmd_sweep(args) -> dict:
    case, history = _load(args)
    gammas = args.gamma or (0.25, 0.5, 0.75)
    spec = _spec(args, case, "sweep")
    out = _out(args, "out-sweep")
    _, records = runner.sweep_confidence(case, history, gammas, spec=spec, out_dir=out)
    return {"gamma_sweep": str(out / "gamma_sweep.csv"), "objectives": {r.gamma: r.objective for r in records}}


COMMANDS = {"pep": cmd_pep, "clear": cmd_clear, "dlmp": cmd_dlmp, "scenario": cmd_scenario, "sweep-gamma": cmd_sweep}


def exit_code(exc: DlmpError) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except DlmpError as exc:
        print(f"error [{exc.stage or args.command}]: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
