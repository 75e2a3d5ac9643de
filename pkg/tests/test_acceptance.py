"""End-to-end acceptance checks, one test and one PASS/FAIL line per criterion."""

import time

import numpy as np
import pytest

from dlmpdam import runner
from dlmpdam.data.ieee69 import nominal_loads_mw
from dlmpdam.dlmp import COMPONENTS, decompose, loss_model_sensitivities
from dlmpdam.market import nodal_balance_prices, objective_sensitivity, reprice, schedule_table
from dlmpdam.pep import HistoricalData, SampleSet, brute_force_pep, pep_schedule, schedule_matrix, solve_pep
from dlmpdam.powerflow import linearize_losses, linearized_voltages, sweep_power_flow

from conftest import cleared, feeder_cases, record_criterion

GAMMAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
TIGHT = {"tol": 1e-14, "max_iter": 500}
SCENARIO_LIMIT_S = 120.0


def slots(idx):
    return [int(i) + 1 for i in idx]


def random_instances(n=200, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        S, R = int(rng.integers(1, 13)), int(rng.integers(1, 5))
        samples = SampleSet.uniform([f"r{k}" for k in range(R)], rng.uniform(0, 10, (S, R)))
        out.append((samples, float(rng.choice([0.1, 0.25, 0.5, 0.75, 0.9]))))
    return out


@pytest.fixture(scope="module")
def runs(case69, history69):
    """Scenario I-IV plus III with storage, each timed on its own."""
    out = {}
    for name in ("I", "II", "III", "IV"):
        start = time.perf_counter()
        rec = runner.run_scenario(runner.SCENARIOS[name], case69, history69)
        out[name] = (rec, time.perf_counter() - start)
    spec = runner.ScenarioSpec("III+BESS", load_scale=1.0, k=2.0, bess=True)
    start = time.perf_counter()
    out["III+BESS"] = (runner.run_scenario(spec, case69, history69), time.perf_counter() - start)
    return out


def test_criterion_1_pep_oracle_equivalence():
    instances = random_instances()
    start = time.perf_counter()
    worst = 0.0
    for samples, gamma in instances:
        worst = max(worst, abs(solve_pep(samples, gamma).total - brute_force_pep(samples, gamma).total))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5.0
    record_criterion("C1 PEP oracle equivalence", ok, f"200 instances, max |MILP - enumeration| = {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_2_pep_monotonicity(history69):
    violations = 0
    for samples, _ in random_instances():
        totals = [solve_pep(samples, g, tie_break=False).total for g in GAMMAS]
        violations += sum(a > b + 1e-9 for a, b in zip(totals, totals[1:]))
    pairs = [(w, pv) for w in ("W1", "W2") for pv in ("PV1", "PV2")]
    below = 0
    for pair in pairs:
        cols = [history69.sites.index(s) for s in pair]
        hist = HistoricalData(pair, history69.days, history69.values[:, :, cols], history69.probabilities)
        low = schedule_matrix(pep_schedule(hist, 0.25))
        high = schedule_matrix(pep_schedule(hist, 0.75))
        below += int(np.sum(high < low - 1e-12))
    ok = violations == 0 and below == 0
    record_criterion(
        "C2 PEP monotonicity",
        ok,
        f"{violations} decreasing steps over gamma 0.1..0.9; {below} entries with v(0.75) < v(0.25) across {len(pairs)} wind/PV pairs",
    )
    assert ok


def test_criterion_3_lpf_accuracy(case69):
    net = case69.network
    p, q = np.zeros(net.n), np.zeros(net.n)
    for node, (pp, qq) in nominal_loads_mw().items():
        p[net.row(node)], q[net.row(node)] = pp, qq
    st = sweep_power_flow(net, p, q, **TIGHT)
    lm = linearize_losses(net, st)
    LP, LQ = lm.evaluate(p, q)
    v_err = float(np.max(np.abs(linearized_voltages(net, p, q, LP, LQ) - st.v)))
    exact_center = bool(np.array_equal(LP, st.LP) and np.array_equal(LQ, st.LQ))

    h, grad_err, structural = 1e-5, 0.0, 0.0
    for i in range(net.n):
        for kind in ("p", "q"):
            e = np.zeros(net.n)
            e[i] = h
            hi = sweep_power_flow(net, p + e * (kind == "p"), q + e * (kind == "q"), **TIGHT)
            lo = sweep_power_flow(net, p - e * (kind == "p"), q - e * (kind == "q"), **TIGHT)
            for fd, g in (
                ((hi.LP - lo.LP) / (2 * h), (lm.dLP_dp if kind == "p" else lm.dLP_dq)[:, i]),
                ((hi.LQ - lo.LQ) / (2 * h), (lm.dLQ_dp if kind == "p" else lm.dLQ_dq)[:, i]),
            ):
                nz = np.abs(fd) > 1e-8
                structural = max(structural, float(np.max(np.abs(g[~nz] - fd[~nz]), initial=0.0)))
                if nz.any():
                    grad_err = max(grad_err, float(np.max(np.abs(g[nz] - fd[nz]) / np.abs(fd[nz]))))

    rng = np.random.default_rng(0)
    dp, dq = rng.normal(scale=0.01, size=(2, net.n))
    errs = []
    for s in (1.0, 0.5, 0.25, 0.125):
        exact = sweep_power_flow(net, p + s * dp, q + s * dq, **TIGHT)
        errs.append(float(np.max(np.abs(lm.evaluate(p + s * dp, q + s * dq)[0] - exact.LP))))
    ratios = [a / b for a, b in zip(errs, errs[1:])]

    ok = v_err <= 0.01 and exact_center and grad_err <= 1e-4 and structural <= 1e-8 and all(3.5 <= r <= 4.5 for r in ratios)
    record_criterion(
        "C3 LPF accuracy",
        ok,
        f"max |V_lin - V_sweep| = {v_err:.2e} p.u.; center exact = {exact_center}; "
        f"gradient rel. error = {grad_err:.2e} (abs. error where the difference is below 1e-8: {structural:.1e}); halving ratios = {', '.join(f'{r:.3f}' for r in ratios)}",
    )
    assert ok


def test_criterion_4_pricing_consistency():
    start = time.perf_counter()
    oracle_err, fd_err, regimes = 0.0, 0.0, []
    for name, (case, available) in feeder_cases().items():
        dam, sol, duals, lms = cleared(case, available)
        bundles = [loss_model_sensitivities(case.network, lm) for lm in lms]
        rep = decompose(duals, bundles, case.network, case.base_mva)
        op, _ = nodal_balance_prices(dam, sol)
        oracle_err = max(oracle_err, float(np.max(np.abs(rep.omega_p - op))))
        for t in range(case.T):
            for node in case.network.node_ids:
                fd = objective_sensitivity(dam, sol, t, node)
                fd_err = max(fd_err, abs(rep.at(node)[t] - fd) / max(abs(fd), 1e-9))
        tags = []
        if np.abs(duals.rho).max() > 1e-9:
            tags.append("congested")
        if max(np.abs(duals.mu_min).max(), np.abs(duals.mu_max).max()) > 1e-9:
            tags.append("voltage")
        if any(sol.curtailment(u.name).max() > 1e-9 for u in case.vre):
            tags.append("curtailing")
        regimes.append(f"{case.network.n + 1}-node {'/'.join(tags) or 'uncongested'}")
    elapsed = time.perf_counter() - start
    covered = {tag for r in regimes for tag in r.split(" ", 1)[1].split("/")}
    ok = (
        oracle_err <= 1e-4
        and fd_err <= 1e-2
        and elapsed < 30.0
        and covered >= {"uncongested", "congested", "voltage", "curtailing"}
        and len(regimes) == 5
    )
    record_criterion(
        "C4 DLMP pricing consistency",
        ok,
        f"{'; '.join(regimes)}; max |price - nodal oracle| = {oracle_err:.2e} $/MWh; "
        f"max rel. dev. from objective differences = {fd_err:.2e}; {elapsed:.1f} s",
    )
    assert ok


def test_criterion_5_scenario_signs(runs, case69):
    probe = case69.metadata["probe_node"]
    tiny = 1e-9
    notes, ok = [], True

    rec, secs = runs["I"]
    rep = rec.report
    hit = np.flatnonzero((np.abs(rep.at(probe, component="voltage")) > tiny) & (np.abs(rep.at(probe, component="congestion")) > tiny))
    ok &= hit.size > 0 and secs < SCENARIO_LIMIT_S
    notes.append(f"I: voltage and congestion active at slots {slots(hit)} ({secs:.1f} s)")

    rec, secs = runs["II"]
    rep = rec.report
    vc = max(np.abs(rep.p[c]).max() for c in ("voltage", "congestion"))
    vc = max(vc, max(np.abs(rep.q[c]).max() for c in ("voltage", "congestion")))
    below = np.flatnonzero(rep.at(probe, component="energy") < rec.case.lmp_p - tiny)
    ok &= vc == 0 and below.size > 0 and secs < SCENARIO_LIMIT_S
    notes.append(f"II: max |voltage|,|congestion| = {vc:.1e}, energy below wholesale at slots {slots(below)} ({secs:.1f} s)")

    rec, secs = runs["III"]
    rep, sol = rec.report, rec.solution
    curtailed = sum(sol.curtailment(u.name) for u in rec.case.vre) > tiny
    hit = np.flatnonzero(curtailed & (rep.at(probe, component="energy") < 0) & (rep.at(probe, component="loss") < 0))
    ok &= hit.size > 0 and secs < SCENARIO_LIMIT_S
    notes.append(f"III: curtailment with negative energy and loss at slots {slots(hit)} ({secs:.1f} s)")

    rec, secs = runs["IV"]
    rep = rec.report
    hit = np.flatnonzero((rep.at(probe, component="voltage") < -tiny) & (rep.at(probe, "q") >= 0))
    ok &= hit.size > 0 and secs < SCENARIO_LIMIT_S
    notes.append(f"IV: negative voltage component with non-negative reactive price at slots {slots(hit)} ({secs:.1f} s)")

    record_criterion("C5 scenario sign patterns", bool(ok), f"probe node {probe}; " + "; ".join(notes))
    assert ok


def test_criterion_6_bess_arbitrage(runs):
    with_bess, secs = runs["III+BESS"]
    without, _ = runs["III"]
    unit = with_bess.case.bess[0]
    sol = with_bess.solution
    ch, dis = sol.value(f"{unit.name}.ch"), sol.value(f"{unit.name}.dis")
    price = with_bess.report.at(unit.node)
    charging, discharging = ch > 1e-9, dis > 1e-9
    cheap = bool(np.all(price[charging] < unit.bid))
    dear = bool(np.all(price[discharging] > unit.offer))
    exclusive = not np.any(charging & discharging)
    dq = float(np.max(np.abs(with_bess.report.at(unit.node, "q") - without.report.at(unit.node, "q"))))
    ok = cheap and dear and exclusive and dq <= 1e-6 and charging.any() and discharging.any()
    record_criterion(
        "C6 BESS arbitrage",
        ok,
        f"charges at slots {slots(np.flatnonzero(charging))} (max price {price[charging].max(initial=-np.inf):.2f} < {unit.bid}), "
        f"discharges at slots {slots(np.flatnonzero(discharging))} (min price {price[discharging].min(initial=np.inf):.2f} > {unit.offer}); "
        f"simultaneous = {not exclusive}; reactive price change {dq:.1e} ({secs:.1f} s)",
    )
    assert ok


def test_criterion_7_identities(runs, tutorial):
    worst = {"components": 0.0, "repriced": 0.0, "lp": 0.0}
    checked = []
    for name, (rec, _) in runs.items():
        worst["components"] = max(worst["components"], rec.checks["component_sum"])
        worst["repriced"] = max(worst["repriced"], rec.checks["objective_vs_repriced"])
        worst["lp"] = max(worst["lp"], rec.checks["objective_vs_lp"])
        checked.append(name)
    rec = runner.run_scenario(runner.ScenarioSpec("tutorial", k=0.0, gammas=(tutorial.gamma,)), tutorial, None)
    for key, check in (("components", "component_sum"), ("repriced", "objective_vs_repriced"), ("lp", "objective_vs_lp")):
        worst[key] = max(worst[key], rec.checks[check])
    checked.append("tutorial")
    for name, (case, available) in feeder_cases().items():
        dam, sol, duals, lms = cleared(case, available)
        rep = decompose(duals, [loss_model_sensitivities(case.network, lm) for lm in lms], case.network)
        total = reprice(case, schedule_table(dam, sol))["total"]
        for omega, parts in ((rep.omega_p, rep.p), (rep.omega_q, rep.q)):
            worst["components"] = max(worst["components"], float(np.max(np.abs(omega - sum(parts[c] for c in COMPONENTS)))))
        worst["repriced"] = max(worst["repriced"], abs(total - sol.objective) / max(1.0, abs(sol.objective)))
        worst["lp"] = max(worst["lp"], abs(duals.lp_objective - sol.objective) / max(1.0, abs(sol.objective)))
        checked.append(name)
    ok = worst["components"] <= 1e-12 and worst["repriced"] <= 1e-6 and worst["lp"] <= 1e-6
    record_criterion(
        "C7 construction identities",
        ok,
        f"{len(checked)} runs; component sum {worst['components']:.1e}, "
        f"re-priced {worst['repriced']:.1e} rel., fixed-binary LP {worst['lp']:.1e} rel.",
    )
    assert ok
