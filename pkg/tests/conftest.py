import numpy as np
import pytest

from dlmpdam import runner
from dlmpdam.assets import DemandBid, GeneratorOffer, VreUnit
from dlmpdam.market import MarketCase, build_dam, center_states, clear, extract_duals, loss_models
from dlmpdam.network import LineParams, build_topology


def chain(rs, xs, caps=None, v0=1.0):
    """Feeder 0-1-2-...-n with line k serving node k."""
    caps = caps or [float("inf")] * len(rs)
    return build_topology([LineParams(k + 1, k, r, x, c) for k, (r, x, c) in enumerate(zip(rs, xs, caps))], v0)


def load(node, mw, kappa=0.3, split=(0.5, 0.25, 0.25), bids=(30.0, 22.0), T=1, voll=1000.0, name=""):
    caps = np.outer(np.asarray(split) * mw, np.ones(T))
    prices = np.outer(bids, np.ones(T)) if len(split) > 1 else np.zeros((0, T))
    return DemandBid(node, caps, prices, 0.3 * prices, kappa=kappa, voll=voll, name=name)


def cleared(case, available=None):
    lms = loss_models(case, center_states(case, available))
    dam = build_dam(case, available, lms)
    sol = clear(dam)
    return dam, sol, extract_duals(dam, sol), lms


def feeder_cases():
    """Small cases covering the operating regimes the pricing has to handle."""
    cases = {}
    net = chain([0.01, 0.01], [0.02, 0.02])
    cases["uncongested"] = (
        MarketCase(net, [20.0, 35.0], demands=(load(2, 0.8, T=2), load(1, 0.4, T=2)), name="uncongested"),
        None,
    )
    net = chain([0.01, 0.02, 0.01], [0.02, 0.03, 0.02], caps=[float("inf"), 0.45, float("inf")])
    cases["congested"] = (
        MarketCase(
            net,
            [22.0, 30.0],
            demands=(load(2, 0.3, T=2), load(3, 0.6, T=2, bids=(45.0, 40.0))),
            generators=(GeneratorOffer(1, (0.2,), (50.0,), (1.0,), kappa=0.3, name="G1"),),
            name="congested",
        ),
        None,
    )
    net = chain([0.03, 0.04, 0.05, 0.04], [0.03, 0.04, 0.05, 0.04])
    cases["voltage"] = (
        MarketCase(
            net,
            [20.0, 28.0],
            demands=tuple(load(k, 0.5, T=2, bids=(40.0, 30.0), name=f"L{k}") for k in (2, 3, 4)),
            generators=(GeneratorOffer(4, (0.15, 0.1), (45.0, 60.0), (1.0, 1.0), kappa=0.4, name="G4"),),
            epsilon=0.05,
            name="voltage",
        ),
        None,
    )
    lines = [LineParams(1, 0, 0.02, 0.04), LineParams(2, 1, 0.05, 0.05), LineParams(3, 2, 0.06, 0.06), LineParams(4, 1, 0.02, 0.02), LineParams(5, 4, 0.03, 0.02)]
    net = build_topology(lines)
    cases["curtailing"] = (
        MarketCase(
            net,
            [18.0, 24.0],
            demands=(load(2, 0.2, T=2), load(4, 0.3, T=2), load(5, 0.2, T=2)),
            vre=(VreUnit(3, "S", kappa=0.3, zeta=100.0, name="R3"),),
            epsilon=0.05,
            name="curtailing",
        ),
        np.array([[1.6], [0.9]]),
    )
    net = chain([0.02], [0.03])
    cases["two-node"] = (
        MarketCase(
            net,
            [20.0, 40.0],
            demands=(load(1, 0.6, T=2),),
            generators=(GeneratorOffer(1, (0.2, 0.2), (25.0, 35.0), (1.0, 2.0), kappa=0.5, name="G1"),),
            name="two-node",
        ),
        None,
    )
    return cases


@pytest.fixture(scope="session")
def case69():
    return runner.load_case(runner.bundled_path("case69.json"))


@pytest.fixture(scope="session")
def history69(case69):
    return runner.load_samples(case69)


@pytest.fixture(scope="session")
def tutorial():
    return runner.load_case(runner.bundled_path("tutorial2.json"))


ACCEPTANCE: list[str] = []


def record_criterion(label: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
