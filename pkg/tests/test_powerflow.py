import numpy as np
import pytest
from scipy.optimize import brentq

from dlmpdam.data.ieee69 import nominal_loads_mw
from dlmpdam.errors import InputError, PowerFlowDivergence
from dlmpdam.powerflow import VOLTAGE_MODES, linearize_losses, linearized_voltages, sweep_power_flow

from conftest import chain

TIGHT = {"tol": 1e-14, "max_iter": 500}


def nominal(net):
    p, q = np.zeros(net.n), np.zeros(net.n)
    for node, (pp, qq) in nominal_loads_mw().items():
        p[net.row(node)], q[net.row(node)] = pp, qq
    return p, q


def one_line_oracle(r, x, v0, p, q):
    """Receiving-end squared voltage of a single loaded line, by root finding."""

    def residual(w):
        lp, lq = r * (p * p + q * q) / w, x * (p * p + q * q) / w
        ps, qs = p + lp, q + lq
        return w - (v0**2 - 2 * (r * ps + x * qs) + (r * r + x * x) * (ps * ps + qs * qs) / v0**2)

    return brentq(residual, 0.5, v0**2, xtol=1e-15)


def test_no_load_is_flat():
    net = chain([0.1, 0.2, 0.1], [0.1, 0.1, 0.3], v0=1.02)
    z = np.zeros(3)
    st = sweep_power_flow(net, z, z)
    assert np.allclose(st.v, 1.02)
    for arr in (st.P, st.Q, st.LP, st.LQ):
        assert np.allclose(arr, 0.0)


def test_single_line_against_root_finding():
    r, x, p, q = 0.01, 0.01, 0.1, 0.05
    net = chain([r], [x])
    st = sweep_power_flow(net, [p], [q], tol=1e-12)
    w = one_line_oracle(r, x, 1.0, p, q)
    assert st.v[0] ** 2 == pytest.approx(w, abs=1e-10)
    assert st.P[0] == pytest.approx(p)
    assert st.LP[0] == pytest.approx(r * (p * p + q * q) / w, abs=1e-12)
    assert st.p0 == pytest.approx(p + st.LP[0])


def test_branch_equations_hold_on_tree():
    net = chain([0.02, 0.03, 0.01], [0.04, 0.02, 0.02])
    p, q = np.array([0.3, 0.2, 0.5]), np.array([0.1, 0.05, 0.2])
    st = sweep_power_flow(net, p, q, tol=1e-12)
    w = st.v**2
    w_up = np.concatenate([[net.v0**2], w[:-1]])
    Ps, Qs = st.P + st.LP, st.Q + st.LQ
    z2 = net.r**2 + net.x**2
    assert np.allclose(w, w_up - 2 * (net.r * Ps + net.x * Qs) + z2 * (Ps**2 + Qs**2) / w_up, atol=1e-10)
    assert np.allclose(st.LP, net.r * (st.P**2 + st.Q**2) / w, atol=1e-12)
    assert np.allclose(st.P, net.D @ (p + st.LP) - st.LP, atol=1e-12)


def test_divergence_carries_residual():
    net = chain([0.5], [0.5])
    with pytest.raises(PowerFlowDivergence) as info:
        sweep_power_flow(net, [5.0], [5.0])
    assert info.value.residual >= 0


def test_bad_injection_shape():
    net = chain([0.1], [0.1])
    with pytest.raises(InputError):
        sweep_power_flow(net, [0.1, 0.2], [0.0, 0.0])


def test_nominal_feeder_low_voltage_region(case69):
    net = case69.network
    st = sweep_power_flow(net, *nominal(net))
    worst = net.node_ids[int(np.argmin(st.v))]
    assert 57 <= worst <= 65
    assert st.v.min() < net.v0 - 0.05


def test_linear_voltage_error_at_nominal_load(case69):
    net = case69.network
    p, q = nominal(net)
    st = sweep_power_flow(net, p, q)
    LP, LQ = linearize_losses(net, st).evaluate(p, q)
    v = linearized_voltages(net, p, q, LP, LQ)
    assert np.max(np.abs(v - st.v)) <= 0.01


def test_reactive_injection_on_resistive_feeder():
    net = chain([0.1, 0.1], [0.0, 0.0])
    z = np.zeros(2)
    assert np.allclose(linearized_voltages(net, z, [0.3, 0.2], z, z), net.v0)


def test_zero_flow_center_has_zero_gradients():
    net = chain([0.1, 0.2], [0.1, 0.1])
    z = np.zeros(2)
    lm = linearize_losses(net, sweep_power_flow(net, z, z))
    for g in (lm.dLP_dp, lm.dLP_dq, lm.dLQ_dp, lm.dLQ_dq):
        assert np.allclose(g, 0.0)


def test_single_line_gradient_by_hand():
    net = chain([0.01], [0.01])
    lm = linearize_losses(net, sweep_power_flow(net, [0.1], [0.0], tol=1e-12))
    assert lm.dLP_dp[0, 0] == pytest.approx(2 * 0.01 * 0.1, rel=2e-2)


@pytest.mark.parametrize("mode", VOLTAGE_MODES)
def test_loss_model_exact_at_center(case69, mode):
    net = case69.network
    p, q = nominal(net)
    st = sweep_power_flow(net, p, q)
    LP, LQ = linearize_losses(net, st, mode).evaluate(p, q)
    assert np.array_equal(LP, st.LP) and np.array_equal(LQ, st.LQ)


def test_loss_gradients_match_finite_differences(case69):
    net = case69.network
    p, q = nominal(net)
    lm = linearize_losses(net, sweep_power_flow(net, p, q, **TIGHT))
    h = 1e-5
    worst = 0.0
    for i in range(0, net.n, 5):
        for kind in ("p", "q"):
            e = np.zeros(net.n)
            e[i] = h
            hi = sweep_power_flow(net, p + e * (kind == "p"), q + e * (kind == "q"), **TIGHT)
            lo = sweep_power_flow(net, p - e * (kind == "p"), q - e * (kind == "q"), **TIGHT)
            pairs = (
                ((hi.LP - lo.LP) / (2 * h), (lm.dLP_dp if kind == "p" else lm.dLP_dq)[:, i]),
                ((hi.LQ - lo.LQ) / (2 * h), (lm.dLQ_dp if kind == "p" else lm.dLQ_dq)[:, i]),
            )
            for fd, g in pairs:
                nz = np.abs(fd) > 1e-8
                assert np.allclose(g[~nz], 0.0, atol=1e-8)
                if nz.any():
                    worst = max(worst, float(np.max(np.abs(g[nz] - fd[nz]) / np.abs(fd[nz]))))
    assert worst <= 1e-4


def test_loss_model_error_is_second_order(case69):
    net = case69.network
    p, q = nominal(net)
    lm = linearize_losses(net, sweep_power_flow(net, p, q, **TIGHT))
    rng = np.random.default_rng(0)
    dp, dq = rng.normal(scale=0.01, size=(2, net.n))
    errs = []
    for s in (1.0, 0.5, 0.25):
        exact = sweep_power_flow(net, p + s * dp, q + s * dq, **TIGHT)
        LP, _ = lm.evaluate(p + s * dp, q + s * dq)
        errs.append(np.max(np.abs(LP - exact.LP)))
    for a, b in zip(errs, errs[1:]):
        assert 3.5 <= a / b <= 4.5


def test_frozen_voltage_modes_differ_from_coupled():
    net = chain([0.05, 0.05], [0.05, 0.05])
    st = sweep_power_flow(net, [0.5, 0.5], [0.2, 0.2])
    coupled = linearize_losses(net, st, "coupled").dLP_dp
    # with frozen voltages a line only sees injections it carries
    for mode in ("center", "unity"):
        other = linearize_losses(net, st, mode).dLP_dp
        assert np.all(other[net.D == 0] == 0)
    assert coupled[1, 0] > 0
    with pytest.raises(Exception):
        linearize_losses(net, st, "bogus")
