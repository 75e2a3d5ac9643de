import numpy as np
import pytest

from dlmpdam.errors import InputError, TopologyError
from dlmpdam.network import LineParams, build_topology, impedance_blocks, sensitivity_matrices
from dlmpdam.powerflow import linearized_voltages

from conftest import chain


def test_two_line_chain_incidence():
    net = chain([0.1, 0.2], [0.1, 0.1])
    assert np.array_equal(net.U, [[1, 0], [1, 1]])
    assert np.array_equal(net.D, [[1, 1], [0, 1]])
    assert net.upstream(2) == 1
    assert net.downstream(1) == {2}


def test_branching_tree_matrices():
    lines = [LineParams(1, 0, 1, 1), LineParams(2, 1, 1, 1), LineParams(3, 1, 1, 1), LineParams(4, 3, 1, 1)]
    net = build_topology(lines)
    assert net.n == 4
    assert np.array_equal(net.U, net.D.T)
    # paths to root: 4 -> 3 -> 1
    k = net.row(4)
    assert {net.node_ids[j] for j in np.flatnonzero(net.U[k])} == {1, 3, 4}
    assert net.downstream(1) == {2, 3, 4}
    assert list(net.depth[[net.row(i) for i in (1, 2, 3, 4)]]) == [1, 2, 2, 3]


def test_node_labels_need_not_be_sorted():
    lines = [LineParams(7, 3, 0.1, 0.1), LineParams(3, 0, 0.1, 0.1), LineParams(5, 3, 0.2, 0.1)]
    net = build_topology(lines)
    assert net.node_ids[0] == 3
    assert net.upstream(7) == 3 and net.upstream(5) == 3
    with pytest.raises(InputError):
        net.row(0)
    with pytest.raises(InputError):
        net.row(99)


def test_cycle_rejected():
    with pytest.raises(TopologyError, match="cycle"):
        build_topology([LineParams(1, 0, 1, 1), LineParams(2, 3, 1, 1), LineParams(3, 2, 1, 1)])


def test_two_line_loop_rejected():
    with pytest.raises(TopologyError, match="cycle"):
        build_topology([LineParams(1, 2, 1, 1), LineParams(2, 1, 1, 1)])


def test_root_with_upstream_line_rejected():
    with pytest.raises(TopologyError):
        build_topology([LineParams(1, 0, 1, 1), LineParams(0, 1, 1, 1)])


def test_disconnected_node_rejected():
    with pytest.raises(TopologyError):
        build_topology([LineParams(1, 0, 1, 1), LineParams(3, 2, 1, 1)])


def test_duplicate_line_rejected():
    with pytest.raises(InputError):
        build_topology([LineParams(1, 0, 1, 1), LineParams(1, 0, 2, 1)])


@pytest.mark.parametrize("r, x", [(-0.1, 0.1), (0.0, 0.0)])
def test_bad_impedance_rejected(r, x):
    with pytest.raises(InputError):
        LineParams(1, 0, r, x)


def test_impedance_blocks_diagonal_case():
    Z, Zi, ZV = impedance_blocks([LineParams(1, 0, 1.0, 0.0)])
    assert np.allclose(Z, [[1, 0], [0, -1]])
    assert np.allclose(Zi, Z)
    assert np.allclose(ZV, [[1, 0]])


def test_impedance_blocks_direct_formula():
    Z, _, _ = impedance_blocks([LineParams(1, 0, 3.0, 4.0)])
    assert Z[0, 0] == pytest.approx(3 / 25)
    assert Z[0, 1] == pytest.approx(4 / 25)


def test_impedance_inverse_random_chain():
    rng = np.random.default_rng(5)
    lines = [LineParams(k + 1, k, *rng.uniform(0.01, 1.0, 2)) for k in range(5)]
    Z, Zi, ZV = impedance_blocks(lines)
    assert np.allclose(Z @ Zi, np.eye(10), atol=1e-10)
    assert np.allclose(ZV, Zi[:5])


def test_sensitivity_single_resistive_line():
    net = chain([1.0], [0.0])
    assert np.allclose(net.Mp, [[1.0]])
    assert np.allclose(net.Mq, [[0.0]])


def test_sensitivity_two_line_chain_by_hand():
    r, x = 0.3, 0.4
    net = chain([r, r], [x, x])
    # voltage at node i responds to load at j through the shared path
    assert np.allclose(net.Mp, [[r, r], [r, 2 * r]])
    assert np.allclose(net.Mq, [[x, x], [x, 2 * x]])
    Mp, Mq = sensitivity_matrices(net.U, net.Z_V, net.D)
    assert np.allclose(Mp, net.Mp) and np.allclose(Mq, net.Mq)


def test_sensitivity_equals_shared_path_resistance():
    lines = [LineParams(1, 0, 0.1, 0.2), LineParams(2, 1, 0.3, 0.1), LineParams(3, 1, 0.05, 0.4), LineParams(4, 2, 0.2, 0.2)]
    net = build_topology(lines)
    for i in range(net.n):
        for j in range(net.n):
            shared = net.U[i] * net.U[j]
            assert net.Mp[i, j] == pytest.approx(shared @ net.r)
            assert net.Mq[i, j] == pytest.approx(shared @ net.x)
    assert np.allclose(net.Mp, net.Mp.T)


def test_bundled_feeder_shape(case69):
    net = case69.network
    assert net.n == 68
    assert net.parent[0] == -1
    assert set(net.node_ids) == set(range(1, 69))
    assert np.all(net.D.sum(axis=0) == net.depth)


def test_zero_injection_voltage_is_source_voltage(case69):
    net = case69.network
    z = np.zeros(net.n)
    assert np.allclose(linearized_voltages(net, z, z, z, z), net.v0)
