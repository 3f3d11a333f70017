import numpy as np
import pytest

from jlssabs import case_study as cs
from jlssabs.errors import DimensionMismatch, InvalidNetwork
from jlssabs.model import (EXT, JlssSystem, Network, SubsystemSpec, coupling_matrix,
                           interconnect, jump_event_count, validate_network)


def test_system_dimensions_and_empty_blocks():
    s = cs.triple_integrator(0.5)
    assert (s.n, s.m, s.p, s.q) == (3, 0, 1, 1)
    assert s.B.shape == (3, 0)
    assert len(s.diffusions) == 1 and s.rates == [4.2]


def test_scalar_diffusion_broadcasts():
    s = JlssSystem(A=[[-1.0]], B=[[1.0]], C=[[1.0]], D=np.zeros((1, 0)), E=0.3)
    np.testing.assert_allclose(s.E[0], [[0.3]])


def test_bad_shapes_and_rates():
    with pytest.raises(DimensionMismatch):
        JlssSystem(A=np.ones((2, 3)), B=[[1], [0]], C=[[1, 0]], D=[[0], [0]], E=0)
    with pytest.raises(ValueError):
        JlssSystem(A=[[0.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], E=0, jumps=((-1.0, [[1.0]]),))


def test_matrices_are_read_only():
    s = cs.double_integrator(1.0)
    with pytest.raises(ValueError):
        s.A[0, 0] = 3.0


def test_benchmark_network_is_valid():
    net = cs.build_network(0.5)
    assert validate_network(net) == []
    assert jump_event_count(net) == 4


def test_validation_catches_width_and_unknown_peer():
    s = cs.double_integrator(0.5)
    bad = Network((SubsystemSpec("a", s, inputs=(("b", 2),)),))
    problems = validate_network(bad)
    assert problems
    with pytest.raises(InvalidNetwork):
        coupling_matrix(bad)


def test_interconnect_closes_the_ring():
    d = 0.5
    net = cs.build_network(d)
    big = interconnect(net)
    assert big.n == 10 and big.m == 2 and big.q == 2 and big.p == 0
    # subsystem 1 (rows 0:2) receives y_3 = x_3[0] (column 4) through D = [0; d]
    assert big.A[1, 4] == pytest.approx(d)
    # subsystem 3 (rows 4:7) receives y_2 = x_2[0] (column 2) through [0; -d; 5d]
    np.testing.assert_allclose(big.A[4:7, 2], [0.0, -d, 5 * d])
    assert len(big.diffusions) == 4 and len(big.jumps) == 4


def test_coupling_matrix_matches_interconnection():
    net = cs.build_network(0.3)
    L = coupling_matrix(net)
    D = np.zeros((10, L.shape[0]))
    r = 0
    for sl, s in zip(net.state_slices(), net.subsystems):
        D[sl, r:r + s.sys.p] = s.sys.D
        r += s.sys.p
    blockA = interconnect(net).A - D @ L
    for sl, s in zip(net.state_slices(), net.subsystems):
        np.testing.assert_allclose(blockA[sl, sl], s.sys.A)


def test_output_blocks():
    net = cs.build_network(0.5)
    assert net["3"].output_rows(EXT) == [0]
    assert net["1"].output_rows(EXT) is None
    assert net["1"].input_slice("3") == slice(0, 1)
