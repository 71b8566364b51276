import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgcert.lmo import (LmoConfig, ProductSumDirection, ProductVertex, alternating_lmo,
                        contract_direction, kseparable_lmo, kseparable_partitions, net_lmo,
                        random_product_vectors, set_partitions)
from cgcert.epsnet import product_net
from cgcert.statespace import (DomainError, HilbertStructure, PartitionStructure,
                               StructureError, bell, ghz)

Q2 = HilbertStructure.qubits(2)
FINE2 = PartitionStructure.finest(Q2)


def rand_herm(d, rng):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return a + a.conj().T


def haar(d, rng):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def qubit_grid(m):
    th, ph = np.meshgrid(np.linspace(0, np.pi, m), np.linspace(0, 2 * np.pi, 2 * m,
                                                               endpoint=False))
    th, ph = th.ravel(), ph.ravel()
    return np.stack([np.cos(th / 2), np.exp(1j * ph) * np.sin(th / 2)], axis=1)


def grid_min(direction, m=60):
    """Grid over the first qubit, exact minimum over the second."""
    a = qubit_grid(m)
    t = direction.reshape(2, 2, 2, 2)
    ops = np.einsum("ni,ijkl,nk->njl", a.conj(), t, a)
    return float(np.linalg.eigvalsh(ops)[:, 0].min())


def test_vertex_invariants():
    rng = np.random.default_rng(0)
    v = ProductVertex.normalized(FINE2, [haar(2, rng), haar(2, rng)])
    m = v.matrix()
    assert np.trace(m).real == pytest.approx(1)
    assert np.linalg.matrix_rank(m, tol=1e-10) == 1
    with pytest.raises(DomainError):
        ProductVertex(FINE2, (np.array([1, 1]), np.array([1, 0])))
    with pytest.raises(StructureError):
        ProductVertex(FINE2, (np.array([1, 0]),))


def test_vertex_party_order():
    part = PartitionStructure(HilbertStructure.qubits(3), ((0, 2), (1,)))
    a = np.array([0, 0, 0, 1.0])  # parties 0 and 2 in |11>
    b = np.array([1.0, 0])
    v = ProductVertex(part, (a, b)).vector
    assert np.flatnonzero(v).tolist() == [0b101]


def test_contract_tensor_factor():
    rng = np.random.default_rng(1)
    a, b = rand_herm(2, rng), rand_herm(3, rng)
    phi = haar(2, rng)
    part = PartitionStructure.finest(HilbertStructure((2, 3)))
    vert = ProductVertex(part, (phi, haar(3, rng)))
    m = contract_direction(np.kron(a, b), vert, 1)
    assert np.allclose(m, np.vdot(phi, a @ phi).real * b)
    assert np.allclose(contract_direction(np.eye(6), vert, 0), np.eye(2))
    with pytest.raises(StructureError):
        contract_direction(np.eye(6), vert, 2)


def test_contract_matches_index_loop():
    rng = np.random.default_rng(2)
    d = rand_herm(4, rng)
    phi, chi = haar(2, rng), haar(2, rng)
    vert = ProductVertex(FINE2, (phi, chi))
    m = contract_direction(d, vert, 1)
    e = np.eye(2)
    brute = np.array([[np.vdot(np.kron(phi, e[j]), d @ np.kron(phi, e[k])) for k in range(2)]
                      for j in range(2)])
    assert np.allclose(m, brute, atol=1e-13)
    m0 = contract_direction(d, vert, 0)
    assert np.vdot(phi, m0 @ phi).real == pytest.approx(vert.expectation(d))


def test_alternating_bell():
    _, val = alternating_lmo(-bell().matrix, FINE2)
    assert val == pytest.approx(-0.5, abs=1e-10)
    assert grid_min(-bell().matrix) == pytest.approx(-0.5, abs=1e-3)


def test_alternating_identity():
    vert, val = alternating_lmo(np.eye(4), FINE2)
    assert val == pytest.approx(1.0)
    assert vert.expectation(np.eye(4)) == pytest.approx(1.0)


def test_alternating_ghz3_full():
    part = PartitionStructure.finest(HilbertStructure.qubits(3))
    _, val = alternating_lmo(-ghz(3).matrix, part)
    assert val == pytest.approx(-0.5, abs=1e-10)


def test_alternating_matches_grid():
    rng = np.random.default_rng(3)
    cfg = LmoConfig(restarts=20)
    for _ in range(50):
        d = rand_herm(4, rng)
        d /= np.linalg.norm(d, 2)
        _, val = alternating_lmo(d, FINE2, cfg, rng)
        ref = grid_min(d, 150)
        assert val <= ref + 1e-9
        assert abs(val - ref) <= 1e-3


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), dims=st.sampled_from([(2, 2), (2, 3), (2, 2, 2), (3, 2, 2)]))
def test_alternating_monotone(seed, dims):
    rng = np.random.default_rng(seed)
    structure = HilbertStructure(dims)
    part = PartitionStructure.finest(structure)
    hist = []
    vert, val = alternating_lmo(rand_herm(structure.total_dim, rng), part, LmoConfig(restarts=4),
                                rng, history=hist)
    seq = np.concatenate(hist, axis=0)
    assert np.all(np.diff(seq, axis=0) <= 1e-10)
    assert val == pytest.approx(seq[-1].min(), abs=1e-8)


def test_partition_counts():
    assert len(list(set_partitions(3, 2))) == 3
    assert len(list(set_partitions(4, 3))) == 6
    assert len(list(set_partitions(4, 2))) == 2 ** 3 - 1
    with pytest.raises(DomainError):
        kseparable_partitions(HilbertStructure.qubits(3), 4)
    parts = kseparable_partitions(HilbertStructure.qubits(3), 2)
    assert {p.blocks for p in parts} == {((0,), (1, 2)), ((0, 1), (2,)), ((0, 2), (1,))}


def test_ghz3_biseparable():
    structure = HilbertStructure.qubits(3)
    for part in kseparable_partitions(structure, 2):
        _, val = alternating_lmo(-ghz(3).matrix, part)
        assert val == pytest.approx(-0.5, abs=1e-10)
    _, best = kseparable_lmo(-ghz(3).matrix, structure, 2)
    assert best == pytest.approx(-0.5, abs=1e-10)


def test_kseparable_full_equals_finest():
    rng = np.random.default_rng(4)
    structure = HilbertStructure.qubits(3)
    d = rand_herm(8, rng)
    cfg = LmoConfig(restarts=15)
    _, a = kseparable_lmo(d, structure, 3, cfg, np.random.default_rng(9))
    _, b = alternating_lmo(d, PartitionStructure.finest(structure), cfg, np.random.default_rng(9))
    assert a == pytest.approx(b, abs=1e-12)


def test_structured_direction_agrees_with_dense():
    rng = np.random.default_rng(5)
    structure = HilbertStructure((2, 3, 2))
    part = PartitionStructure.finest(structure)
    for _ in range(5):
        atoms = tuple(random_product_vectors(part, 3, rng))
        vecs = np.array([haar(12, rng) for _ in range(2)])
        direction = ProductSumDirection(structure, atoms, rng.uniform(-1, 1, 3), vecs,
                                        rng.uniform(-1, 1, 2), alpha=0.3)
        cfg = LmoConfig(restarts=6)
        va, a = alternating_lmo(direction, part, cfg, np.random.default_rng(1))
        vb, b = alternating_lmo(direction.matrix(), part, cfg, np.random.default_rng(1))
        assert a == pytest.approx(b, abs=1e-9)
        assert va.expectation(direction.matrix()) == pytest.approx(a, abs=1e-9)


def test_net_lmo_identity_and_single_vertex():
    net = product_net(Q2, None, 1)
    _, beta = net_lmo(np.eye(4), net)
    assert beta == pytest.approx(1.0)
    single = SimpleNamespace(partition=FINE2,
                             local_vectors=(np.array([[1, 0j]]), np.array([[1, 0j]])))
    vert, beta = net_lmo(-bell().matrix, single)
    assert beta == pytest.approx(-0.5)
    assert np.allclose(vert.vector, [1, 0, 0, 0])


def test_net_lmo_covering():
    rng = np.random.default_rng(6)
    net = product_net(Q2, None, 4)
    for _ in range(10):
        d = rand_herm(4, rng)
        _, alt = alternating_lmo(d, FINE2)
        _, beta = net_lmo(d, net)
        assert beta >= alt - 1e-9
        assert beta <= alt + 2 * net.epsilon * np.linalg.norm(d, 2)


def test_net_lmo_exact_last_block_matches_alternating():
    rng = np.random.default_rng(7)
    net = product_net(Q2, None, 12, exact_last_block=True, phase_reduce=True)
    for _ in range(5):
        d = rand_herm(4, rng)
        _, alt = alternating_lmo(d, FINE2)
        _, beta = net_lmo(d, net)
        assert alt - 1e-9 <= beta <= alt + (1 - net.local_nets[0].eta ** 2) * 2 * np.linalg.norm(d, 2)


def test_net_lmo_deterministic_and_brute():
    rng = np.random.default_rng(8)
    net = product_net(Q2, None, 2)
    d = rand_herm(4, rng)
    v1, b1 = net_lmo(d, net)
    v2, b2 = net_lmo(d, net)
    assert b1 == b2 and np.array_equal(v1.vector, v2.vector)
    rows = net.vertex_matrix()
    vals = np.einsum("ni,ij,nj->n", rows.conj(), d, rows).real
    assert b1 == pytest.approx(vals.min(), abs=1e-12)
    assert np.allclose(v1.vector, rows[int(np.argmin(vals))])


def test_lmo_config_checks():
    with pytest.raises(DomainError):
        LmoConfig(restarts=0)
    with pytest.raises(DomainError):
        LmoConfig(sweep_tol=0)
    assert math.isclose(LmoConfig().sweep_tol, 1e-10)
