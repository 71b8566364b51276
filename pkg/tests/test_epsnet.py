import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgcert.epsnet import (EpsNet, NetCache, NetSizeError, SphereNet, _simplex_volume,
                           certify_eta, closed_form_eta, complex_to_real, cross_polytope_count,
                           cross_polytope_net, edgewise_subdivision, exact_eta, facet_union_net,
                           load_sphere_net, predicted_product_size, product_net, real_to_complex,
                           save_sphere_net, subdivision_eta)
from cgcert.statespace import DomainError, HilbertStructure, PartitionStructure, StructureError


def diameter(piece):
    return max(np.linalg.norm(a - b) for a, b in itertools.combinations(piece, 2))


def regular_simplex(m):
    # standard basis vectors of R^{m+1}: edge sqrt(2)
    return np.eye(m + 1)


def test_triangle_halves():
    tri = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]])
    pieces = edgewise_subdivision(tri, 2)
    assert len(pieces) == 4
    for p in pieces:
        assert diameter(p) == pytest.approx(0.5)
        assert _simplex_volume(p) == pytest.approx(_simplex_volume(tri) / 4)


def test_n1_returns_input():
    simplex = np.random.default_rng(0).standard_normal((4, 3))
    (piece,) = edgewise_subdivision(simplex, 1)
    assert np.array_equal(piece, simplex)


def test_regular_tetrahedron_n3():
    pieces = edgewise_subdivision(regular_simplex(3), 3)
    assert len(pieces) == 27
    vols = [_simplex_volume(p) for p in pieces]
    assert max(vols) - min(vols) <= 1e-12
    assert sum(vols) == pytest.approx(_simplex_volume(regular_simplex(3)), abs=1e-12)
    assert max(diameter(p) for p in pieces) <= math.sqrt(2) * math.sqrt(2) / 3 + 1e-12


@settings(max_examples=20, deadline=None)
@given(m=st.integers(2, 4), n=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_subdivision_partitions_simplex(m, n, seed):
    rng = np.random.default_rng(seed)
    simplex = rng.standard_normal((m + 1, m))
    pieces = edgewise_subdivision(simplex, n)
    assert len(pieces) == n ** m
    vols = np.array([_simplex_volume(p) for p in pieces])
    total = _simplex_volume(simplex)
    assert np.allclose(vols, total / n ** m, rtol=1e-9, atol=1e-14)
    # random interior points land in exactly one piece
    for _ in range(5):
        w = rng.dirichlet(np.ones(m + 1))
        x = w @ simplex
        hits = 0
        for p in pieces:
            bary = np.linalg.solve(np.vstack([p.T, np.ones(m + 1)]), np.append(x, 1))
            hits += bool(np.all(bary >= -1e-9))
        assert hits >= 1


def test_degenerate_simplex():
    with pytest.raises(DomainError):
        edgewise_subdivision([[0, 0], [1, 1], [2, 2]], 2)
    with pytest.raises(DomainError):
        edgewise_subdivision(np.eye(3), 0)


def test_cross_polytope_d3_n1():
    net = cross_polytope_net(3, 1)
    assert len(net) == 6
    assert net.eta == 1 / math.sqrt(3)
    assert exact_eta(net) == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    assert certify_eta(net, 20_000) >= 1 / math.sqrt(3) - 1e-9


def test_octagon():
    net = cross_polytope_net(2, 2)
    assert len(net) == 8
    assert net.eta == pytest.approx(2 / math.sqrt(6))
    assert exact_eta(net) >= 2 / math.sqrt(6)
    assert exact_eta(net) == pytest.approx(math.cos(math.pi / 8))


def test_counts():
    assert cross_polytope_count(4, 2) <= 2 ** 4 * math.comb(6, 4)
    for d, n in [(2, 3), (3, 2), (4, 3), (6, 2)]:
        net = cross_polytope_net(d, n)
        assert len(net) == cross_polytope_count(d, n)
        assert len(np.unique(np.round(net.vertices, 12), axis=0)) == len(net)


@pytest.mark.parametrize("d,n", [(2, 2), (3, 2), (3, 3), (4, 2)])
def test_lattice_matches_facet_union(d, n):
    fast = cross_polytope_net(d, n).vertices
    slow = facet_union_net(d, n)
    assert len(fast) == len(slow)
    a = {tuple(np.round(v, 9) + 0.0) for v in fast}
    b = {tuple(np.round(v, 9) + 0.0) for v in slow}
    assert a == b


@pytest.mark.parametrize("d,n", [(3, 1), (3, 2), (3, 3), (4, 1), (4, 2), (4, 3)])
def test_closed_form_is_certified(d, n):
    net = cross_polytope_net(d, n)
    assert exact_eta(net) >= net.eta - 1e-12
    assert net.eta >= n / math.sqrt(n * n + 2 * (d - 1)) - 1e-15


def test_subdivision_eta_when_available():
    eta = subdivision_eta(3, 2)
    if eta is not None:
        assert eta <= exact_eta(cross_polytope_net(3, 2)) + 1e-12


def test_fine_circle_net():
    assert certify_eta(cross_polytope_net(2, 64), 20_000) >= 0.999


def test_single_vertex_can_be_negative():
    net = SphereNet(3, np.array([[1.0, 0, 0]]), 1e-3, 1)
    assert certify_eta(net, 5000) < 0


def test_phase_reduced_net():
    full = cross_polytope_net(4, 3)
    red = cross_polytope_net(4, 3, phase_reduce=True)
    assert len(red) * 4 == len(full)
    rng = np.random.default_rng(1)
    z = rng.standard_normal((2000, 2)) + 1j * rng.standard_normal((2000, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    best = np.abs(z @ red.complex_vectors().conj().T).max(axis=1)
    assert best.min() >= red.eta
    assert certify_eta(red, 20_000) >= red.eta
    with pytest.raises(DomainError):
        cross_polytope_net(3, 2, phase_reduce=True)


def test_complex_roundtrip():
    z = np.array([[1 + 2j, -3j]])
    assert np.array_equal(real_to_complex(complex_to_real(z)), z)


def test_two_qubit_product_net():
    net = product_net(HilbertStructure.qubits(2), None, 1)
    assert [len(s) for s in net.local_nets] == [8, 8]
    assert net.size == 64
    assert len(net.product_vertices) == 64
    assert net.eta == pytest.approx(0.25)
    assert net.local_etas == (0.5, 0.5)
    assert net.eta >= math.sqrt(1 - net.epsilon ** 2 / 2) - 1e-15
    rows = net.vertex_matrix()
    assert np.allclose(np.linalg.norm(rows, axis=1), 1)


def test_qutrit_product_net():
    net = product_net(HilbertStructure((3, 3)), None, 2)
    assert net.local_nets[0].eta == pytest.approx(2 / math.sqrt(14))
    assert net.eta == pytest.approx(4 / 14)


def test_single_block_net():
    structure = HilbertStructure((2, 2))
    net = product_net(structure, PartitionStructure.single(structure), 1)
    assert len(net.local_nets) == 1
    assert net.local_nets[0].dim_real == 8
    assert net.size == 16


def test_exact_last_block():
    net = product_net(HilbertStructure.qubits(3), None, 2, exact_last_block=True)
    assert len(net.local_nets) == 2
    assert net.eta == pytest.approx(net.local_nets[0].eta * net.local_nets[1].eta)
    with pytest.raises(StructureError):
        net.vertex_matrix()


def test_cap_refusal():
    structure = HilbertStructure.qubits(5)
    part = PartitionStructure.finest(structure)
    predicted = predicted_product_size(part, 4)
    assert predicted == cross_polytope_count(4, 4) ** 5
    with pytest.raises(NetSizeError) as err:
        product_net(structure, None, 4)
    assert err.value.predicted == predicted


def test_epsnet_shape_checks():
    structure = HilbertStructure.qubits(2)
    part = PartitionStructure.finest(structure)
    with pytest.raises(StructureError):
        EpsNet(part, (cross_polytope_net(4, 1),))
    with pytest.raises(StructureError):
        EpsNet(part, (cross_polytope_net(6, 1), cross_polytope_net(4, 1)))


def test_cache_roundtrip(tmp_path):
    cache = NetCache(tmp_path)
    a = cache.get(4, 2)
    assert cache.path(4, 2).exists()
    b = cache.get(4, 2)
    assert np.array_equal(a.vertices, b.vertices) and a.eta == b.eta
    red = cache.get(4, 2, phase_reduce=True)
    assert red.phase_reduced and cache.path(4, 2, True).name.endswith("_phase.json")
    save_sphere_net(a, tmp_path / "x.json")
    assert load_sphere_net(tmp_path / "x.json").subdiv_n == 2


@pytest.mark.parametrize("d,n", [(3, 1), (4, 2), (6, 3)])
def test_closed_form_formula(d, n):
    expect = 1 / math.sqrt(d) if n == 1 else n / math.sqrt(n * n + 2 * (d - 1))
    assert closed_form_eta(d, n) == expect


@pytest.mark.parametrize("d,n", [(3, 3), (4, 2), (2, 4)])
def test_projection_shift_bound(d, n):
    facet = np.eye(d)
    pts = np.concatenate(edgewise_subdivision(facet, n))
    shift = 1 - np.linalg.norm(pts, axis=1)
    assert shift.max() <= 1 - 1 / math.sqrt(d) + 1e-12
    if n % d == 0:
        # the facet centre is a grid point, so the bound is attained and exceeds 1 - eta
        assert shift.max() == pytest.approx(1 - 1 / math.sqrt(d))
        assert shift.max() > 1 - closed_form_eta(d, n)
