import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgcert.certify import Verdict
from cgcert.epsnet import product_net
from cgcert.lmo import ProductSumDirection, ProductVertex, alternating_lmo
from cgcert.solver import (ActiveSet, SolverConfig, _Run, bpcg_qc, detect_entanglement,
                           dual_gap, dual_gap_parallelogram, line_search_quadratic, net_oracle,
                           objective, qc_mnp_cycles, qc_mnp_step, read_trace, solve, vanilla_fw,
                           write_trace)
from cgcert.statespace import (DensityMatrix, DomainError, HilbertStructure, PartitionStructure,
                               bell, ghz, maximally_mixed, mix_white_noise, random_density,
                               random_separable)

Q2 = HilbertStructure.qubits(2)
FINE2 = PartitionStructure.finest(Q2)
ZERO = np.array([1, 0j])
ONE = np.array([0, 1 + 0j])
PLUS = np.array([1, 1 + 0j]) / math.sqrt(2)


def vert(a, b=ZERO):
    return ProductVertex.normalized(FINE2, [a, b])


def check_trace(trace):
    f_prev = math.inf
    phi_prev = math.inf
    for rec in trace:
        assert rec["f"] <= f_prev + 1e-12
        assert rec["weight_min"] >= -1e-12
        assert abs(rec["weight_sum"] - 1) <= 1e-10
        assert rec["phi"] > 0 and rec["phi"] <= phi_prev
        f_prev, phi_prev = rec["f"], rec["phi"]


def test_line_search_examples():
    rho = bell().matrix
    x = vert(ZERO, ZERO).matrix()
    assert line_search_quadratic(rho, x - rho, rho) == 0
    # stepping straight at the target reaches it in one full step; the reverse direction clamps
    assert line_search_quadratic(x, rho - x, rho) == pytest.approx(1.0)
    assert line_search_quadratic(x, x - rho, rho) == 0
    assert line_search_quadratic(x, np.zeros((4, 4)), rho) == 0


def golden_section(fun, lo, hi, tol=1e-11):
    inv = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def long_objective(x, d, rho):
    # extended precision keeps the flat quadratic resolvable near its minimum
    parts = [(np.longdouble(m.real), np.longdouble(m.imag)) for m in (x, d, rho)]

    def fun(t):
        t = np.longdouble(t)
        re = parts[0][0] + t * parts[1][0] - parts[2][0]
        im = parts[0][1] + t * parts[1][1] - parts[2][1]
        return np.sum(re * re + im * im) / 2

    return fun


def test_line_search_matches_golden_section():
    rng = np.random.default_rng(0)
    for _ in range(20):
        rho = random_density(Q2, rng).matrix
        x = random_separable(Q2, rng).matrix
        d = random_separable(Q2, rng).matrix - x
        gamma = line_search_quadratic(x, d, rho)
        ref = golden_section(long_objective(x, d, rho), 0.0, 1.0)
        assert gamma == pytest.approx(ref, abs=1e-8)
        assert objective(x + gamma * d, rho) <= objective(x, rho) + 1e-15


def test_dual_gap_examples():
    psi = vert(ZERO, ONE)
    rho = bell().matrix
    assert dual_gap(psi.matrix(), rho, psi) == 0
    assert dual_gap(rho, rho, psi) == 0


def test_parallelogram_identity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        rho = random_density(Q2, rng).matrix
        sigma = random_separable(Q2, rng).matrix
        psi = vert(rng.standard_normal(2) + 1j * rng.standard_normal(2),
                   rng.standard_normal(2) + 1j * rng.standard_normal(2))
        assert dual_gap(sigma, rho, psi) == pytest.approx(dual_gap_parallelogram(sigma, rho, psi),
                                                          abs=1e-12)


def test_gap_nonnegative_with_exact_lmo():
    rho = mix_white_noise(bell(), 0.9)
    res = solve(rho, None, SolverConfig(max_iter=50, stop_on_r=False, f_tol=0))
    grad = res.state.active.iterate - rho.matrix
    psi, _ = alternating_lmo(grad, FINE2)
    assert dual_gap(res.state.active.iterate, rho.matrix, psi) >= -1e-12


@pytest.mark.parametrize("engine", [vanilla_fw, bpcg_qc])
def test_vertex_target_stops_at_once(engine):
    v = vert(ZERO, ZERO)
    rho = DensityMatrix(v.matrix(), Q2)
    res = engine(rho, None, SolverConfig(), sigma0=v)
    assert res.f == 0 and res.iterations == 0 and res.stop_reason == "f_tol"


@pytest.mark.parametrize("engine", ["vanilla", "bpcg"])
def test_maximally_mixed_converges(engine):
    net = product_net(Q2, None, 16, exact_last_block=True, phase_reduce=True)
    res = solve(maximally_mixed(Q2), None,
                SolverConfig(engine=engine, max_iter=1000, stop_on_r=False, f_tol=1e-7),
                lmo=net_oracle(net))
    assert res.f < 1e-6
    assert all(rec["r"] >= 1 for rec in res.trace if rec["f"] > 0 and math.isfinite(rec["r"]))
    check_trace(res.trace)


def test_bell_distance_and_ratio():
    res = solve(bell(), None, SolverConfig(stop_on_r=False, max_iter=500, gap_tol=1e-12))
    # the closest separable state is the white-noise member at p = 2/3
    assert res.f == pytest.approx(1 / 6, abs=1e-9)
    assert any(rec["r"] < 0.2 for rec in res.trace)
    check_trace(res.trace)


def test_ghz3_white_noise_detected():
    cert = detect_entanglement(mix_white_noise(ghz(3), 0.7), 3, SolverConfig(r_threshold=1.0))
    assert cert.verdict is Verdict.HEURISTIC_ENTANGLED
    assert cert.numbers["r"] < 1


def test_cross_engine_bell():
    rho = mix_white_noise(bell(), 0.3)
    fs = {}
    for engine, iters in (("vanilla", 3000), ("bpcg", 2000)):
        res = solve(rho, None, SolverConfig(engine=engine, stop_on_r=False, max_iter=iters,
                                            gap_tol=1e-13))
        fs[engine] = (res.f, res.lmo_calls)
        check_trace(res.trace)
    assert abs(fs["vanilla"][0] - fs["bpcg"][0]) <= 1e-6
    assert fs["bpcg"][1] < fs["vanilla"][1]


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 2**31), dims=st.sampled_from([(2, 2), (2, 3), (2, 2, 2)]))
def test_traces_monotone_and_simplex(seed, dims):
    rng = np.random.default_rng(seed)
    rho = random_density(HilbertStructure(dims), rng)
    for engine in ("vanilla", "bpcg"):
        res = solve(rho, None, SolverConfig(engine=engine, max_iter=150, stop_on_r=False,
                                            log_parallelogram=True))
        check_trace(res.trace)
        for rec in res.trace:
            if "g_trace" in rec:
                assert abs(rec["g_trace"] - rec["g_parallelogram"]) <= 1e-10
        act = res.state.active
        assert np.linalg.norm(act.iterate - (act.vectors.T * act.weights) @ act.vectors.conj()) <= 1e-9


def test_qc_segment_projection():
    rho = bell().matrix
    act = ActiveSet(rho, vert(ZERO, ZERO))
    act.add(vert(ONE, ONE))
    act.weights = np.array([0.9, 0.1])
    act.resync()
    assert qc_mnp_step(act)
    assert np.allclose(act.weights, [0.5, 0.5])
    assert objective(act.iterate, rho) == pytest.approx(0.25)


def test_qc_ratio_test_drops_vertex():
    minus = np.array([1, -1 + 0j]) / math.sqrt(2)
    rho = vert(minus).matrix()
    act = ActiveSet(rho, vert(ZERO))
    act.add(vert(PLUS))
    act.add(vert(ONE))
    act.weights = np.full(3, 1 / 3)
    act.resync()
    f0 = objective(act.iterate, rho)
    assert qc_mnp_step(act)
    # affine minimiser is (1, -1, 1); the ratio test stops where |+> hits zero
    assert len(act) == 2
    assert np.allclose(act.weights, [0.5, 0.5])
    assert objective(act.iterate, rho) <= f0


def test_qc_kkt_inside_hull():
    rng = np.random.default_rng(2)
    theta = [0.3, 1.4, 2.5]
    verts = [vert(np.array([math.cos(t / 2), math.sin(t / 2) + 0j])) for t in theta]
    lam = rng.dirichlet(np.ones(3))
    rho = sum(w * v.matrix() for w, v in zip(lam, verts))
    act = ActiveSet(rho, verts[0])
    for v in verts[1:]:
        act.add(v)
    act.weights = np.full(3, 1 / 3)
    act.resync()
    assert qc_mnp_cycles(act)
    g = act.grad_values()
    assert g.max() - g.min() <= 1e-8
    assert np.allclose(act.weights, lam, atol=1e-8)


def test_qc_needs_two_vertices():
    act = ActiveSet(bell().matrix, vert(ZERO, ZERO))
    assert not qc_mnp_step(act)
    assert len(act) == 1 and act.weights[0] == 1


def test_qc_rejects_other_target():
    act = ActiveSet(bell().matrix, vert(ZERO, ZERO))
    act.add(vert(ONE, ONE))
    with pytest.raises(DomainError):
        qc_mnp_step(act, rho=np.eye(4) / 4)


def test_detect_inconclusive_cases():
    cfg = SolverConfig(max_iter=10_000)
    assert detect_entanglement(maximally_mixed(Q2), None, cfg).verdict is Verdict.INCONCLUSIVE
    cert = detect_entanglement(mix_white_noise(bell(), 0.7), None, cfg)
    assert cert.verdict is Verdict.INCONCLUSIVE


def test_structured_direction_used_for_large_targets():
    rho = mix_white_noise(ghz(6), 0.5)
    run = _Run(rho, None, SolverConfig(), None, None, None)
    d = run.direction()
    assert isinstance(d, ProductSumDirection)
    assert np.allclose(d.matrix(), run.active.iterate - rho.matrix, atol=1e-12)


def test_config_checks():
    with pytest.raises(DomainError):
        SolverConfig(r_threshold=0)
    with pytest.raises(DomainError):
        SolverConfig(max_iter=0)
    with pytest.raises(DomainError):
        SolverConfig(qc_trigger="never")


def test_trace_jsonl_roundtrip(tmp_path):
    res = solve(bell(), None, SolverConfig(max_iter=20))
    path = tmp_path / "trace.jsonl"
    write_trace(res.trace, path)
    back = read_trace(path)
    assert len(back) == len(res.trace)
    for rec in back:
        assert {"iter", "f", "g", "r", "step_type", "active_size", "lmo_calls"} <= set(rec)
