"""Conditional-gradient solvers for the distance to the k-separable set.

Both engines minimise ``f(sigma) = 1/2 ||rho - sigma||_F^2`` over convex
combinations of product vertices; the gradient is ``sigma - rho``.  The
vanilla engine takes a Frank-Wolfe step after every oracle call.  The
blended pairwise engine prefers cheap steps inside the active set and calls
the oracle only when the local gap falls below a lazily halved estimate; it
re-optimises all active weights at once (quadratic correction) when the
oracle returns a vertex that is already active.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .certify import CertResult, Verdict
from .lmo import (LmoConfig, ProductSumDirection, ProductVertex, alternating_lmo,
                  kseparable_partitions)
from .statespace import DensityMatrix, DomainError, HilbertStructure, PartitionStructure

log = logging.getLogger(__name__)

SAME_VERTEX_FIDELITY = 1 - 1e-8
QC_RIDGE = 1e-12
WEIGHT_FLOOR = 1e-15
# dimension from which gradients are handed to the oracle in factored form
STRUCTURED_MIN_DIM = 64

Oracle = Callable[[np.ndarray, Sequence[ProductVertex]], tuple[ProductVertex, float]]


class Engine(str, enum.Enum):
    VANILLA = "vanilla"
    BPCG = "bpcg"


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 10_000
    r_threshold: float = 0.2
    f_tol: float = 1e-14
    gap_tol: float = 1e-15
    stop_on_r: bool = True
    lmo_cfg: LmoConfig = LmoConfig()
    engine: Engine = Engine.BPCG
    resync_period: int = 1000
    warm_starts: int = 3
    time_limit: float | None = None
    log_parallelogram: bool = False
    qc_trigger: str = "fw"

    def __post_init__(self):
        if self.qc_trigger not in ("active", "fw"):
            raise DomainError(f"unknown qc_trigger {self.qc_trigger!r}")
        if not 0 < self.r_threshold <= 1:
            raise DomainError("r_threshold must lie in (0, 1]")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        object.__setattr__(self, "engine", Engine(self.engine))


class ActiveSet:
    """Product vertices with simplex weights and their cached mixture.

    ``gram[u, v] = |<psi_u|psi_v>|^2`` and ``overlaps[u] = <psi_u|rho|psi_u>``
    make inner products with the gradient available without touching the
    dense iterate.
    """

    def __init__(self, rho: np.ndarray, vertex: ProductVertex):
        self.rho = rho
        self.vertices: list[ProductVertex] = [vertex]
        self.weights = np.array([1.0])
        self._vecs = np.array([vertex.vector])
        self.gram = np.ones((1, 1))
        self.overlaps = np.array([vertex.expectation(rho)])
        self.iterate = vertex.matrix()
        self.updates = 0

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def vectors(self) -> np.ndarray:
        return self._vecs

    def find(self, vertex: ProductVertex) -> int | None:
        fid = np.abs(self._vecs.conj() @ vertex.vector) ** 2
        u = int(np.argmax(fid))
        return u if fid[u] >= SAME_VERTEX_FIDELITY else None

    def add(self, vertex: ProductVertex) -> int:
        v = vertex.vector
        row = np.abs(self._vecs.conj() @ v) ** 2
        m = len(self.vertices)
        gram = np.empty((m + 1, m + 1))
        gram[:m, :m] = self.gram
        gram[m, :m] = gram[:m, m] = row
        gram[m, m] = 1.0
        self.gram = gram
        self.vertices.append(vertex)
        self.weights = np.append(self.weights, 0.0)
        self._vecs = np.vstack([self._vecs, v])
        self.overlaps = np.append(self.overlaps, vertex.expectation(self.rho))
        return m

    def drop(self, indices: Iterable[int]) -> None:
        idx = sorted(set(indices))
        if not idx:
            return
        keep = np.setdiff1d(np.arange(len(self.vertices)), idx)
        self.vertices = [self.vertices[u] for u in keep]
        self.weights = self.weights[keep]
        self._vecs = self._vecs[keep]
        self.gram = self.gram[np.ix_(keep, keep)]
        self.overlaps = self.overlaps[keep]

    def drop_zeros(self) -> None:
        self.drop(np.flatnonzero(self.weights <= WEIGHT_FLOOR))
        self.weights /= self.weights.sum()

    def grad_values(self) -> np.ndarray:
        """``<psi_u|sigma - rho|psi_u>`` for every active vertex."""
        return self.gram @ self.weights - self.overlaps

    def rank_one(self, u: int, coef: float) -> None:
        v = self._vecs[u]
        self.iterate += coef * np.outer(v, v.conj())

    def resync(self) -> None:
        vecs = self._vecs
        self.iterate = (vecs.T * self.weights) @ vecs.conj()
        self.gram = np.abs(vecs.conj() @ vecs.T) ** 2
        self.updates = 0

    def touch(self, period: int) -> None:
        self.updates += 1
        if self.updates >= period:
            self.resync()

    def sigma(self) -> DensityMatrix:
        return DensityMatrix(0.5 * (self.iterate + self.iterate.conj().T),
                             self.vertices[0].partition.structure, check=False)

    def decomposition(self) -> list[tuple[float, ProductVertex]]:
        return list(zip(self.weights.tolist(), self.vertices))


@dataclass
class SolverState:
    active: ActiveSet
    phi: float
    qc_flag: bool
    iter: int
    f_val: float
    g_val: float = math.inf
    r_val: float = math.inf


@dataclass
class SolverResult:
    state: SolverState
    trace: list[dict]
    stop_reason: str
    lmo_calls: int
    wall_time: float
    rho: np.ndarray = field(repr=False)
    fw_vertex: ProductVertex | None = field(default=None, repr=False)

    @property
    def f(self) -> float:
        return self.state.f_val

    @property
    def g(self) -> float:
        return self.state.g_val

    @property
    def r(self) -> float:
        return self.state.r_val

    @property
    def iterations(self) -> int:
        return self.state.iter

    @property
    def sigma(self) -> DensityMatrix:
        return self.state.active.sigma()

    @property
    def distance(self) -> float:
        """Frobenius distance between the target and the final iterate."""
        return float(np.linalg.norm(self.rho - self.state.active.iterate))


# --------------------------------------------------------------------------
# scalar pieces

def objective(sigma: np.ndarray, rho: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(sigma) - np.asarray(rho)) ** 2))


def line_search_quadratic(x, d, rho, gamma_max: float = 1.0) -> float:
    """Exact minimiser of ``f(x + gamma d)`` over ``[0, gamma_max]``."""
    x, d, rho = (np.asarray(getattr(a, "matrix", a)) for a in (x, d, rho))
    dd = float(np.real(np.vdot(d, d)))
    if dd <= 0:
        return 0.0
    gamma = float(np.real(np.vdot(rho - x, d))) / dd
    return min(max(gamma, 0.0), gamma_max)


def dual_gap(sigma, rho, psi) -> float:
    """Frank-Wolfe gap ``tr[(sigma - rho)(sigma - psi)]``."""
    s = np.asarray(getattr(sigma, "matrix", sigma))
    r = np.asarray(getattr(rho, "matrix", rho))
    p = psi.matrix() if isinstance(psi, ProductVertex) else np.asarray(getattr(psi, "matrix", psi))
    return float(np.real(np.vdot(s - r, s - p)))


def dual_gap_parallelogram(sigma, rho, psi) -> float:
    s = np.asarray(getattr(sigma, "matrix", sigma))
    r = np.asarray(getattr(rho, "matrix", rho))
    p = psi.matrix() if isinstance(psi, ProductVertex) else np.asarray(getattr(psi, "matrix", psi))
    sq = lambda a: float(np.sum(np.abs(a) ** 2))
    return 0.5 * sq(r - s) + 0.5 * sq(s - p) - 0.5 * sq(r - p)


# --------------------------------------------------------------------------
# quadratic correction

def qc_mnp_step(active: ActiveSet, rho=None) -> bool:
    """Move the weights toward the affine minimiser of ``f`` on the active hull.

    The minimiser solves ``sum_u lam_u (K_uv - K_uw) = c_v - c_w`` for all
    ``v != w`` (``w`` the first vertex) with ``sum_u lam_u = 1``.  If it has a
    negative coordinate the step stops at the first weight that reaches zero.
    Returns ``False`` (and leaves ``active`` untouched) when the system is
    not solvable to finite values or the objective would increase.
    """
    m = len(active)
    if m < 2:
        return False
    if rho is not None:
        r = np.asarray(getattr(rho, "matrix", rho))
        if r is not active.rho and not np.array_equal(r, active.rho):
            raise DomainError("active set was built for a different target")
    k = active.gram + QC_RIDGE * np.eye(m)
    c = active.overlaps
    a = np.empty((m, m))
    b = np.empty(m)
    a[:-1] = k[1:] - k[0]
    b[:-1] = c[1:] - c[0]
    a[-1] = 1.0
    b[-1] = 1.0
    try:
        target = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return False
    if not np.all(np.isfinite(target)):
        return False
    lam = active.weights
    step = target - lam
    shrink = step < 0
    t = 1.0
    if np.any(target < 0):
        ratios = lam[shrink] / -step[shrink]
        t = min(1.0, float(ratios.min()))
    new = lam + t * step
    new[new < WEIGHT_FLOOR] = 0.0
    if np.any(target < 0):
        new[np.flatnonzero(shrink)[np.argmin(lam[shrink] / -step[shrink])]] = 0.0
    new = np.maximum(new, 0.0)
    new /= new.sum()

    f_old = 0.5 * lam @ active.gram @ lam - lam @ c
    f_new = 0.5 * new @ active.gram @ new - new @ c
    if not f_new <= f_old + 1e-15:
        return False
    active.weights = new
    active.drop_zeros()
    active.resync()
    return True


def qc_mnp_cycles(active: ActiveSet, max_cycles: int | None = None) -> bool:
    """Repeat :func:`qc_mnp_step` while the ratio test keeps removing atoms.

    Stops once the affine minimiser is feasible, so the weights are then
    optimal on the remaining atoms.  Returns whether any step was taken.
    """
    moved = False
    for _ in range(max_cycles or len(active)):
        m = len(active)
        if not qc_mnp_step(active):
            break
        moved = True
        if len(active) == m:
            break
    return moved


# --------------------------------------------------------------------------
# engines

def _default_oracle(rho: DensityMatrix, partitions: Sequence[PartitionStructure],
                    cfg: SolverConfig) -> Oracle:
    rng = np.random.default_rng(cfg.lmo_cfg.rng_seed)

    def oracle(direction, init):
        best = None
        for part in partitions:
            vertex, value = alternating_lmo(direction, part, cfg.lmo_cfg, rng, init)
            if best is None or value < best[1]:
                best = (vertex, value)
        return best

    return oracle


def _low_rank_factors(rho: np.ndarray):
    """``(vectors, values, alpha)`` with ``rho = alpha I + sum_l values_l |v_l><v_l|``.

    ``alpha`` is the most repeated eigenvalue.  Returns None when the
    remainder is not of low rank or the matrix is small.
    """
    d = rho.shape[0]
    if d < STRUCTURED_MIN_DIM:
        return None
    w, u = np.linalg.eigh(rho)
    keys = np.round(w / 1e-10).astype(np.int64)
    uniq, counts = np.unique(keys, return_counts=True)
    alpha = float(np.median(w[keys == uniq[np.argmax(counts)]]))
    keep = np.abs(w - alpha) > 1e-10
    if keep.sum() > d // 8:
        return None
    return u[:, keep].T.copy(), w[keep] - alpha, alpha


def net_oracle(nets) -> Oracle:
    """Oracle that scans product nets exhaustively (see :func:`net_lmo`)."""
    from .lmo import net_lmo

    nets = nets if isinstance(nets, (list, tuple)) else [nets]

    def oracle(direction, init):
        best = None
        for net in nets:
            vertex, value = net_lmo(direction, net)
            if best is None or value < best[1]:
                best = (vertex, value)
        return best

    return oracle


def resolve_partitions(structure: HilbertStructure, partition) -> list[PartitionStructure]:
    """Accept a partition, a list of partitions, or a separability level ``k``."""
    if partition is None:
        return [PartitionStructure.finest(structure)]
    if isinstance(partition, PartitionStructure):
        return [partition]
    if isinstance(partition, (int, np.integer)):
        if partition == structure.n_parties:
            return [PartitionStructure.finest(structure)]
        return kseparable_partitions(structure, int(partition))
    return list(partition)


class _Run:
    """Shared bookkeeping of one solver run."""

    def __init__(self, rho: DensityMatrix, partition, cfg: SolverConfig,
                 lmo: Oracle | None, sigma0: ProductVertex | None, callback):
        self.cfg = cfg
        self.rho_dm = rho
        self.rho = np.asarray(rho.matrix)
        self.partitions = resolve_partitions(rho.structure, partition)
        self.oracle = lmo or _default_oracle(rho, self.partitions, cfg)
        self.lmo_calls = 0
        self.trace: list[dict] = []
        self.callback = callback
        self.t0 = time.perf_counter()
        self.rho_sq = float(np.sum(np.abs(self.rho) ** 2))
        self.last_vertex: ProductVertex | None = None
        self.gap_vertex: ProductVertex | None = None
        self.rho_factors = None
        if lmo is None and len(self.partitions) == 1:
            self.rho_factors = _low_rank_factors(self.rho)
        if sigma0 is None:
            sigma0, _ = self.call_lmo(self.direction(with_iterate=False), ())
        self.active = ActiveSet(self.rho, sigma0)
        self.state = SolverState(self.active, phi=math.inf, qc_flag=False, iter=0,
                                 f_val=self.f())

    def f(self) -> float:
        return objective(self.active.iterate, self.rho)

    def call_lmo(self, direction, init):
        self.lmo_calls += 1
        vertex, value = self.oracle(direction, init)
        self.last_vertex = vertex
        return vertex, value

    def warm(self) -> list[ProductVertex]:
        if self.cfg.warm_starts <= 0:
            return []
        out = [] if self.last_vertex is None else [self.last_vertex]
        vals = self.active.grad_values()
        for u in np.argsort(vals)[: self.cfg.warm_starts - len(out)]:
            out.append(self.active.vertices[u])
        return out

    def direction(self, with_iterate: bool = True):
        """The gradient, factored as atoms plus a low-rank part when that pays off."""
        if self.rho_factors is None:
            grad = (self.active.iterate if with_iterate else 0) - self.rho
            return 0.5 * (grad + np.conj(grad).T)
        vecs, vals, alpha = self.rho_factors
        atoms = tuple(self.active.vertices) if with_iterate else ()
        weights = self.active.weights.copy() if with_iterate else np.zeros(0)
        return ProductSumDirection(self.rho_dm.structure, atoms, weights, vecs, -vals, -alpha)

    def global_step(self):
        """Oracle call on the current gradient; returns vertex and FW gap."""
        vertex, value = self.call_lmo(self.direction(), self.warm())
        self.gap_vertex = vertex
        lam = self.active.weights
        x_dot_grad = float(lam @ self.active.grad_values())
        gap = x_dot_grad - value
        st = self.state
        st.g_val = gap
        st.r_val = gap / st.f_val if st.f_val > 0 else math.inf
        return vertex, gap

    def fw_step(self, vertex: ProductVertex) -> float:
        act = self.active
        u = act.find(vertex)
        if u is None:
            u = act.add(vertex)
        lam = act.weights
        kx = act.gram @ lam
        # f(x + gamma (v - x)) with v the u-th atom
        xx = float(lam @ kx)
        vx = float(kx[u])
        dd = 1.0 - 2.0 * vx + xx
        slope = float(act.overlaps[u] - lam @ act.overlaps) - (vx - xx)
        gamma = min(max(slope / dd, 0.0), 1.0) if dd > 0 else 0.0
        if gamma > 0:
            act.iterate *= 1.0 - gamma
            act.rank_one(u, gamma)
            act.weights = (1.0 - gamma) * lam
            act.weights[u] += gamma
            act.touch(self.cfg.resync_period)
        act.drop_zeros()
        return gamma

    def record(self, step: str, extra: dict | None = None) -> dict:
        st = self.state
        w = self.active.weights
        rec = {"iter": st.iter, "f": st.f_val, "g": st.g_val, "r": st.r_val,
               "step_type": step, "active_size": len(self.active),
               "lmo_calls": self.lmo_calls, "phi": st.phi,
               "weight_min": float(w.min()), "weight_sum": float(w.sum())}
        if extra:
            rec.update(extra)
        self.trace.append(rec)
        if self.callback is not None:
            self.callback(rec)
        return rec

    def parallelogram(self, vertex) -> dict:
        if not self.cfg.log_parallelogram:
            return {}
        x = self.active.iterate
        return {"g_trace": dual_gap(x, self.rho, vertex),
                "g_parallelogram": dual_gap_parallelogram(x, self.rho, vertex)}

    def stop_reason(self, after_oracle: bool) -> str | None:
        st = self.state
        cfg = self.cfg
        if st.f_val <= cfg.f_tol:
            return "f_tol"
        if after_oracle:
            if cfg.stop_on_r and st.r_val < cfg.r_threshold:
                return "r_criterion"
            if st.g_val <= cfg.gap_tol:
                return "gap_tol"
        if st.iter >= cfg.max_iter:
            return "max_iter"
        if cfg.time_limit is not None and time.perf_counter() - self.t0 > cfg.time_limit:
            return "time_limit"
        return None

    def finish(self, reason: str) -> SolverResult:
        self.active.resync()
        self.state.f_val = self.f()
        return SolverResult(self.state, self.trace, reason, self.lmo_calls,
                            time.perf_counter() - self.t0, self.rho, self.gap_vertex)


def vanilla_fw(rho: DensityMatrix, partition=None, cfg: SolverConfig = SolverConfig(),
               lmo: Oracle | None = None, sigma0: ProductVertex | None = None,
               callback=None) -> SolverResult:
    """Frank-Wolfe with exact line search; one oracle call per iteration."""
    run = _Run(rho, partition, cfg, lmo, sigma0, callback)
    st = run.state
    run.record("init")
    if st.f_val <= cfg.f_tol:
        return run.finish("f_tol")
    while True:
        vertex, gap = run.global_step()
        extra = run.parallelogram(vertex)
        reason = run.stop_reason(after_oracle=True)
        if reason in ("r_criterion", "gap_tol"):
            run.record("check", extra)
            return run.finish(reason)
        run.fw_step(vertex)
        st.iter += 1
        st.f_val = run.f()
        run.record("fw", extra)
        reason = run.stop_reason(after_oracle=False)
        if reason:
            return run.finish(reason)


def _pairwise(run: _Run, a: int, s: int) -> str:
    act = run.active
    cap = float(act.weights[a])
    ga, gs = act.grad_values()[[a, s]]
    dd = 2.0 - 2.0 * act.gram[a, s]
    gamma = min(max((ga - gs) / dd, 0.0), cap) if dd > 0 else cap
    act.iterate += gamma * (np.outer(act.vectors[s], act.vectors[s].conj())
                            - np.outer(act.vectors[a], act.vectors[a].conj()))
    act.weights[s] += gamma
    if gamma >= cap:
        act.weights[a] = 0.0
        act.drop([a])
        act.weights /= act.weights.sum()
        step = "drop"
    else:
        act.weights[a] -= gamma
        step = "pairwise"
    act.touch(run.cfg.resync_period)
    return step


def bpcg_qc(rho: DensityMatrix, partition=None, cfg: SolverConfig = SolverConfig(),
            lmo: Oracle | None = None, sigma0: ProductVertex | None = None,
            callback=None) -> SolverResult:
    """Lazified blended pairwise conditional gradients with quadratic correction."""
    run = _Run(rho, partition, cfg, lmo, sigma0, callback)
    st = run.state
    if st.f_val <= cfg.f_tol:
        run.record("init")
        return run.finish("f_tol")
    pending, gap = run.global_step()
    st.phi = max(gap, 0.0) / 2
    run.record("init", run.parallelogram(pending))
    reason = run.stop_reason(after_oracle=True)
    if reason:
        return run.finish(reason)

    while True:
        act = run.active
        vals = act.grad_values()
        a, s = int(np.argmax(vals)), int(np.argmin(vals))
        extra = None
        if vals[a] - vals[s] >= st.phi and a != s:
            if st.qc_flag and len(act) >= 2:
                step = "qc" if qc_mnp_cycles(act) else _pairwise(run, a, s)
                st.qc_flag = False
            else:
                step = _pairwise(run, a, s)
        else:
            vertex, gap = run.global_step()
            extra = run.parallelogram(vertex)
            reason = run.stop_reason(after_oracle=True)
            if reason in ("r_criterion", "gap_tol"):
                run.record("check", extra)
                return run.finish(reason)
            st.qc_flag = act.find(vertex) is not None
            if gap >= st.phi / 2:
                run.fw_step(vertex)
                step = "fw"
                if cfg.qc_trigger == "fw":
                    st.qc_flag = True
            else:
                st.phi /= 2
                step = "gap"
        st.iter += 1
        st.f_val = run.f()
        run.record(step, extra)
        reason = run.stop_reason(after_oracle=False)
        if reason:
            return run.finish(reason)


def solve(rho: DensityMatrix, partition=None, cfg: SolverConfig = SolverConfig(),
          lmo: Oracle | None = None, **kwargs) -> SolverResult:
    engine = vanilla_fw if cfg.engine is Engine.VANILLA else bpcg_qc
    return engine(rho, partition, cfg, lmo, **kwargs)


def detect_entanglement(rho: DensityMatrix, partition=None, cfg: SolverConfig = SolverConfig(),
                        lmo: Oracle | None = None, **kwargs) -> CertResult:
    """Heuristic detection: entangled once the gap efficiency drops below ``r_threshold``."""
    cfg = replace(cfg, stop_on_r=True)
    res = solve(rho, partition, cfg, lmo, **kwargs)
    numbers = {"f": res.f, "g": res.g, "r": res.r, "iter": res.iterations,
               "lmo_calls": res.lmo_calls, "wall_time": res.wall_time,
               "r_threshold": cfg.r_threshold}
    if res.stop_reason == "r_criterion":
        return CertResult(Verdict.HEURISTIC_ENTANGLED, numbers, solver=res)
    numbers["stop_reason"] = res.stop_reason
    return CertResult(Verdict.INCONCLUSIVE, numbers, solver=res)


def write_trace(trace: Iterable[dict], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")


def read_trace(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
