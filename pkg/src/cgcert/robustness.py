"""Certified noise-robustness intervals.

A sweep brackets the noise strength at which a state family stops being
entangled: ``p_ent`` carries an entanglement certificate and ``p_sep`` a
separability certificate, and bisection narrows the bracket between them.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .certify import (CertResult, Verdict, build_witness_robust, certified_state,
                      certify_separability, separable_ball_radius, witness_result)
from .epsnet import DEFAULT_CARDINALITY_CAP, predicted_product_size, product_net
from .lmo import LmoConfig, alternating_lmo, kseparable_partitions
from .solver import SolverConfig, dual_gap, solve
from .statespace import (ChannelKind, DensityMatrix, DomainError, NoiseChannel, PartitionStructure,
                         apply_channel, bell_vector, horodecki, make_named_state,
                         mix_white_noise)

log = logging.getLogger(__name__)


class Outcome(str, enum.Enum):
    ENTANGLED = "Entangled"
    SEPARABLE = "Separable"
    UNKNOWN = "Unknown"


class Mode(str, enum.Enum):
    HEURISTIC = "heuristic"
    RIGOROUS = "rigorous"


@dataclass(frozen=True)
class StateFamily:
    """Noisy states ``p -> rho(p)`` of a fixed target state."""

    name: str
    build: Callable[[float], DensityMatrix]
    channel: dict
    target: np.ndarray | None = None
    k: int | None = None
    white_noise: bool = False

    def __call__(self, p: float) -> DensityMatrix:
        return self.build(p)


def white_noise_family(rho: DensityMatrix, name: str = "state", target=None,
                       k: int | None = None) -> StateFamily:
    return StateFamily(name, lambda p: mix_white_noise(rho, p), {"kind": "white"},
                       target, k, white_noise=True)


def channel_family(rho: DensityMatrix, channel: NoiseChannel, name: str = "state",
                   target=None, k: int | None = None) -> StateFamily:
    return StateFamily(name, lambda p: apply_channel(rho, channel, p), channel.to_dict(),
                       target, k)


def default_bracket(channel: str) -> tuple[float, float]:
    """Search interval on which the Bell family changes entanglement at most once."""
    # flips by X or Z turn one Bell state into another, so entanglement returns past 1/2
    if channel in (ChannelKind.BIT_FLIP.value, ChannelKind.PHASE_FLIP.value):
        return 0.0, 0.5
    return 0.0, 1.0


@dataclass(frozen=True)
class SweepConfig:
    p_lo: float = 0.0
    p_hi: float = 1.0
    target_gap: float = 1e-3
    max_probes: int = 40
    solver_cfg: SolverConfig = SolverConfig(max_iter=20_000)
    mode: Mode = Mode.HEURISTIC
    sep_slack: float | None = None
    ball_radius: float | None = None
    net_n: int | None = None
    net_exact_last_block: bool = True
    net_phase_reduce: bool = True
    net_cap: int = DEFAULT_CARDINALITY_CAP
    witness_bound: str = "provable"
    accelerate: bool = False

    def __post_init__(self):
        if not 0 <= self.p_lo < self.p_hi <= 1:
            raise DomainError(f"need 0 <= p_lo < p_hi <= 1, got [{self.p_lo}, {self.p_hi}]")
        if self.target_gap <= 0:
            raise DomainError("target_gap must be positive")
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def slack(self) -> float:
        return self.target_gap / 4 if self.sep_slack is None else self.sep_slack


@dataclass
class ProbeResult:
    p: float
    outcome: Outcome
    cert: CertResult
    p_sep: float | None = None
    wall_time: float = 0.0

    def summary(self) -> dict:
        out = {"p": self.p, "outcome": self.outcome.value, "p_sep": self.p_sep,
               "wall_time": self.wall_time}
        out.update(self.cert.to_dict())
        return out


@dataclass
class RobustnessResult:
    channel: dict
    p_ent: float | None
    p_sep: float | None
    fidelity_at_ent: float | None = None
    fidelity_at_sep: float | None = None
    probes: list[ProbeResult] = field(default_factory=list)
    ok: bool = True
    message: str = ""
    wall_time: float = 0.0
    label: dict = field(default_factory=dict)
    ent_cert: CertResult | None = None
    sep_cert: CertResult | None = None
    sep_state: np.ndarray | None = field(default=None, repr=False)

    @property
    def gap(self) -> float | None:
        if self.p_ent is None or self.p_sep is None:
            return None
        return self.p_sep - self.p_ent

    @property
    def traces(self) -> list[dict]:
        return [p.summary() for p in self.probes]

    def contains(self, value: float) -> bool:
        return self.ok and self.p_ent <= value <= self.p_sep

    def row(self) -> dict:
        row = dict(self.label)
        row.update(channel=self.channel.get("kind"), p_ent=self.p_ent, p_sep=self.p_sep,
                   gap=self.gap, fidelity_ent=self.fidelity_at_ent,
                   fidelity_sep=self.fidelity_at_sep, probes=len(self.probes),
                   wall_time=self.wall_time, ok=self.ok)
        return row


def _needed_f_tol(p: float, slack: float, radius: float, white_noise: bool = True) -> float:
    if not white_noise:
        return 0.5 * (slack * radius) ** 2
    # p_sep - p = eps (1 - p) / (1 + eps) <= slack
    room = max(1 - p - slack, 1e-12)
    eps = slack / room
    return 0.5 * (eps * radius) ** 2


def probe(family: StateFamily, p: float, cfg: SweepConfig = SweepConfig(),
          structure_partition=None) -> ProbeResult:
    """Certify ``family(p)`` as entangled, separable up to slack, or neither."""
    if not 0 <= p <= 1:
        raise DomainError(f"noise strength {p} outside [0, 1]")
    t0 = time.perf_counter()
    rho = family(p)
    k = family.k if structure_partition is None else structure_partition
    part = k if k is not None else rho.structure.n_parties
    radius = cfg.ball_radius or separable_ball_radius(rho.structure, part)
    needed = _needed_f_tol(p, cfg.slack, radius, family.white_noise)
    f_tol = min(cfg.solver_cfg.f_tol, needed) if cfg.solver_cfg.f_tol > 0 else needed
    scfg = replace(cfg.solver_cfg, stop_on_r=True, f_tol=f_tol)
    res = solve(rho, part, scfg)
    numbers = {"f": res.f, "g": res.g, "r": res.r, "iter": res.iterations,
               "lmo_calls": res.lmo_calls, "stop_reason": res.stop_reason,
               "r_threshold": scfg.r_threshold}

    if res.stop_reason == "r_criterion":
        if cfg.mode is Mode.HEURISTIC:
            cert = CertResult(Verdict.HEURISTIC_ENTANGLED, numbers, solver=res)
            return ProbeResult(p, Outcome.ENTANGLED, cert, wall_time=time.perf_counter() - t0)
        cert = rigorous_entanglement(rho, res, part, cfg, numbers)
        outcome = Outcome.ENTANGLED if cert.verdict is Verdict.WITNESS_CERTIFIED else Outcome.UNKNOWN
        return ProbeResult(p, outcome, cert, wall_time=time.perf_counter() - t0)

    cert = certify_separability(rho, p, res, radius)
    cert.numbers.update(numbers)
    if family.white_noise:
        p_sep = cert.numbers["p_sep"]
        outcome = Outcome.SEPARABLE if p_sep - p <= cfg.slack else Outcome.UNKNOWN
    else:
        # only the state with eps extra white noise is certified, not another family member
        p_sep = cert.numbers["p_sep"] = p
        outcome = Outcome.SEPARABLE if cert.numbers["epsilon"] <= cfg.slack else Outcome.UNKNOWN
    return ProbeResult(p, outcome, cert, p_sep=p_sep, wall_time=time.perf_counter() - t0)


def rigorous_entanglement(rho: DensityMatrix, res, part, cfg: SweepConfig, numbers: dict) -> CertResult:
    structure = rho.structure
    if isinstance(part, PartitionStructure):
        parts = [part]
    elif part == structure.n_parties:
        parts = [PartitionStructure.finest(structure)]
    else:
        parts = kseparable_partitions(structure, int(part))
    sigma = res.sigma
    nets = []
    for pt in parts:
        n = cfg.net_n or auto_net_n(rho.matrix, sigma.matrix, pt, cfg)
        nets.append(product_net(structure, pt, n, cap=cfg.net_cap,
                                exact_last_block=cfg.net_exact_last_block,
                                phase_reduce=cfg.net_phase_reduce))
    witness = build_witness_robust(rho, sigma, nets, cfg.witness_bound)
    numbers = dict(numbers, net_n=[net.params()["n"] for net in nets])
    return witness_result(witness, numbers)


def auto_net_n(rho: np.ndarray, sigma: np.ndarray, partition: PartitionStructure,
               cfg: SweepConfig, safety: float = 0.7, n_max: int = 200) -> int:
    """Smallest subdivision that should leave the witness negative, within the cap.

    The margin ``||Lam||^2 - (tr(Lam sigma) - min)`` and the product spread of
    ``Lam = sigma - rho`` are estimated with the heuristic oracle; the net
    itself is what makes the final witness rigorous.
    """
    lam = sigma - rho
    lam = 0.5 * (lam + lam.conj().T)
    lcfg = LmoConfig(restarts=20)
    _, lo = alternating_lmo(lam, partition, lcfg)
    _, hi = alternating_lmo(-lam, partition, lcfg)
    margin = float(np.sum(np.abs(lam) ** 2)) - (float(np.real(np.vdot(lam, sigma))) - lo)
    netted = partition.k - (1 if cfg.net_exact_last_block else 0)
    dims = partition.block_dims[:netted]
    spread = -hi - lo
    if netted > 1:
        w = np.linalg.eigvalsh(lam)
        spread = float(w[-1] - w[0]) * netted
    best = 1
    for n in range(1, n_max + 1):
        if predicted_product_size(partition, n, cfg.net_exact_last_block, cfg.net_phase_reduce) > cfg.net_cap:
            break
        best = n
        s = max(2 * (2 * d - 1) / (n * n + 2 * (2 * d - 1)) for d in dims) if dims else 0.0
        if margin > 0 and spread * s < safety * margin:
            break
    return best


def _fidelity(family: StateFamily, rho_or_matrix) -> float | None:
    if family.target is None:
        return None
    m = np.asarray(getattr(rho_or_matrix, "matrix", rho_or_matrix))
    v = family.target
    return float(np.real(np.vdot(v, m @ v)))


def bisect_threshold(family: StateFamily, cfg: SweepConfig = SweepConfig()) -> RobustnessResult:
    """Bisect the bracket ``[p_ent, p_sep]`` until it is narrower than ``target_gap``."""
    t0 = time.perf_counter()
    probes: list[ProbeResult] = []

    def run(p):
        pr = probe(family, p, cfg)
        probes.append(pr)
        log.info("probe p=%.6f -> %s", p, pr.outcome.value)
        return pr

    lo = run(cfg.p_lo)
    if lo.outcome is not Outcome.ENTANGLED:
        return RobustnessResult(family.channel, None, None, probes=probes, ok=False,
                                message=f"lower end p={cfg.p_lo} not certified entangled",
                                wall_time=time.perf_counter() - t0)
    hi = run(cfg.p_hi)
    if hi.p_sep is None or hi.outcome is Outcome.ENTANGLED:
        return RobustnessResult(family.channel, cfg.p_lo, None, probes=probes, ok=False,
                                message=f"upper end p={cfg.p_hi} not certified separable",
                                wall_time=time.perf_counter() - t0)
    ent, sep = lo, hi
    p_ent, p_sep = cfg.p_lo, hi.p_sep
    unknown: list[float] = []
    suggestion = None
    while p_sep - p_ent > cfg.target_gap and len(probes) < cfg.max_probes:
        stuck = [u for u in unknown if p_ent < u < p_sep]
        left = max(stuck) if stuck else p_ent
        p = (left + p_sep) / 2
        if suggestion is not None and left < suggestion < p_sep:
            p = suggestion
        suggestion = None
        pr = run(p)
        if pr.outcome is Outcome.ENTANGLED:
            p_ent, ent = max(p_ent, p), pr
            if cfg.accelerate and family.white_noise:
                suggestion = _secant_guess(family, pr, p, cfg)
        elif pr.p_sep is not None and pr.p_sep < p_sep and (
                family.white_noise or pr.outcome is Outcome.SEPARABLE):
            p_sep, sep = pr.p_sep, pr
            if pr.outcome is Outcome.UNKNOWN:
                unknown.append(p)
        else:
            unknown.append(p)

    sep_state = certified_state(family(sep.p), sep.cert.numbers["epsilon"])
    result = RobustnessResult(
        family.channel, p_ent, p_sep,
        fidelity_at_ent=_fidelity(family, family(p_ent)),
        fidelity_at_sep=_fidelity(family, sep_state),
        probes=probes, ok=True, wall_time=time.perf_counter() - t0,
        ent_cert=ent.cert, sep_cert=sep.cert, sep_state=sep_state)
    if p_sep - p_ent > cfg.target_gap:
        result.message = f"probe budget exhausted at gap {p_sep - p_ent:.3g}"
    return result


def _secant_guess(family: StateFamily, pr: ProbeResult, p: float, cfg: SweepConfig) -> float | None:
    # distance to the separable set shrinks at most linearly along the white-noise segment
    rho0 = family(0.0).matrix
    d = rho0.shape[0]
    slope = float(np.linalg.norm(rho0 - np.eye(d) / d))
    f = pr.cert.numbers.get("f")
    if not f or slope == 0:
        return None
    return p + math.sqrt(2 * f) / slope


def recheck(result: RobustnessResult, family: StateFamily) -> bool:
    """Re-validate the stored endpoint certificates independently of the sweep."""
    if not result.ok:
        return False
    ent = result.ent_cert
    if ent is None or not ent.entangled:
        return False
    if ent.verdict is Verdict.WITNESS_CERTIFIED:
        if ent.witness.evaluate(family(result.p_ent)) >= 0:
            return False
    else:
        res = ent.solver
        rho = family(result.p_ent).matrix
        sigma = res.state.active.iterate
        f = 0.5 * float(np.sum(np.abs(rho - sigma) ** 2))
        g = dual_gap(sigma, rho, res.fw_vertex)
        if not g / f < ent.numbers.get("r_threshold", 1.0):
            return False
    sep = result.sep_cert
    res = sep.solver
    rho = family(sep.numbers["p"])
    again = certify_separability(rho, sep.numbers["p"], res, sep.numbers["radius"])
    weights = res.state.active.weights
    if np.any(weights < -1e-12) or abs(weights.sum() - 1) > 1e-10:
        return False
    if not family.white_noise:
        return sep.numbers["p"] == result.p_sep and abs(again.numbers["epsilon"] - sep.numbers["epsilon"]) <= 1e-12
    return abs(again.numbers["p_sep"] - result.p_sep) <= 1e-12


# --------------------------------------------------------------------------
# named sweeps

def bell_channel_family(kind: str, acting_party: int = 0) -> StateFamily:
    bell = make_named_state("bell")
    if kind == "white":
        return white_noise_family(bell, "bell", bell_vector())
    ch = NoiseChannel(ChannelKind(kind), (acting_party,) if kind != "gd" else (0, 1))
    return channel_family(bell, ch, "bell", bell_vector())


def gd_white_equivalent(p: float) -> float:
    """White-noise weight equal to the two-qubit balanced depolarizing channel at ``p``.

    On states with maximally mixed marginals the channel gives
    ``(1 - p)**2 rho + (1 - (1 - p)**2) I/4``.
    """
    return 1 - (1 - p) ** 2


def horodecki_family(a: float) -> StateFamily:
    rho = horodecki(a)
    return StateFamily(f"horodecki:{a}", lambda p: mix_white_noise(rho, p), {"kind": "white"},
                       None, 2, white_noise=True)


def _horodecki_one(args):
    a, cfg = args
    res = bisect_threshold(horodecki_family(a), cfg)
    res.label = {"a": a}
    return res


def horodecki_sweep(a_values: Sequence[float] = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2)),
                    cfg: SweepConfig = SweepConfig(target_gap=5e-3), workers: int = 1,
                    ) -> list[RobustnessResult]:
    """White-noise intervals of the Horodecki family across ``a``."""
    for a in a_values:
        if not 0 < a < 1:
            raise DomainError(f"Horodecki parameter must lie in (0, 1), got {a}")
    jobs = [(float(a), cfg) for a in a_values]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_horodecki_one, jobs))
    else:
        results = []
        for job in jobs:
            try:
                results.append(_horodecki_one(job))
            except Exception as exc:  # recorded per point, the sweep goes on
                log.exception("horodecki a=%s failed", job[0])
                results.append(RobustnessResult({"kind": "white"}, None, None, ok=False,
                                                message=str(exc), label={"a": job[0]}))
    return results


# --------------------------------------------------------------------------
# reports

REPORT_FIELDS = ["channel", "a", "p_ent", "p_sep", "gap", "fidelity_ent", "fidelity_sep",
                 "probes", "wall_time", "ok"]

# reference thresholds quoted for comparison only: (value, label)
BELL_CHANNEL_REFERENCE = {
    "white": {"p_ent": 0.6665, "gap": 0.0005, "exact": 2 / 3, "fidelity_ent": 0.5001, "fidelity_gap": -0.0004},
    "bf": {"p_ent": 0.4999, "gap": 0.0002, "exact": 0.5, "fidelity_ent": 0.5001, "fidelity_gap": -0.0002},
    "pf": {"p_ent": 0.4999, "gap": 0.0002, "exact": 0.5, "fidelity_ent": 0.5001, "fidelity_gap": -0.0002},
    "ad": {"p_ent": 0.9997, "gap": 0.0003, "exact": 1.0, "fidelity_ent": 0.2587, "fidelity_gap": -0.0087},
    "pd": {"p_ent": 0.9999, "gap": 0.0001, "exact": 1.0, "fidelity_ent": 0.5050, "fidelity_gap": -0.0050},
}

KSEP_REFERENCE = {
    ("ghz", 5, 2): {"p_ent": 0.508, "gap": 0.016, "known": 16 / 31},
    ("ghz", 5, 3): {"p_ent": 0.760, "gap": 0.006, "known": 16 / 21},
    ("ghz", 4, 2): {"p_ent": 0.528, "gap": 0.005, "known": 8 / 15},
    ("ghz", 4, 3): {"p_ent": 0.797, "gap": 0.005, "known": 0.8},
    ("w", 5, 2): {"p_ent": 0.515, "gap": 0.070, "known": 0.478},
    ("w", 5, 3): {"p_ent": 0.739, "gap": 0.013, "known": None},
    ("w", 4, 2): {"p_ent": 0.528, "gap": 0.003, "known": 0.526},
    ("w", 4, 3): {"p_ent": 0.722, "gap": 0.033, "known": (216 - 16 * math.sqrt(6)) / 235},
    ("dicke", 5, 2): {"p_ent": 0.518, "gap": 0.047, "known": 0.516},
    ("dicke", 5, 3): {"p_ent": 0.717, "gap": 0.055, "known": 0.615},
    ("dicke", 4, 2): {"p_ent": 0.540, "gap": 0.003, "known": 0.539},
    ("dicke", 4, 3): {"p_ent": 0.769, "gap": 0.032, "known": 0.788},
}


def write_json_report(results: Sequence[RobustnessResult], path: str | Path,
                      manifest: dict | None = None) -> None:
    payload = {"manifest": manifest or {}, "rows": [r.row() for r in results],
               "probes": [r.traces for r in results]}
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default))


def write_csv_report(results: Sequence[RobustnessResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for r in results:
            writer.writerow(r.row())


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, enum.Enum):
        return obj.value
    return str(obj)
