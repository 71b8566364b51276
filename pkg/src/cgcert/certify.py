"""Certificates: entanglement witnesses and separable-ball certificates.

A robust witness for a target ``rho`` and a separable approximation
``sigma`` shifts ``Lam = sigma - rho`` by the minimum of ``tr(Lam tau)``
over a product net minus a net error bound, so that it is nonnegative on
every k-separable ``tau``.

Two error bounds are available.  ``"provable"`` uses
``(l_max - l_min) * sum_i s_i + ||Lam||_op * (prod_i (1 + 2 sqrt(s_i)) - 1 - sum_i 2 sqrt(s_i))``
with ``s_i = 1 - eta_i**2``: a net vertex within fidelity ``eta_i**2`` of each
block of the true minimiser changes the expectation by at most that much,
because the first-order terms vanish at a minimiser whose blocks are
eigenvectors of their contracted operators.  ``"homothetic"`` uses
``(1 - eta) * ||Lam||_F``, which is much smaller but has no proof behind it
for nets of pure product states.

When only one block carries a net and the rest is minimised exactly, the
first-order term improves to ``(P_max - P_min) * s`` with ``P_max, P_min``
the extreme product expectations, and ``P_max - P_min`` is bounded by the
net's own spread as ``(net_max - net_min) / (1 - 2 s)``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .statespace import DomainError, HilbertStructure, PartitionStructure, StructureError

LAMBDA_NORM_FLOOR = 1e-12


class Verdict(str, enum.Enum):
    HEURISTIC_ENTANGLED = "HeuristicEntangled"
    WITNESS_CERTIFIED = "WitnessCertified"
    SEPARABILITY_CERTIFIED = "SeparabilityCertified"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True, eq=False)
class Witness:
    operator: np.ndarray
    beta: float
    eps_hat: float
    eta: float
    value_on_target: float
    lambda_norm: float
    bound: str = "provable"
    net_params: dict = field(default_factory=dict)

    @property
    def certifies(self) -> bool:
        return self.value_on_target < 0

    def evaluate(self, state) -> float:
        m = np.asarray(getattr(state, "matrix", state))
        return float(np.real(np.vdot(self.operator, m)))

    def evaluate_vectors(self, vectors: np.ndarray) -> np.ndarray:
        """``<v|W|v>`` for each row ``v``."""
        v = np.asarray(vectors)
        return np.real(np.einsum("ni,ij,nj->n", v.conj(), self.operator, v))

    def to_dict(self) -> dict:
        return {
            "matrix_re": self.operator.real.tolist(),
            "matrix_im": self.operator.imag.tolist(),
            "beta": self.beta, "eps_hat": self.eps_hat, "eta": self.eta,
            "value_on_target": self.value_on_target,
            "lambda_norm": self.lambda_norm, "bound": self.bound,
            "net_params": self.net_params,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Witness":
        op = np.array(obj["matrix_re"], dtype=float) + 1j * np.array(obj["matrix_im"], dtype=float)
        return cls(op, float(obj["beta"]), float(obj["eps_hat"]), float(obj["eta"]),
                   float(obj["value_on_target"]), float(obj.get("lambda_norm", math.nan)),
                   obj.get("bound", "provable"), obj.get("net_params", {}))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Witness":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class CertResult:
    verdict: Verdict
    numbers: dict = field(default_factory=dict)
    witness: Witness | None = None
    solver: Any = field(default=None, repr=False)

    def __post_init__(self):
        self.verdict = Verdict(self.verdict)
        if self.verdict is Verdict.WITNESS_CERTIFIED and (self.witness is None or not self.witness.certifies):
            raise DomainError("a witness certificate needs a witness that is negative on the target")
        if self.verdict is Verdict.SEPARABILITY_CERTIFIED and "p_sep" not in self.numbers:
            raise DomainError("a separability certificate needs p_sep")

    @property
    def entangled(self) -> bool:
        return self.verdict in (Verdict.HEURISTIC_ENTANGLED, Verdict.WITNESS_CERTIFIED)

    @property
    def certified(self) -> bool:
        return self.verdict is not Verdict.INCONCLUSIVE

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict.value, "numbers": _jsonable(self.numbers)}
        if self.witness is not None:
            w = self.witness
            out["witness"] = {"beta": w.beta, "eps_hat": w.eps_hat, "eta": w.eta,
                              "value_on_target": w.value_on_target, "bound": w.bound,
                              "net_params": w.net_params}
        return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# --------------------------------------------------------------------------
# witnesses

def build_witness_simple(sigma, rho_e) -> np.ndarray:
    """``sigma - rho_e + tr[sigma (rho_e - sigma)] * I``."""
    s = np.asarray(getattr(sigma, "matrix", sigma))
    r = np.asarray(getattr(rho_e, "matrix", rho_e))
    if s.shape != r.shape:
        raise StructureError(f"shape mismatch {s.shape} vs {r.shape}")
    shift = float(np.real(np.vdot(s, r - s)))
    return s - r + shift * np.eye(s.shape[0])


def net_error_bound(lam: np.ndarray, local_etas: Sequence[float], bound: str = "provable") -> float:
    """Upper bound on ``beta - min_tau tr(lam tau)`` for a product net."""
    if bound == "homothetic":
        return (1 - math.prod(local_etas)) * float(np.linalg.norm(lam))
    if bound != "provable":
        raise DomainError(f"unknown bound {bound!r}")
    w = np.linalg.eigvalsh(lam)
    spread = float(w[-1] - w[0])
    op = float(max(abs(w[0]), abs(w[-1])))
    s = [max(0.0, 1 - e * e) for e in local_etas]
    root = [2 * math.sqrt(x) for x in s]
    higher = math.prod(1 + x for x in root) - 1 - sum(root)
    return spread * sum(s) + op * max(higher, 0.0)


def single_block_bound(net_min: float, net_max: float, eta: float) -> float:
    """Net error when one block is netted and the others are exact."""
    s = max(0.0, 1 - eta * eta)
    if s >= 0.5:
        return math.inf
    return s * (net_max - net_min) / (1 - 2 * s)


def build_witness_robust(rho, sigma, nets, bound: str = "provable") -> Witness:
    """Witness ``(Lam - (beta - eps_hat) I) / ||Lam||`` with ``Lam = sigma - rho``.

    ``nets`` is one product net or several (one per partition when the
    separable set is a union over partitions); ``beta`` is the minimum over
    all of them and ``eps_hat`` the largest error bound.
    """
    from .lmo import net_lmo

    r = np.asarray(getattr(rho, "matrix", rho))
    s = np.asarray(getattr(sigma, "matrix", sigma))
    if r.shape != s.shape:
        raise StructureError("rho and sigma have different shapes")
    if not isinstance(nets, (list, tuple)):
        nets = [nets]
    structure = getattr(rho, "structure", None)
    for net in nets:
        if net.partition.structure.total_dim != r.shape[0] or (
                structure is not None and net.partition.structure != structure):
            raise StructureError("net was built for a different Hilbert structure")
    lam = s - r
    lam = 0.5 * (lam + lam.conj().T)
    norm = float(np.linalg.norm(lam))
    if norm < LAMBDA_NORM_FLOOR:
        raise DomainError("sigma equals rho, no witness direction")
    beta = math.inf
    eps_hat = 0.0
    for net in nets:
        _, b = net_lmo(lam, net, exact_last_block=net.exact_last_block)
        beta = min(beta, b)
        err = net_error_bound(lam, net.local_etas, bound)
        if bound == "provable" and len(net.local_etas) == 1 and net.exact_last_block:
            _, top = net_lmo(-lam, net, exact_last_block=True)
            err = min(err, single_block_bound(b, -top, net.local_etas[0]))
        eps_hat = max(eps_hat, err)
    op = (lam - (beta - eps_hat) * np.eye(lam.shape[0])) / norm
    value = float(np.real(np.vdot(op, r)))
    eta = min(net.eta for net in nets)
    params = {"nets": [net.params() for net in nets]}
    return Witness(op, float(beta), float(eps_hat), float(eta), value, norm, bound, params)


def witness_result(witness: Witness, numbers: dict | None = None) -> CertResult:
    numbers = dict(numbers or {})
    numbers.update(value_on_target=witness.value_on_target, beta=witness.beta,
                   eps_hat=witness.eps_hat)
    verdict = Verdict.WITNESS_CERTIFIED if witness.certifies else Verdict.INCONCLUSIVE
    return CertResult(verdict, numbers, witness)


# --------------------------------------------------------------------------
# separable ball

def bipartite_ball_radius(total_dim: int) -> float:
    """Frobenius radius around ``I/D`` of the purity ball ``tr(rho^2) <= 1/(D-1)``."""
    return 1.0 / math.sqrt(total_dim * (total_dim - 1))


def multipartite_ball_radius(total_dim: int, blocks: int) -> float:
    """Frobenius radius around ``I/D`` of a ball of ``blocks``-partite separable states.

    Unnormalized operators ``I + X`` with ``||X||_F <= 2**(1 - blocks/2)`` are
    fully separable; dividing by ``D`` gives the radius for unit trace.
    """
    return 2.0 ** (1 - blocks / 2) / total_dim


def separable_ball_radius(structure: HilbertStructure, partition=None,
                          multipartite_radius: float | None = None) -> float:
    """Radius of a ball around ``I/D`` inside the k-separable set.

    ``partition`` is a :class:`PartitionStructure` or a separability level
    ``k``; the default is full separability.
    """
    if partition is None:
        k = structure.n_parties
    elif isinstance(partition, PartitionStructure):
        k = partition.k
    else:
        k = int(partition)
    d = structure.total_dim
    if k <= 1:
        return math.inf
    if k == 2:
        return bipartite_ball_radius(d)
    if multipartite_radius is not None:
        return float(multipartite_radius)
    return multipartite_ball_radius(d, k)


def certify_separability(rho, p: float, solver_out, a: float) -> CertResult:
    """Separability of ``(rho + eps I/D) / (1 + eps)`` with ``eps = ||rho - sigma|| / a``.

    For a white-noise family member ``rho = rho(p)`` that state is
    ``rho((p + eps) / (1 + eps))``, reported as ``p_sep``.
    """
    if not a > 0:
        raise DomainError(f"ball radius must be positive, got {a}")
    r = np.asarray(getattr(rho, "matrix", rho))
    if hasattr(solver_out, "state"):
        sigma = solver_out.state.active.iterate
    else:
        sigma = np.asarray(getattr(solver_out, "matrix", solver_out))
    delta = float(np.linalg.norm(r - sigma))
    eps = delta / a
    p_sep = (p + eps) / (1 + eps)
    numbers = {"p": p, "p_sep": p_sep, "delta": delta, "epsilon": eps, "radius": a}
    return CertResult(Verdict.SEPARABILITY_CERTIFIED, numbers, solver=solver_out)


def certified_state(rho, epsilon: float) -> np.ndarray:
    """The state that a separability certificate with ``epsilon`` vouches for."""
    r = np.asarray(getattr(rho, "matrix", rho))
    d = r.shape[0]
    return (r + epsilon * np.eye(d) / d) / (1 + epsilon)
