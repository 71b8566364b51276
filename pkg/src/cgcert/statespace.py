"""Hilbert-space bookkeeping, named states, distances and noise channels.

Conventions
-----------
* Computational basis; party 0 is the most significant tensor factor, so
  ``|q0 q1 ... q_{n-1}>`` has flat index ``q0 * d1 * ... + ... + q_{n-1}``.
* Parties are indexed from 0.
* All matrices are dense ``complex128`` numpy arrays.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

HERM_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = -1e-10


class StructureError(ValueError):
    """Dimension or party-index mismatch."""


class DomainError(ValueError):
    """Parameter outside its admissible range."""


@dataclass(frozen=True)
class HilbertStructure:
    local_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.local_dims)
        if not dims:
            raise StructureError("at least one party is required")
        if any(d < 2 for d in dims):
            raise StructureError(f"local dimensions must be >= 2, got {dims}")
        object.__setattr__(self, "local_dims", dims)

    @classmethod
    def qubits(cls, n: int) -> "HilbertStructure":
        return cls((2,) * n)

    @property
    def n_parties(self) -> int:
        return len(self.local_dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.local_dims)


@dataclass(frozen=True)
class PartitionStructure:
    """A split of the parties into disjoint blocks.

    Blocks are stored sorted (each block ascending, blocks ordered by their
    smallest party) so that equal partitions compare equal.
    """

    structure: HilbertStructure
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(sorted(tuple(sorted(int(p) for p in b)) for b in self.blocks))
        flat = [p for b in blocks for p in b]
        n = self.structure.n_parties
        if any(len(b) == 0 for b in blocks):
            raise StructureError("blocks must be nonempty")
        if sorted(flat) != list(range(n)):
            raise StructureError(f"blocks {blocks} do not partition parties 0..{n - 1}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def finest(cls, structure: HilbertStructure) -> "PartitionStructure":
        return cls(structure, tuple((i,) for i in range(structure.n_parties)))

    @classmethod
    def single(cls, structure: HilbertStructure) -> "PartitionStructure":
        return cls(structure, (tuple(range(structure.n_parties)),))

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def block_dims(self) -> tuple[int, ...]:
        dims = self.structure.local_dims
        return tuple(math.prod(dims[p] for p in b) for b in self.blocks)

    @property
    def party_order(self) -> tuple[int, ...]:
        """Parties listed block after block."""
        return tuple(p for b in self.blocks for p in b)

    def block_to_party_index(self) -> np.ndarray:
        """Map flat indices in block order to flat indices in party order.

        ``kron(v_0, ..., v_{k-1})[i]`` is the amplitude of party-ordered basis
        state ``block_to_party_index()[i]``.
        """
        dims = self.structure.local_dims
        idx = np.arange(self.structure.total_dim).reshape(dims)
        return np.ascontiguousarray(idx.transpose(self.party_order).ravel())


def validate_density(matrix: np.ndarray, *, herm_tol=HERM_TOL, trace_tol=TRACE_TOL,
                     psd_tol=PSD_TOL) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise StructureError(f"expected a square matrix, got shape {matrix.shape}")
    herm = np.max(np.abs(matrix - matrix.conj().T)) if matrix.size else 0.0
    if herm > herm_tol:
        raise DomainError(f"matrix is not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(matrix)
    if abs(tr - 1.0) > trace_tol:
        raise DomainError(f"trace {tr.real:.15f} differs from 1")
    lam = np.linalg.eigvalsh(matrix)[0]
    if lam < psd_tol:
        raise DomainError(f"minimum eigenvalue {lam:.3e} is negative")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Immutable density matrix tied to a :class:`HilbertStructure`."""

    matrix: np.ndarray
    structure: HilbertStructure
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.structure.total_dim
        if m.shape != (d, d):
            raise StructureError(f"matrix shape {m.shape} does not match total dimension {d}")
        if self.check:
            validate_density(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.structure.total_dim

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))


def _require_same(rho: DensityMatrix, sigma: DensityMatrix) -> None:
    if rho.structure != sigma.structure:
        raise StructureError(
            f"structures differ: {rho.structure.local_dims} vs {sigma.structure.local_dims}")


def hs_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real part of the Hilbert-Schmidt inner product tr(a^dagger b)."""
    return float(np.real(np.vdot(a, b)))


def hs_distance_sq(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Half the squared Frobenius distance, ``0.5 * ||rho - sigma||^2``."""
    _require_same(rho, sigma)
    diff = rho.matrix - sigma.matrix
    return 0.5 * hs_inner(diff, diff)


def hs_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    return math.sqrt(2.0 * hs_distance_sq(rho, sigma))


# --------------------------------------------------------------------------
# named states

def pure(vector: np.ndarray, structure: HilbertStructure) -> DensityMatrix:
    v = np.asarray(vector, dtype=complex)
    v = v / np.linalg.norm(v)
    return DensityMatrix(np.outer(v, v.conj()), structure)


def maximally_mixed(structure: HilbertStructure) -> DensityMatrix:
    d = structure.total_dim
    return DensityMatrix(np.eye(d, dtype=complex) / d, structure)


def ghz_vector(n: int) -> np.ndarray:
    if n < 2:
        raise DomainError("GHZ needs n >= 2")
    v = np.zeros(2**n, dtype=complex)
    v[0] = v[-1] = 1 / math.sqrt(2)
    return v


def dicke_vector(n: int, excitations: int | None = None) -> np.ndarray:
    """Symmetric Dicke state; defaults to ``n // 2`` excitations."""
    if n < 2:
        raise DomainError("Dicke needs n >= 2")
    if excitations is None:
        excitations = n // 2
    if not 0 < excitations < n:
        raise DomainError(f"excitations must lie in 1..{n - 1}, got {excitations}")
    v = np.zeros(2**n, dtype=complex)
    for ones in combinations(range(n), excitations):
        v[sum(1 << (n - 1 - q) for q in ones)] = 1.0
    return v / np.linalg.norm(v)


def w_vector(n: int) -> np.ndarray:
    return dicke_vector(n, 1)


def bell_vector() -> np.ndarray:
    return np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


def ghz(n: int) -> DensityMatrix:
    return pure(ghz_vector(n), HilbertStructure.qubits(n))


def w_state(n: int) -> DensityMatrix:
    return pure(w_vector(n), HilbertStructure.qubits(n))


def dicke(n: int, excitations: int | None = None) -> DensityMatrix:
    return pure(dicke_vector(n, excitations), HilbertStructure.qubits(n))


def bell() -> DensityMatrix:
    return pure(bell_vector(), HilbertStructure.qubits(2))


def horodecki(a: float) -> DensityMatrix:
    """Horodecki 3x3 bound entangled family, ``0 < a < 1``."""
    if not 0 < a < 1:
        raise DomainError(f"Horodecki parameter must lie in (0, 1), got {a}")
    m = np.zeros((9, 9))
    for i in (0, 4, 8):
        for j in (0, 4, 8):
            m[i, j] = a
    for i in (1, 2, 3, 5, 7):
        m[i, i] = a
    m[6, 6] = m[8, 8] = (1 + a) / 2
    m[6, 8] = m[8, 6] = math.sqrt(1 - a * a) / 2
    return DensityMatrix(m / (8 * a + 1), HilbertStructure((3, 3)))


def make_named_state(name: str, *params) -> DensityMatrix:
    """Build one of ``ghz(n)``, ``w(n)``, ``dicke(n[, k])``, ``bell``, ``horodecki(a)``."""
    key = name.lower()
    try:
        if key == "ghz":
            return ghz(int(params[0]))
        if key == "w":
            return w_state(int(params[0]))
        if key == "dicke":
            exc = int(params[1]) if len(params) > 1 else None
            return dicke(int(params[0]), exc)
        if key == "bell":
            return bell()
        if key == "horodecki":
            return horodecki(float(params[0]))
    except IndexError:
        raise DomainError(f"state {name!r} is missing parameters") from None
    raise DomainError(f"unknown state {name!r}")


# --------------------------------------------------------------------------
# mixing, partial operations

def mix_white_noise(rho: DensityMatrix, p: float) -> DensityMatrix:
    """``(1 - p) rho + p I/d``."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"noise level must lie in [0, 1], got {p}")
    d = rho.dim
    m = (1 - p) * rho.matrix + p * np.eye(d) / d
    return DensityMatrix(m, rho.structure)


def _check_parties(structure: HilbertStructure, parties: Iterable[int]) -> tuple[int, ...]:
    parties = tuple(sorted(set(int(p) for p in parties)))
    if any(p < 0 or p >= structure.n_parties for p in parties):
        raise StructureError(f"party indices {parties} out of range for {structure.n_parties} parties")
    return parties


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Reduced state on the parties in ``keep`` (returned in ascending order)."""
    keep = _check_parties(rho.structure, keep)
    if not keep:
        raise DomainError("keep set must be nonempty")
    dims = rho.structure.local_dims
    n = len(dims)
    t = rho.matrix.reshape(dims + dims)
    # contract each traced party's ket index with its bra index
    ket = list(range(n))
    bra = [n + p if p in keep else p for p in range(n)]
    out = list(keep) + [n + p for p in keep]
    red = np.einsum(t, ket + bra, out)
    d_keep = math.prod(dims[p] for p in keep)
    sub = HilbertStructure(tuple(dims[p] for p in keep))
    return DensityMatrix(red.reshape(d_keep, d_keep), sub, check=False)


def partial_transpose(matrix: np.ndarray, structure: HilbertStructure,
                      parties: Iterable[int]) -> np.ndarray:
    """Transpose the indices of ``parties`` (PPT test oracle)."""
    parties = _check_parties(structure, parties)
    dims = structure.local_dims
    n = len(dims)
    t = np.asarray(matrix).reshape(dims + dims)
    axes = list(range(2 * n))
    for p in parties:
        axes[p], axes[n + p] = axes[n + p], axes[p]
    d = structure.total_dim
    return t.transpose(axes).reshape(d, d)


def min_partial_transpose_eig(rho: DensityMatrix, parties: Iterable[int]) -> float:
    pt = partial_transpose(rho.matrix, rho.structure, parties)
    return float(np.linalg.eigvalsh(pt)[0])


def fidelity_with_pure(rho: DensityMatrix, target: np.ndarray) -> float:
    """``<target|rho|target>`` for a normalized target vector."""
    v = np.asarray(target, dtype=complex)
    if v.shape != (rho.dim,):
        raise StructureError(f"target of length {v.shape} does not match dimension {rho.dim}")
    if abs(np.linalg.norm(v) - 1) > 1e-10:
        raise DomainError("target vector must be normalized")
    val = np.vdot(v, rho.matrix @ v)
    return float(val.real)


# --------------------------------------------------------------------------
# channels

class ChannelKind(str, enum.Enum):
    GLOBAL_DEPOLARIZING = "gd"
    BIT_FLIP = "bf"
    PHASE_FLIP = "pf"
    AMPLITUDE_DAMPING = "ad"
    PHASE_DAMPING = "pd"


_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_ID2 = np.eye(2, dtype=complex)


def qubit_kraus(kind: ChannelKind, p: float) -> list[np.ndarray]:
    """Single-qubit Kraus operators at strength ``p`` (``gamma`` for damping)."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"channel strength must lie in [0, 1], got {p}")
    kind = ChannelKind(kind)
    if kind is ChannelKind.BIT_FLIP:
        return [math.sqrt(1 - p) * _ID2, math.sqrt(p) * _PAULI_X]
    if kind is ChannelKind.PHASE_FLIP:
        return [math.sqrt(1 - p) * _ID2, math.sqrt(p) * _PAULI_Z]
    if kind is ChannelKind.AMPLITUDE_DAMPING:
        e0 = np.array([[1, 0], [0, math.sqrt(1 - p)]], dtype=complex)
        e1 = np.array([[0, math.sqrt(p)], [0, 0]], dtype=complex)
        return [e0, e1]
    if kind is ChannelKind.PHASE_DAMPING:
        e0 = np.array([[1, 0], [0, math.sqrt(1 - p)]], dtype=complex)
        e1 = np.array([[0, 0], [0, math.sqrt(p)]], dtype=complex)
        return [e0, e1]
    # local depolarizing (1-p) rho + p I/2 written with Pauli Kraus operators
    return [math.sqrt(1 - 3 * p / 4) * _ID2] + [math.sqrt(p / 4) * s for s in (_PAULI_X, _PAULI_Y, _PAULI_Z)]


@dataclass(frozen=True)
class NoiseChannel:
    """Noise channel applied independently on each acting party.

    For two qubits with ``GLOBAL_DEPOLARIZING`` acting on both parties the
    four-term balanced local depolarizing sum is used.
    """

    kind: ChannelKind
    acting_parties: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        object.__setattr__(self, "acting_parties", tuple(sorted(set(self.acting_parties))))
        if not self.acting_parties:
            raise StructureError("channel must act on at least one party")

    def kraus_builder(self) -> Callable[[float], list[np.ndarray]]:
        return lambda p: qubit_kraus(self.kind, p)

    def kraus(self, p: float) -> list[np.ndarray]:
        return qubit_kraus(self.kind, p)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "acting_parties": list(self.acting_parties)}


def _apply_local(matrix: np.ndarray, dims: tuple[int, ...], party: int,
                 kraus: Sequence[np.ndarray]) -> np.ndarray:
    n = len(dims)
    t = matrix.reshape(dims + dims)
    out = np.zeros_like(t)
    for k in kraus:
        # K on the ket index of ``party``, K^dagger on its bra index
        left = np.moveaxis(np.tensordot(k, t, axes=([1], [party])), 0, party)
        out += np.moveaxis(np.tensordot(left, k.conj(), axes=([n + party], [1])), -1, n + party)
    d = math.prod(dims)
    return out.reshape(d, d)


def _balanced_depolarizing_two(rho: DensityMatrix, p: float) -> np.ndarray:
    rho_a = partial_trace(rho, [0]).matrix
    rho_b = partial_trace(rho, [1]).matrix
    half = np.eye(2) / 2
    return ((1 - p) ** 2 * rho.matrix
            + p * (1 - p) * np.kron(rho_a, half)
            + p * (1 - p) * np.kron(half, rho_b)
            + p**2 * np.kron(half, half))


def apply_channel(rho: DensityMatrix, ch: NoiseChannel, p: float) -> DensityMatrix:
    """Apply ``ch`` at strength ``p`` on its acting parties, identity elsewhere."""
    parties = _check_parties(rho.structure, ch.acting_parties)
    if len(parties) != len(ch.acting_parties):
        raise StructureError("acting parties contain duplicates")
    dims = rho.structure.local_dims
    if any(dims[q] != 2 for q in parties):
        raise StructureError("noise channels are defined for qubit parties only")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"channel strength must lie in [0, 1], got {p}")
    if (ch.kind is ChannelKind.GLOBAL_DEPOLARIZING and dims == (2, 2)
            and parties == (0, 1)):
        m = _balanced_depolarizing_two(rho, p)
    else:
        m = rho.matrix
        kraus = ch.kraus(p)
        for q in parties:
            m = _apply_local(m, dims, q, kraus)
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m, rho.structure)


def kraus_completeness(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_i K_i^dagger K_i``."""
    return sum(k.conj().T @ k for k in kraus)


# --------------------------------------------------------------------------
# random states

def haar_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_density(structure: HilbertStructure, rng: np.random.Generator,
                   rank: int | None = None) -> DensityMatrix:
    """Induced-measure random mixed state (Ginibre ``G G^dagger``)."""
    d = structure.total_dim
    r = d if rank is None else rank
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real, structure)


def random_product_vector(structure: HilbertStructure, rng: np.random.Generator) -> np.ndarray:
    v = np.ones(1, dtype=complex)
    for d in structure.local_dims:
        v = np.kron(v, haar_vector(d, rng))
    return v


def random_separable(structure: HilbertStructure, rng: np.random.Generator,
                     n_terms: int = 8) -> DensityMatrix:
    """Random convex mixture of ``n_terms`` pure fully-product states."""
    w = rng.dirichlet(np.ones(n_terms))
    d = structure.total_dim
    m = np.zeros((d, d), dtype=complex)
    for wi in w:
        v = random_product_vector(structure, rng)
        m += wi * np.outer(v, v.conj())
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(m / np.trace(m).real, structure)


# --------------------------------------------------------------------------
# serialization

def state_to_json(rho: DensityMatrix) -> dict:
    return {
        "local_dims": list(rho.structure.local_dims),
        "matrix_re": rho.matrix.real.tolist(),
        "matrix_im": rho.matrix.imag.tolist(),
    }


def state_from_json(obj: dict) -> DensityMatrix:
    try:
        structure = HilbertStructure(tuple(obj["local_dims"]))
        re = np.asarray(obj["matrix_re"], dtype=float)
        im = np.asarray(obj.get("matrix_im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError) as exc:
        raise StructureError(f"malformed state JSON: {exc}") from None
    if re.shape != im.shape:
        raise StructureError("matrix_re and matrix_im shapes differ")
    return DensityMatrix(re + 1j * im, structure)


def load_state(path: str | Path) -> DensityMatrix:
    with open(path) as fh:
        return state_from_json(json.load(fh))


def save_state(rho: DensityMatrix, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_json(rho), fh)
