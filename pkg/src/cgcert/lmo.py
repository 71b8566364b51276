"""Linear minimization oracles over pure product states.

The oracles minimise ``<psi|D|psi>`` for a Hermitian direction ``D`` over
pure states that factorise along a partition of the parties.  The fast
oracle alternates exact block updates (each block vector becomes a minimum
eigenvector of the direction contracted with the other blocks) from several
random starts; the exhaustive oracle scans every vertex of an epsilon-net.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .statespace import HilbertStructure, PartitionStructure, StructureError, DomainError

DENSE_EIG_MAX_DIM = 64
_NET_BATCH_ELEMENTS = 2**22


@dataclass(frozen=True, eq=False)
class ProductVertex:
    """Pure state ``|phi_1> (x) ... (x) |phi_k>`` across ``partition``."""

    partition: PartitionStructure
    local_vectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = self.partition.block_dims
        vecs = tuple(np.asarray(v, dtype=complex).ravel() for v in self.local_vectors)
        if len(vecs) != len(dims):
            raise StructureError(f"expected {len(dims)} local vectors, got {len(vecs)}")
        for v, d in zip(vecs, dims):
            if v.shape != (d,):
                raise StructureError(f"local vector of length {v.shape[0]} for block dimension {d}")
            if abs(np.linalg.norm(v) - 1) > 1e-12:
                raise DomainError("local vectors must have unit norm")
            v.setflags(write=False)
        object.__setattr__(self, "local_vectors", vecs)

    @classmethod
    def normalized(cls, partition, local_vectors) -> "ProductVertex":
        vecs = [np.asarray(v, dtype=complex) for v in local_vectors]
        return cls(partition, tuple(v / np.linalg.norm(v) for v in vecs))

    @cached_property
    def vector(self) -> np.ndarray:
        """Full state vector in party order."""
        v = np.ones(1, dtype=complex)
        for loc in self.local_vectors:
            v = np.kron(v, loc)
        out = np.empty_like(v)
        out[_layout(self.partition)] = v
        out.setflags(write=False)
        return out

    def matrix(self) -> np.ndarray:
        v = self.vector
        return np.outer(v, v.conj())

    def expectation(self, direction: np.ndarray) -> float:
        v = self.vector
        return float(np.real(np.vdot(v, direction @ v)))

    def to_dict(self) -> dict:
        return {
            "blocks": [list(b) for b in self.partition.blocks],
            "local_vectors_re": [v.real.tolist() for v in self.local_vectors],
            "local_vectors_im": [v.imag.tolist() for v in self.local_vectors],
        }


@dataclass(frozen=True)
class LmoConfig:
    restarts: int = 10
    sweep_tol: float = 1e-10
    max_sweeps: int = 200
    rng_seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise DomainError("restarts must be >= 1")
        if self.sweep_tol <= 0:
            raise DomainError("sweep_tol must be positive")
        if self.max_sweeps < 1:
            raise DomainError("max_sweeps must be >= 1")


@lru_cache(maxsize=256)
def _layout(partition: PartitionStructure) -> np.ndarray:
    idx = partition.block_to_party_index()
    idx.setflags(write=False)
    return idx


def _to_block_order(direction: np.ndarray, partition: PartitionStructure) -> np.ndarray:
    perm = _layout(partition)
    return direction[np.ix_(perm, perm)]


def _check_direction(direction: np.ndarray, structure: HilbertStructure) -> np.ndarray:
    direction = np.asarray(direction, dtype=complex)
    d = structure.total_dim
    if direction.shape != (d, d):
        raise StructureError(f"direction shape {direction.shape} does not match dimension {d}")
    return direction


def _isometries(vecs: Sequence[np.ndarray], i: int, dims: Sequence[int]) -> np.ndarray:
    """Batched ``kron(phi_0, .., I, .., phi_{k-1})`` in block order, shape (R, D, d_i)."""
    r = vecs[0].shape[0]
    left = np.ones((r, 1), dtype=complex)
    for j in range(i):
        left = (left[:, :, None] * vecs[j][:, None, :]).reshape(r, -1)
    right = np.ones((r, 1), dtype=complex)
    for j in range(i + 1, len(dims)):
        right = (right[:, :, None] * vecs[j][:, None, :]).reshape(r, -1)
    d = dims[i]
    eye = np.eye(d, dtype=complex)
    v = left[:, :, None, None, None] * eye[None, None, :, None, :] * right[:, None, None, :, None]
    return v.reshape(r, -1, d)


def contract_direction(direction: np.ndarray, vertex: ProductVertex, block_index: int) -> np.ndarray:
    """Operator ``M`` on block ``block_index`` with ``<phi_i|M|phi_i> = <psi|D|psi>``.

    All blocks other than ``block_index`` are fixed at the vectors of ``vertex``.
    """
    part = vertex.partition
    if not 0 <= block_index < part.k:
        raise StructureError(f"block index {block_index} out of range for k={part.k}")
    direction = _check_direction(as_matrix(direction), part.structure)
    db = _to_block_order(direction, part)
    vecs = [v[None, :] for v in vertex.local_vectors]
    iso = _isometries(vecs, block_index, part.block_dims)[0]
    m = iso.conj().T @ db @ iso
    return 0.5 * (m + m.conj().T)


def _min_eigvecs(mats: np.ndarray, prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = mats.shape[-1]
    if d <= DENSE_EIG_MAX_DIM:
        w, u = np.linalg.eigh(mats)
        return w[:, 0], u[:, :, 0]
    vals = np.empty(mats.shape[0])
    vecs = np.empty((mats.shape[0], d), dtype=complex)
    for r, m in enumerate(mats):
        try:
            w, u = spla.eigsh(m, k=1, which="SA", v0=prev[r], tol=1e-13)
            vals[r], vecs[r] = w[0], u[:, 0]
        except spla.ArpackNoConvergence:
            w, u = np.linalg.eigh(m)
            vals[r], vecs[r] = w[0], u[:, 0]
    return vals, vecs


def _haar_batch(r: int, d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((r, d)) + 1j * rng.standard_normal((r, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class ProductSumDirection:
    """Hermitian ``sum_u w_u |psi_u><psi_u| + sum_l e_l |chi_l><chi_l| + alpha I``.

    ``atoms`` are product vertices and ``vectors`` dense rows in party order.
    Oracles contract this form block by block without building the matrix,
    which is what makes many-qubit searches affordable.
    """

    structure: HilbertStructure
    atoms: tuple[ProductVertex, ...]
    atom_weights: np.ndarray
    vectors: np.ndarray
    vector_weights: np.ndarray
    alpha: float = 0.0

    def matrix(self) -> np.ndarray:
        d = self.structure.total_dim
        out = self.alpha * np.eye(d, dtype=complex)
        for w, v in zip(self.atom_weights, self.atoms):
            out += w * v.matrix()
        vecs = np.asarray(self.vectors)
        if vecs.size:
            out += (vecs.T * self.vector_weights) @ vecs.conj()
        return out


class _DenseContractor:
    def __init__(self, direction: np.ndarray, partition: PartitionStructure):
        db = _to_block_order(direction, partition)
        self.db = 0.5 * (db + db.conj().T)
        self.dims = partition.block_dims

    def start(self, vecs):
        pass

    def block(self, vecs, i: int) -> np.ndarray:
        iso = _isometries(vecs, i, self.dims)
        mats = np.swapaxes(iso.conj(), 1, 2) @ (self.db @ iso)
        return 0.5 * (mats + np.swapaxes(mats.conj(), 1, 2))

    def updated(self, vecs, i: int):
        pass

    def values(self, vecs) -> np.ndarray:
        full = _full_vectors(vecs)
        return np.real(np.einsum("ri,ij,rj->r", full.conj(), self.db, full))


class _ProductSumContractor:
    def __init__(self, direction: ProductSumDirection, partition: PartitionStructure):
        self.dims = partition.block_dims
        perm = _layout(partition)
        atoms, weights, dense, dense_w = [], [], [], []
        for w, v in zip(direction.atom_weights, direction.atoms):
            if w == 0:
                continue
            if v.partition == partition:
                atoms.append(v)
                weights.append(w)
            else:
                dense.append(v.vector)
                dense_w.append(w)
        vecs = np.asarray(direction.vectors, dtype=complex).reshape(-1, partition.structure.total_dim)
        if len(dense):
            vecs = np.vstack([vecs, np.array(dense)])
        self.chi = vecs[:, perm]
        self.chi_w = np.concatenate([np.asarray(direction.vector_weights, dtype=float), dense_w])
        self.atom_w = np.array(weights, dtype=float)
        self.atom_loc = [np.array([a.local_vectors[j] for a in atoms]).reshape(len(atoms), d)
                         for j, d in enumerate(self.dims)]
        self.alpha = direction.alpha

    def start(self, vecs):
        self.ov = [v.conj() @ loc.T for v, loc in zip(vecs, self.atom_loc)]

    def updated(self, vecs, i: int):
        self.ov[i] = vecs[i].conj() @ self.atom_loc[i].T

    def block(self, vecs, i: int) -> np.ndarray:
        r = vecs[0].shape[0]
        d = self.dims[i]
        mats = np.zeros((r, d, d), dtype=complex)
        mats += self.alpha * np.eye(d)
        if self.atom_w.size:
            coef = np.broadcast_to(self.atom_w, (r, self.atom_w.size)).copy()
            for j, ov in enumerate(self.ov):
                if j != i:
                    coef *= np.abs(ov) ** 2
            loc = self.atom_loc[i]
            mats += (loc.T[None] * coef[:, None, :]) @ loc.conj()
        if self.chi_w.size:
            y = self.chi.reshape((1, -1) + self.dims)
            for j in range(len(self.dims) - 1, i, -1):
                y = np.einsum("rl...a,ra->rl...", y, vecs[j].conj())
            for j in range(i):
                y = np.einsum("rla...,ra->rl...", y, vecs[j].conj())
            y = np.broadcast_to(y, (r,) + y.shape[1:])
            mats += np.einsum("rla,l,rlb->rab", y, self.chi_w, y.conj())
        return 0.5 * (mats + np.swapaxes(mats.conj(), 1, 2))

    def values(self, vecs) -> np.ndarray:
        r = vecs[0].shape[0]
        out = np.full(r, self.alpha, dtype=float)
        if self.atom_w.size:
            prod = np.ones((r, self.atom_w.size))
            for v, loc in zip(vecs, self.atom_loc):
                prod *= np.abs(v.conj() @ loc.T) ** 2
            out += prod @ self.atom_w
        if self.chi_w.size:
            full = _full_vectors(vecs)
            out += (np.abs(full.conj() @ self.chi.T) ** 2) @ self.chi_w
        return out


def _full_vectors(vecs) -> np.ndarray:
    r = vecs[0].shape[0]
    full = np.ones((r, 1), dtype=complex)
    for v in vecs:
        full = (full[:, :, None] * v[:, None, :]).reshape(r, -1)
    return full


def as_matrix(direction) -> np.ndarray:
    if isinstance(direction, ProductSumDirection):
        return direction.matrix()
    return np.asarray(direction, dtype=complex)


def alternating_lmo(direction, partition: PartitionStructure,
                    cfg: LmoConfig = LmoConfig(), rng: np.random.Generator | None = None,
                    init: Sequence[ProductVertex] = (), history: list | None = None,
                    ) -> tuple[ProductVertex, float]:
    """Heuristic minimum of ``<psi|direction|psi>`` over product states of ``partition``.

    Every start is a product of local vectors; one sweep updates each block in
    turn to a minimum eigenvector of :func:`contract_direction`.  Starts are the
    vertices in ``init`` that share ``partition`` followed by ``cfg.restarts``
    Haar-random products.  All starts are processed as one batch.

    ``direction`` is a Hermitian matrix or a :class:`ProductSumDirection`.
    If ``history`` is a list, the per-sweep objective values (array over starts)
    are appended to it.
    """
    if isinstance(direction, ProductSumDirection):
        if direction.structure != partition.structure:
            raise StructureError("direction and partition belong to different structures")
        con = _ProductSumContractor(direction, partition)
    else:
        direction = _check_direction(direction, partition.structure)
        con = None
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    dims = partition.block_dims
    k = len(dims)
    warm = [v for v in init if v.partition == partition]
    n_starts = len(warm) + cfg.restarts
    vecs = []
    for i, d in enumerate(dims):
        rand = _haar_batch(cfg.restarts, d, rng)
        if warm:
            rand = np.concatenate([np.stack([v.local_vectors[i] for v in warm]), rand])
        vecs.append(rand)

    if k == 1:
        w, u = np.linalg.eigh(as_matrix(direction))
        vertex = ProductVertex.normalized(partition, [u[_layout(partition), 0]])
        return vertex, float(w[0])

    if con is None:
        con = _DenseContractor(direction, partition)
    con.start(vecs)
    prev = np.full(n_starts, np.inf)
    for _ in range(cfg.max_sweeps):
        sweep_vals = []
        for i in range(k):
            vals, vecs[i] = _min_eigvecs(con.block(vecs, i), vecs[i])
            con.updated(vecs, i)
            sweep_vals.append(vals)
        if history is not None:
            history.append(np.array(sweep_vals))
        if np.all(prev - vals < cfg.sweep_tol):
            break
        prev = vals

    # evaluate exactly and break ties by lowest start index
    exact = con.values(vecs)
    best = int(np.argmin(exact))
    vertex = ProductVertex.normalized(partition, [v[best] for v in vecs])
    return vertex, float(exact[best])


def random_product_vectors(partition: PartitionStructure, count: int, rng: np.random.Generator,
                           as_array: bool = False):
    """``count`` Haar-random product vertices, or their state vectors as rows."""
    locs = [_haar_batch(count, d, rng) for d in partition.block_dims]
    verts = [ProductVertex.normalized(partition, [v[i] for v in locs]) for i in range(count)]
    if as_array:
        return np.array([v.vector for v in verts]).reshape(count, -1)
    return verts


def set_partitions(n: int, k: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """All partitions of ``range(n)`` into exactly ``k`` blocks.

    Generated from restricted growth strings in lexicographic order, which is
    the tie-breaking order used by :func:`kseparable_lmo`.
    """
    if not 1 <= k <= n:
        return

    def grow(prefix: list[int], used: int):
        i = len(prefix)
        if i == n:
            if used == k:
                yield tuple(tuple(j for j in range(n) if prefix[j] == b) for b in range(k))
            return
        if used + (n - i) < k:
            return
        for b in range(min(used + 1, k)):
            prefix.append(b)
            yield from grow(prefix, max(used, b + 1))
            prefix.pop()

    yield from grow([], 0)


def kseparable_partitions(structure: HilbertStructure, k: int) -> list[PartitionStructure]:
    n = structure.n_parties
    if not 2 <= k <= n:
        raise DomainError(f"k must lie in 2..{n}, got {k}")
    return [PartitionStructure(structure, blocks) for blocks in set_partitions(n, k)]


def kseparable_lmo(direction: np.ndarray, structure: HilbertStructure, k: int,
                   cfg: LmoConfig = LmoConfig(), rng: np.random.Generator | None = None,
                   init: Sequence[ProductVertex] = (),
                   partitions: Sequence[PartitionStructure] | None = None,
                   ) -> tuple[ProductVertex, float]:
    """Best product vertex over every partition of the parties into ``k`` blocks."""
    if partitions is None:
        partitions = kseparable_partitions(structure, k)
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    best = None
    for part in partitions:
        vertex, value = alternating_lmo(direction, part, cfg, rng, init)
        if best is None or value < best[1]:
            best = (vertex, value)
    return best


# --------------------------------------------------------------------------
# exhaustive search over an epsilon-net

def net_lmo(direction: np.ndarray, net, exact_last_block: bool | None = None,
            ) -> tuple[ProductVertex, float]:
    """Exhaustive minimum of ``<psi|direction|psi>`` over the product vertices of ``net``.

    ``net`` supplies ``partition`` and ``local_vectors`` (one ``(N_i, d_i)``
    complex array per block).  Vertices are scanned in row-major order of the
    local indices and the first minimiser wins.

    With ``exact_last_block`` the last block is not enumerated; for every
    combination of the other blocks it is set to the minimum eigenvector of
    the contracted direction, which is the continuum limit of its net.
    """
    part = net.partition
    if exact_last_block is None:
        exact_last_block = getattr(net, "exact_last_block", False)
    direction = _check_direction(as_matrix(direction), part.structure)
    locs = [np.asarray(v, dtype=complex) for v in net.local_vectors]
    if any(v.shape[0] == 0 for v in locs):
        raise DomainError("empty net")
    db = _to_block_order(0.5 * (direction + direction.conj().T), part)
    dims = part.block_dims
    enum_blocks = len(dims) - 1 if exact_last_block else len(dims)

    best_val = np.inf
    best_idx: tuple[int, ...] = ()
    best_tail = None

    def recurse(ops: np.ndarray, block: int, prefix: np.ndarray):
        # ops: (B, Dr, Dr) operators on blocks >= block; prefix: (B, block) indices
        nonlocal best_val, best_idx, best_tail
        if block == enum_blocks:
            if exact_last_block:
                w, u = np.linalg.eigh(ops)
                vals, tails = w[:, 0], u[:, :, 0]
            else:
                vals, tails = np.real(ops[:, 0, 0]), None
            j = int(np.argmin(vals))
            if vals[j] < best_val:
                best_val = float(vals[j])
                best_idx = tuple(int(x) for x in prefix[j])
                best_tail = None if tails is None else tails[j].copy()
            return
        v = locs[block]
        d = dims[block]
        b, dr = ops.shape[0], ops.shape[1]
        rest = dr // d
        t = ops.reshape(b, d, rest, d, rest)
        n_loc = v.shape[0]
        per_item = max(1, rest * rest)
        step_b = max(1, _NET_BATCH_ELEMENTS // (n_loc * per_item))
        for s in range(0, b, step_b):
            tb = t[s:s + step_b]
            if n_loc * per_item * tb.shape[0] <= _NET_BATCH_ELEMENTS:
                chunks = [(0, n_loc)]
            else:
                step_n = max(1, _NET_BATCH_ELEMENTS // per_item)
                chunks = [(c, min(c + step_n, n_loc)) for c in range(0, n_loc, step_n)]
            for c0, c1 in chunks:
                vc = v[c0:c1]
                new = np.einsum("na,zaicj,nc->znij", vc.conj(), tb, vc, optimize=True)
                nb = tb.shape[0] * (c1 - c0)
                pre = np.concatenate([
                    np.repeat(prefix[s:s + tb.shape[0]], c1 - c0, axis=0),
                    np.tile(np.arange(c0, c1), tb.shape[0])[:, None],
                ], axis=1)
                recurse(new.reshape(nb, rest, rest), block + 1, pre)

    recurse(db[None], 0, np.zeros((1, 0), dtype=int))
    vectors = [locs[i][best_idx[i]] for i in range(enum_blocks)]
    if exact_last_block:
        vectors.append(best_tail)
    return ProductVertex.normalized(part, vectors), best_val
