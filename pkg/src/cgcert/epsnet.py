"""Explicit nets of spheres and of pure product states.

The sphere nets are radial projections of edgewise-subdivided
cross-polytope facets.  Their shrinking factor ``eta`` is a certified lower
bound on ``min_x max_v <x, v>`` over unit vectors ``x``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull

from .statespace import DomainError, HilbertStructure, PartitionStructure, StructureError
from .lmo import ProductVertex

DEFAULT_CARDINALITY_CAP = 10**7
DEDUP_DECIMALS = 9


class NetSizeError(RuntimeError):
    """Predicted net cardinality exceeds the configured cap."""

    def __init__(self, predicted: int, cap: int):
        super().__init__(f"net would have {predicted} vertices, cap is {cap}")
        self.predicted = predicted
        self.cap = cap


# --------------------------------------------------------------------------
# simplices

def _simplex_volume(vertices: np.ndarray) -> float:
    edges = vertices[1:] - vertices[0]
    m = edges.shape[0]
    gram = edges @ edges.T
    return math.sqrt(max(np.linalg.det(gram), 0.0)) / math.factorial(m)


def _kuhn_cells(m: int, n: int) -> list[np.ndarray]:
    """Integer vertex sets of the cells of ``n >= x_1 >= ... >= x_m >= 0``."""
    cells = []
    for z in itertools.product(range(n), repeat=m):
        z = np.array(z)
        # the cube cell [z, z+1] meets the region only if z is weakly decreasing
        if np.any(np.diff(z) > 0):
            continue
        for perm in itertools.permutations(range(m)):
            pts = [z.copy()]
            cur = z.copy()
            for j in perm:
                cur = cur.copy()
                cur[j] += 1
                pts.append(cur)
            pts = np.array(pts)
            if np.all(np.diff(pts, axis=1) <= 0) and pts.max() <= n and pts.min() >= 0:
                cells.append(pts)
    return cells


def edgewise_subdivision(simplex: Sequence[Sequence[float]], n: int) -> list[np.ndarray]:
    """Split an ``m``-simplex into ``n**m`` simplices of equal volume.

    ``simplex`` holds ``m + 1`` vertices (rows).  Each piece is returned as an
    ``(m + 1, dim)`` array of vertices.
    """
    verts = np.asarray(simplex, dtype=float)
    if verts.ndim != 2 or verts.shape[0] < 2:
        raise DomainError("a simplex needs at least two vertices")
    if n < 1:
        raise DomainError(f"subdivision parameter must be >= 1, got {n}")
    m = verts.shape[0] - 1
    edges = verts[1:] - verts[0]
    if np.linalg.matrix_rank(edges, tol=1e-12 * max(1.0, np.abs(edges).max())) < m:
        raise DomainError("degenerate simplex")
    if n == 1:
        return [verts.copy()]
    # x -> v0 + sum_j x_j (v_j - v_{j-1}) / n maps the path simplex onto the input
    steps = np.diff(verts, axis=0) / n
    return [verts[0] + cell @ steps for cell in _kuhn_cells(m, n)]


def _circumcenter_inside(vertices: np.ndarray, tol: float = 1e-12) -> bool:
    edges = vertices[1:] - vertices[0]
    gram = edges @ edges.T
    rhs = 0.5 * np.diag(gram)
    coef = np.linalg.solve(gram, rhs)
    bary = np.concatenate([[1.0 - coef.sum()], coef])
    return bool(np.all(bary >= -tol))


def _diameter(vertices: np.ndarray) -> float:
    diff = vertices[:, None, :] - vertices[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


# --------------------------------------------------------------------------
# sphere nets

def closed_form_eta(dim_real: int, n: int) -> float:
    """Certified shrinking factor of the subdivided cross-polytope net."""
    if n == 1:
        return 1.0 / math.sqrt(dim_real)
    return n / math.sqrt(n * n + 2 * (dim_real - 1))


def subdivision_eta(dim_real: int, n: int) -> float | None:
    """Shrinking factor from the measured sub-simplex diameter.

    Returns ``None`` when some piece of the subdivided facet has its
    circumcenter outside, in which case the diameter argument does not apply.
    """
    facet = np.eye(dim_real)
    pieces = edgewise_subdivision(facet, n)
    if not all(_circumcenter_inside(p) for p in pieces):
        return None
    diam = max(_diameter(p) for p in pieces)
    # the cross-polytope is an inner approximation with 1 + eps = sqrt(d)
    inv_sq = 1.0 + (dim_real - 1) / (2 * dim_real) * diam**2 * dim_real
    return 1.0 / math.sqrt(inv_sq)


def cross_polytope_count(dim_real: int, n: int) -> int:
    """Exact number of distinct net points."""
    return sum(2**k * math.comb(dim_real, k) * math.comb(n - 1, k - 1)
               for k in range(1, min(dim_real, n) + 1))


def _compositions(n: int, d: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``d`` summing to ``n``."""
    out = []
    for bars in itertools.combinations(range(n + d - 1), d - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(n + d - 1 - prev - 1)
        out.append(row)
    return np.array(out, dtype=np.int64).reshape(-1, d)


def _lattice_points(dim_real: int, n: int, phase_reduce: bool = False) -> np.ndarray:
    comps = _compositions(n, dim_real).astype(np.int16)
    chunks = []
    for sign_bits in range(2**dim_real):
        signs = np.array([-1 if sign_bits >> j & 1 else 1 for j in range(dim_real)], dtype=np.int16)
        flipped = signs < 0
        # only flip coordinates that are nonzero, each signed point appears once
        keep = np.all(comps[:, flipped] > 0, axis=1)
        pts = comps[keep] * signs
        if phase_reduce:
            pts = pts[_phase_canonical(pts, n)]
        chunks.append(pts)
    return np.concatenate(chunks)


def _rotate_phase(pts: np.ndarray) -> np.ndarray:
    # multiplication by i on interleaved (re, im) pairs
    out = np.empty_like(pts)
    out[:, 0::2] = -pts[:, 1::2]
    out[:, 1::2] = pts[:, 0::2]
    return out


def _phase_canonical(pts: np.ndarray, n: int) -> np.ndarray:
    """Mask of points that are the largest key in their orbit under ``i``."""
    base = 2 * n + 1
    weights = np.array([base**j for j in range(pts.shape[1] - 1, -1, -1)], dtype=np.int64)

    def key(x):
        return (x.astype(np.int64) + n) @ weights

    k0 = key(pts)
    keep = np.ones(len(pts), dtype=bool)
    rot = pts
    for _ in range(3):
        rot = _rotate_phase(rot)
        keep &= k0 > key(rot)
    return keep


@dataclass(frozen=True, eq=False)
class SphereNet:
    dim_real: int
    vertices: np.ndarray
    eta: float
    subdiv_n: int
    phase_reduced: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.dim_real:
            raise StructureError(f"vertices must have shape (N, {self.dim_real})")
        if v.shape[0] and np.max(np.abs(np.linalg.norm(v, axis=1) - 1)) > 1e-12:
            raise DomainError("net vertices must be unit vectors")
        if not 0 < self.eta <= 1:
            raise DomainError(f"eta must lie in (0, 1], got {self.eta}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def complex_vectors(self) -> np.ndarray:
        return real_to_complex(self.vertices)

    def to_dict(self) -> dict:
        return {"dim_real": self.dim_real, "n": self.subdiv_n, "eta": self.eta,
                "phase_reduced": self.phase_reduced, "vertices": self.vertices.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "SphereNet":
        return cls(int(obj["dim_real"]), np.array(obj["vertices"], dtype=float),
                   float(obj["eta"]), int(obj["n"]), bool(obj.get("phase_reduced", False)))


def cross_polytope_net(dim_real: int, n: int, cap: int = DEFAULT_CARDINALITY_CAP,
                       phase_reduce: bool = False) -> SphereNet:
    """Radially projected edgewise subdivision of the cross-polytope boundary.

    The subdivision vertices of the facet ``conv(s_1 e_1, ..., s_d e_d)`` are
    the points ``y / n`` with ``y`` integer, sign pattern ``s`` and
    ``|y|_1 = n``, so the deduplicated union over all facets is enumerated
    directly from that lattice.

    With ``phase_reduce`` the coordinates are read as complex pairs and only
    one point of each orbit under multiplication by ``i`` is kept.  The
    lattice is closed under that map, so every unit ``z`` still has a vertex
    with ``|<v|z>| >= eta``; the real convex-hull property is lost.
    """
    if dim_real < 2:
        raise DomainError("sphere nets need real dimension >= 2")
    if n < 1:
        raise DomainError("subdivision parameter must be >= 1")
    if phase_reduce and dim_real % 2:
        raise DomainError("phase reduction needs an even real dimension")
    count = cross_polytope_count(dim_real, n) // (4 if phase_reduce else 1)
    if count > cap:
        raise NetSizeError(count, cap)
    pts = _lattice_points(dim_real, n, phase_reduce).astype(float)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return SphereNet(dim_real, pts, closed_form_eta(dim_real, n), n, phase_reduce)


def facet_union_net(dim_real: int, n: int) -> np.ndarray:
    """Net points built facet by facet through :func:`edgewise_subdivision`.

    Slow reference construction; shared facet boundaries are deduplicated by
    rounding coordinates.
    """
    seen = {}
    for signs in itertools.product((1.0, -1.0), repeat=dim_real):
        facet = np.diag(signs)
        for piece in edgewise_subdivision(facet, n):
            for p in piece:
                q = p / np.linalg.norm(p)
                seen.setdefault(tuple(np.round(q, DEDUP_DECIMALS) + 0.0), q)
    return np.array(list(seen.values()))


def certify_eta(net: SphereNet, samples: int = 100_000, rng_seed: int = 0,
                chunk: int = 4096) -> float:
    """Smallest best-vertex inner product over random unit directions.

    For phase-reduced nets the inner product is the complex modulus.
    """
    if len(net) == 0:
        raise DomainError("empty net")
    rng = np.random.default_rng(rng_seed)
    worst = np.inf
    left = samples
    verts = net.complex_vectors().conj().T if net.phase_reduced else net.vertices.T
    while left > 0:
        m = min(chunk, left)
        x = rng.standard_normal((m, net.dim_real))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        if net.phase_reduced:
            best = np.abs(real_to_complex(x) @ verts).max(axis=1)
        else:
            best = (x @ verts).max(axis=1)
        worst = min(worst, float(best.min()))
        left -= m
    return worst


def exact_eta(net: SphereNet) -> float:
    """Inradius of the convex hull of the net, from its facet offsets."""
    hull = ConvexHull(net.vertices)
    return float(np.min(-hull.equations[:, -1]))


def real_to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def complex_to_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


# --------------------------------------------------------------------------
# product nets

@dataclass(frozen=True, eq=False)
class EpsNet:
    """Product net over the blocks of a partition.

    With ``exact_last_block`` the last block carries no net: searches minimise
    over it exactly, so it contributes a factor 1 to ``eta``.
    """

    partition: PartitionStructure
    local_nets: tuple[SphereNet, ...]
    exact_last_block: bool = False
    eta: float = field(init=False)
    epsilon: float = field(init=False)

    def __post_init__(self):
        expected = self.partition.k - (1 if self.exact_last_block else 0)
        if len(self.local_nets) != expected:
            raise StructureError(f"expected {expected} local nets, got {len(self.local_nets)}")
        for net, d in zip(self.local_nets, self.partition.block_dims):
            if net.dim_real != 2 * d:
                raise StructureError(f"local net of real dimension {net.dim_real} for block dimension {d}")
        eta = math.prod(net.eta for net in self.local_nets)
        object.__setattr__(self, "local_nets", tuple(self.local_nets))
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "epsilon", math.sqrt(max(0.0, 2 * (1 - eta * eta))))

    @property
    def local_etas(self) -> tuple[float, ...]:
        return tuple(net.eta for net in self.local_nets)

    @cached_property
    def local_vectors(self) -> tuple[np.ndarray, ...]:
        return tuple(net.complex_vectors() for net in self.local_nets)

    @property
    def size(self) -> int:
        return math.prod(len(net) for net in self.local_nets)

    def __len__(self) -> int:
        return self.size

    def vertex(self, index: Sequence[int]) -> ProductVertex:
        if self.exact_last_block:
            raise StructureError("vertices of a net with an exact block are not enumerable")
        vecs = [loc[i] for loc, i in zip(self.local_vectors, index)]
        return ProductVertex.normalized(self.partition, vecs)

    @cached_property
    def product_vertices(self) -> list[ProductVertex]:
        """All product vertices, row-major in the local indices."""
        ranges = [range(len(net)) for net in self.local_nets]
        return [self.vertex(idx) for idx in itertools.product(*ranges)]

    def vertex_matrix(self) -> np.ndarray:
        """State vectors of all product vertices as rows, party order."""
        if self.exact_last_block:
            raise StructureError("vertices of a net with an exact block are not enumerable")
        rows = np.ones((1, 1), dtype=complex)
        for loc in self.local_vectors:
            rows = (rows[:, None, :, None] * loc[None, :, None, :]).reshape(
                rows.shape[0] * loc.shape[0], -1)
        out = np.empty_like(rows)
        out[:, self.partition.block_to_party_index()] = rows
        return out

    def params(self) -> dict:
        return {"blocks": [list(b) for b in self.partition.blocks],
                "n": [net.subdiv_n for net in self.local_nets],
                "phase_reduced": [net.phase_reduced for net in self.local_nets],
                "exact_last_block": self.exact_last_block,
                "eta": self.eta, "epsilon": self.epsilon}


def predicted_product_size(partition: PartitionStructure, n: int | Sequence[int],
                           exact_last_block: bool = False, phase_reduce: bool = False) -> int:
    dims = partition.block_dims
    if exact_last_block:
        dims = dims[:-1]
    ns = _per_block(n, len(dims))
    div = 4 if phase_reduce else 1
    return math.prod(cross_polytope_count(2 * d, m) // div for d, m in zip(dims, ns))


def _per_block(n, count: int) -> list[int]:
    if isinstance(n, (int, np.integer)):
        return [int(n)] * count
    ns = [int(m) for m in n]
    if len(ns) < count:
        raise StructureError(f"need {count} subdivision parameters, got {len(ns)}")
    return ns[:count]


def product_net(structure: HilbertStructure, partition: PartitionStructure | None,
                n: int | Sequence[int], cap: int = DEFAULT_CARDINALITY_CAP,
                exact_last_block: bool = False, cache: "NetCache | None" = None,
                phase_reduce: bool = False) -> EpsNet:
    """Product of cross-polytope nets, one per block of ``partition``.

    ``partition`` defaults to full separability.  ``n`` is either one
    subdivision parameter or one per enumerated block.  Product states do
    not see local phases, so ``phase_reduce`` is safe for every block.
    """
    if partition is None:
        partition = PartitionStructure.finest(structure)
    if partition.structure != structure:
        raise StructureError("partition belongs to a different Hilbert structure")
    predicted = predicted_product_size(partition, n, exact_last_block, phase_reduce)
    if predicted > cap:
        raise NetSizeError(predicted, cap)
    dims = partition.block_dims[:-1] if exact_last_block else partition.block_dims
    ns = _per_block(n, len(dims))
    if cache is not None:
        nets = tuple(cache.get(2 * d, m, phase_reduce) for d, m in zip(dims, ns))
    else:
        nets = tuple(cross_polytope_net(2 * d, m, cap, phase_reduce) for d, m in zip(dims, ns))
    return EpsNet(partition, nets, exact_last_block)


class NetCache:
    """JSON files of sphere nets keyed by ``(dim_real, n)``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, dim_real: int, n: int, phase_reduce: bool = False) -> Path:
        suffix = "_phase" if phase_reduce else ""
        return self.root / f"sphere_d{dim_real}_n{n}{suffix}.json"

    def get(self, dim_real: int, n: int, phase_reduce: bool = False) -> SphereNet:
        p = self.path(dim_real, n, phase_reduce)
        if p.exists():
            return load_sphere_net(p)
        net = cross_polytope_net(dim_real, n, DEFAULT_CARDINALITY_CAP, phase_reduce)
        save_sphere_net(net, p)
        return net


def save_sphere_net(net: SphereNet, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(net.to_dict()))


def load_sphere_net(path: str | Path) -> SphereNet:
    return SphereNet.from_dict(json.loads(Path(path).read_text()))
