"""Planted dense subgraph instances: parameters, sparse graph container, sampler, file I/O."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from . import _rng
from .exceptions import DomainError, GraphFormatError


class CommunityMode(str, enum.Enum):
    FIXED = "fixed"
    BINOMIAL = "binomial"


@dataclass(frozen=True)
class ModelParams:
    """Coordinates ``(n, K, p, q)`` of a planted dense subgraph model.

    ``K`` may be non-integral; it is rounded to the nearest integer wherever a
    set of size ``K`` is formed (see :attr:`k_int`).
    """

    n: int
    K: float
    p: float
    q: float
    community_mode: CommunityMode = CommunityMode.FIXED

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "community_mode", CommunityMode(self.community_mode))
        if not (1 <= self.K <= self.n):
            raise DomainError(f"K must satisfy 1 <= K <= n, got K={self.K}, n={self.n}")
        if not (0.0 <= self.q <= self.p <= 1.0):
            raise DomainError(f"need 0 <= q <= p <= 1, got p={self.p}, q={self.q}")

    @property
    def k_int(self) -> int:
        return int(math.floor(self.K + 0.5))

    @property
    def lam(self) -> float:
        return snr(self)

    @property
    def nu(self) -> float:
        return nu(self)

    @property
    def ratio(self) -> float:
        if self.q == 0:
            raise DomainError("p/q undefined for q = 0")
        return self.p / self.q

    def replace(self, **changes) -> "ModelParams":
        kw = dict(n=self.n, K=self.K, p=self.p, q=self.q, community_mode=self.community_mode)
        kw.update(changes)
        return ModelParams(**kw)


def snr(params: ModelParams) -> float:
    """Signal-to-noise ratio ``K^2 (p-q)^2 / ((n-K) q)``."""
    n, K, p, q = params.n, params.K, params.p, params.q
    if q <= 0:
        raise DomainError("snr requires q > 0")
    if K >= n:
        raise DomainError("snr requires K < n")
    return K * K * (p - q) ** 2 / ((n - K) * q)


def nu(params: ModelParams) -> float:
    """Log prior odds against membership, ``log((n-K)/K)``."""
    if not 0 < params.K < params.n:
        raise DomainError("nu requires 0 < K < n")
    return math.log((params.n - params.K) / params.K)


def _index_dtype(size):
    return np.int32 if size < np.iinfo(np.int32).max else np.int64


@dataclass(frozen=True, eq=False)
class PlantedGraph:
    """Undirected simple graph stored as directed edges in CSR order.

    Directed edge ``e`` runs ``src[e] -> indices[e]``; edges leaving vertex
    ``i`` occupy ``indptr[i]:indptr[i+1]`` sorted by target. ``rev[e]`` is the
    id of the opposite edge, so ``rev[rev] == arange``.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    src: np.ndarray
    rev: np.ndarray
    degree: np.ndarray = field(repr=False)

    @classmethod
    def from_edges(cls, n, edges) -> "PlantedGraph":
        """Build from an ``(m, 2)`` array of undirected edges (any orientation)."""
        n = int(n)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        u, v = edges[:, 0], edges[:, 1]
        if edges.size and (u.min() < 0 or v.min() < 0 or u.max() >= n or v.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(u == v):
            raise ValueError("self-loops are not allowed")
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        key = src * n + dst
        order = np.argsort(key, kind="stable")
        key = key[order]
        if key.size and np.any(key[1:] == key[:-1]):
            raise ValueError("duplicate edges are not allowed")
        src = src[order]
        dst = dst[order]
        # input edge j and j + m are opposite; map through the sort permutation
        m = u.size
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        rev = inv[(order + m) % max(2 * m, 1)]
        counts = np.bincount(src, minlength=n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        vt = _index_dtype(max(n, 1))
        et = _index_dtype(max(key.size, 1))
        graph = cls(
            n=n,
            indptr=indptr,
            indices=dst.astype(vt),
            src=src.astype(vt),
            rev=rev.astype(et),
            degree=counts.astype(np.int64),
        )
        for arr in (graph.indptr, graph.indices, graph.src, graph.rev, graph.degree):
            arr.setflags(write=False)
        return graph

    @classmethod
    def from_adjacency(cls, A) -> "PlantedGraph":
        A = sparse.coo_matrix(A)
        mask = A.row < A.col
        return cls.from_edges(A.shape[0], np.column_stack([A.row[mask], A.col[mask]]))

    @property
    def n_edges(self) -> int:
        return int(self.indices.size // 2)

    @property
    def n_directed(self) -> int:
        return int(self.indices.size)

    def edges(self) -> np.ndarray:
        """Undirected edges as an ``(m, 2)`` array with ``u < v``, lexicographically sorted."""
        mask = self.src < self.indices
        return np.column_stack([self.src[mask], self.indices[mask]]).astype(np.int64)

    def neighbors(self, i) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def to_scipy(self) -> sparse.csr_matrix:
        data = np.ones(self.n_directed, dtype=np.int8)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def subgraph(self, vertices) -> "PlantedGraph":
        """Induced subgraph on ``vertices``, renumbered in the given order."""
        vertices = np.asarray(vertices, dtype=np.int64)
        new_id = np.full(self.n, -1, dtype=np.int64)
        new_id[vertices] = np.arange(vertices.size)
        e = self.edges()
        a, b = new_id[e[:, 0]], new_id[e[:, 1]]
        keep = (a >= 0) & (b >= 0)
        return PlantedGraph.from_edges(vertices.size, np.column_stack([a[keep], b[keep]]))

    def permute(self, perm) -> "PlantedGraph":
        """Relabel vertex ``i`` as ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return PlantedGraph.from_edges(self.n, perm[self.edges()])

    def __eq__(self, other):
        if not isinstance(other, PlantedGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.rev, other.rev)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CommunityLabels:
    """Membership indicator ``sigma`` of the planted community."""

    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.uint8)
        if sigma.size and sigma.max() > 1:
            raise ValueError("labels must be 0/1")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_members(cls, n, members) -> "CommunityLabels":
        sigma = np.zeros(n, dtype=np.uint8)
        sigma[np.asarray(members, dtype=np.int64)] = 1
        return cls(sigma)

    @property
    def n(self) -> int:
        return int(self.sigma.size)

    @property
    def size(self) -> int:
        return int(self.sigma.sum())

    @property
    def members(self) -> np.ndarray:
        return np.flatnonzero(self.sigma)

    def __eq__(self, other):
        if not isinstance(other, CommunityLabels):
            return NotImplemented
        return np.array_equal(self.sigma, other.sigma)

    __hash__ = None


def _geometric_positions(rng, total, prob):
    """Sorted positions in ``range(total)`` kept independently with probability ``prob``.

    Geometric skipping: expected work proportional to the number kept.
    """
    if total <= 0 or prob <= 0.0:
        return np.empty(0, dtype=np.int64)
    if prob >= 1.0:
        return np.arange(total, dtype=np.int64)
    chunks = []
    pos = -1
    while True:
        remaining = (total - 1 - pos) * prob
        size = int(remaining + 6.0 * math.sqrt(remaining) + 64)
        hits = pos + np.cumsum(rng.geometric(prob, size=size), dtype=np.int64)
        inside = hits[hits < total]
        chunks.append(inside)
        if inside.size < hits.size:
            break
        pos = int(hits[-1])
    return np.concatenate(chunks)


def _decode_pairs(idx):
    """Map ``b(b-1)/2 + a`` (``0 <= a < b``) back to ``(a, b)``."""
    idx = np.asarray(idx, dtype=np.int64)
    b = np.floor((1.0 + np.sqrt(1.0 + 8.0 * idx.astype(np.float64))) / 2.0).astype(np.int64)
    too_big = b * (b - 1) // 2 > idx
    b -= too_big
    too_small = (b + 1) * b // 2 <= idx
    b += too_small
    a = idx - b * (b - 1) // 2
    return a, b


def generate(params: ModelParams, seed: int = 0):
    """Sample ``(graph, labels)`` from the planted dense subgraph model.

    Community members are a uniform subset of the drawn size; pairs inside the
    community are joined with probability ``p`` and all other pairs with
    probability ``q``. The same ``(params, seed)`` gives identical output.
    """
    n = params.n
    rng_c = _rng.stream(seed, _rng.COMMUNITY)
    rng_e = _rng.stream(seed, _rng.EDGES)
    if params.community_mode is CommunityMode.BINOMIAL:
        k = int(rng_c.binomial(n, params.K / n))
    else:
        k = params.k_int
    perm = rng_c.permutation(n)
    within = k * (k - 1) // 2
    total = n * (n - 1) // 2
    try:
        pos_in = _geometric_positions(rng_e, within, params.p)
        pos_out = _geometric_positions(rng_e, total - within, params.q) + within
    except MemoryError as exc:
        raise MemoryError(f"not enough memory to sample graph with n={n}") from exc
    a, b = _decode_pairs(np.concatenate([pos_in, pos_out]))
    edges = np.column_stack([perm[a], perm[b]])
    graph = PlantedGraph.from_edges(n, edges)
    labels = CommunityLabels.from_members(n, perm[:k])
    return graph, labels


def labels_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".labels")


def save_graph(graph: PlantedGraph, labels: CommunityLabels | None, path, labels_path=None):
    """Write ``n m`` then one ``u v`` line per edge; labels go to ``<path>.labels``."""
    path = Path(path)
    e = graph.edges()
    with open(path, "w") as fh:
        fh.write(f"{graph.n} {e.shape[0]}\n")
        if e.size:
            np.savetxt(fh, e, fmt="%d")
    if labels is not None:
        lp = Path(labels_path) if labels_path is not None else labels_path_for(path)
        with open(lp, "w") as fh:
            if labels.n:
                np.savetxt(fh, labels.sigma, fmt="%d")


def _parse_int_lines(lines, ncols, path, first_lineno):
    try:
        flat = np.array(" ".join(lines).split(), dtype=np.int64)
        if flat.size == ncols * len(lines) and all(len(s.split()) == ncols for s in lines):
            return flat.reshape(len(lines), ncols)
    except ValueError:
        pass
    for off, line in enumerate(lines):
        parts = line.split()
        if len(parts) != ncols:
            raise GraphFormatError(f"expected {ncols} integer field(s), got {line!r}", first_lineno + off, path)
        try:
            [int(x) for x in parts]
        except ValueError:
            raise GraphFormatError(f"non-integer field in {line!r}", first_lineno + off, path) from None
    raise GraphFormatError("unparseable content", first_lineno, path)


def load_graph(path, labels_path=None):
    """Inverse of :func:`save_graph`. Labels are ``None`` when no labels file exists."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise GraphFormatError("empty file", 1, path)
    header = lines[0].split()
    if len(header) != 2:
        raise GraphFormatError("header must be 'n m'", 1, path)
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError:
        raise GraphFormatError("header must contain two integers", 1, path) from None
    body = lines[1:]
    if len(body) != m:
        raise GraphFormatError(f"header declares {m} edges, found {len(body)}", len(lines), path)
    edges = _parse_int_lines(body, 2, path, 2) if m else np.empty((0, 2), dtype=np.int64)
    if m:
        ok = (edges[:, 0] >= 0) & (edges[:, 0] < edges[:, 1]) & (edges[:, 1] < n)
        bad = np.flatnonzero(~ok)
        if bad.size:
            u, v = edges[bad[0]]
            raise GraphFormatError(f"edge ({u}, {v}) must satisfy 0 <= u < v < n", int(bad[0]) + 2, path)
    try:
        graph = PlantedGraph.from_edges(n, edges)
    except ValueError as exc:
        raise GraphFormatError(str(exc), None, path) from None

    lp = Path(labels_path) if labels_path is not None else labels_path_for(path)
    if not lp.exists():
        if labels_path is not None:
            raise FileNotFoundError(lp)
        return graph, None
    with open(lp) as fh:
        llines = fh.read().splitlines()
    while llines and not llines[-1].strip():
        llines.pop()
    if len(llines) != n:
        raise GraphFormatError(f"expected {n} label lines, found {len(llines)}", len(llines) + 1, lp)
    sigma = _parse_int_lines(llines, 1, lp, 1).ravel() if n else np.empty(0, dtype=np.int64)
    bad = np.flatnonzero((sigma != 0) & (sigma != 1))
    if bad.size:
        raise GraphFormatError("label must be 0 or 1", int(bad[0]) + 1, lp)
    return graph, CommunityLabels(sigma)
