"""Linear message passing on directed edges: power iteration with the non-backtracking matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .bp import select_top_k
from .exceptions import DomainError
from .model import ModelParams, PlantedGraph, snr
from .validation import check_graph, check_params

DEFAULT_ALPHA = 0.25
DENSE_ORACLE_LIMIT = 10_000


def compute_T(params: ModelParams, alpha: float = DEFAULT_ALPHA) -> int:
    """Iteration count ``ceil(2 alpha log((n-K)/K) / log lambda)``, at least 1.

    Below the threshold ``lambda <= 1`` the method carries no signal and the
    schedule is undefined, so this raises instead of guessing.
    """
    lam = snr(params)
    # rounding can put an at-threshold instance a few ulps above 1
    if lam <= 1.0 or math.isclose(lam, 1.0, rel_tol=1e-12):
        raise DomainError(f"spectral schedule needs lambda > 1, got {lam:.6g}")
    T = math.ceil(2.0 * alpha * math.log((params.n - params.K) / params.K) / math.log(lam))
    return max(T, 1)


@dataclass(frozen=True)
class CenteringSchedule:
    """Centering sequences ``A_t`` (1 then 0) and ``B_t = lam^(t/2)``, with scale ``m``."""

    n: float
    K: float
    q: float
    lam: float
    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError(f"scale m must be positive, got {self.m}")

    @classmethod
    def from_params(cls, params: ModelParams) -> "CenteringSchedule":
        m = (params.n - params.K) * params.q
        if not m > 0:
            raise DomainError("m = (n-K) q must be positive")
        return cls(n=params.n, K=params.K, q=params.q, lam=snr(params), m=m)

    def A(self, t: int) -> float:
        return 1.0 if t == 0 else 0.0

    def B(self, t: int) -> float:
        return self.lam ** (t / 2.0)


def centering_term(t: int, schedule: CenteringSchedule) -> float:
    """``-q ((n-K) A_t + K B_t) / sqrt(m)``."""
    if t < 0:
        raise DomainError("t must be non-negative")
    s = schedule
    return -s.q * ((s.n - s.K) * s.A(t) + s.K * s.B(t)) / math.sqrt(s.m)


def _check_buffer(graph, theta):
    if theta.shape != (graph.n_directed,):
        raise ValueError(
            f"messages must have one entry per directed edge ({graph.n_directed}), got {theta.shape}"
        )


def spectral_iterate(graph: PlantedGraph, schedule: CenteringSchedule, theta, t: int, out=None):
    """Messages at ``t+1`` from messages at ``t``, excluding the reverse edge."""
    theta = np.asarray(theta, dtype=np.float64)
    _check_buffer(graph, theta)
    totals = np.bincount(graph.indices, weights=theta, minlength=graph.n).astype(np.float64, copy=False)
    if out is None:
        out = np.empty_like(theta)
    elif out is theta:
        raise ValueError("out must not alias the input buffer")
    else:
        _check_buffer(graph, out)
    np.take(totals, graph.src, out=out)
    out -= theta[graph.rev]
    out /= math.sqrt(schedule.m)
    out += centering_term(t, schedule)
    return out


def spectral_beliefs(graph: PlantedGraph, schedule: CenteringSchedule, theta, t: int) -> np.ndarray:
    """Vertex beliefs at ``t+1`` from all incoming messages."""
    theta = np.asarray(theta, dtype=np.float64)
    _check_buffer(graph, theta)
    totals = np.bincount(graph.indices, weights=theta, minlength=graph.n).astype(np.float64, copy=False)
    return centering_term(t, schedule) + totals / math.sqrt(schedule.m)


def build_nb_dense(graph: PlantedGraph, max_size: int = DENSE_ORACLE_LIMIT) -> np.ndarray:
    """Dense 0/1 non-backtracking matrix over directed edges in CSR order.

    ``B[e, f] = 1`` iff ``f`` starts where ``e`` ends and does not return to
    ``e``'s start. Only meant as a small-graph oracle.
    """
    size = graph.n_directed
    if size > max_size:
        raise DomainError(f"dense oracle limited to {max_size} directed edges, graph has {size}")
    src = np.asarray(graph.src)
    dst = np.asarray(graph.indices)
    B = (dst[:, None] == src[None, :]) & (src[:, None] != dst[None, :])
    return B.astype(np.uint8)


@dataclass(frozen=True)
class SpectralResult:
    values: np.ndarray
    t: int
    community: np.ndarray


def run_spectral(
    graph: PlantedGraph,
    params: ModelParams,
    alpha: float = DEFAULT_ALPHA,
    n_iter: int | None = None,
) -> SpectralResult:
    """Initialize messages at 1, run ``T-1`` updates and one belief step, keep the top ``K``.

    ``n_iter`` overrides the schedule from :func:`compute_T` (which refuses
    ``lambda <= 1``).
    """
    T = compute_T(params, alpha) if n_iter is None else int(n_iter)
    if T < 1:
        raise DomainError("iteration count must be >= 1")
    schedule = CenteringSchedule.from_params(params)
    read = np.ones(graph.n_directed)
    write = np.empty_like(read)
    for t in range(T - 1):
        spectral_iterate(graph, schedule, read, t, out=write)
        read, write = write, read
    values = spectral_beliefs(graph, schedule, read, T - 1)
    return SpectralResult(values=values, t=T, community=select_top_k(values, params.k_int))


class NonBacktrackingSpectral(ClusterMixin, BaseEstimator):
    """Weak recovery by centered non-backtracking power iteration.

    Parameters
    ----------
    community_size, p, q : float
        Model parameters (assumed known).
    alpha : float, default=0.25
        Exponent in the iteration schedule; any value below 1 is admissible.
    n_iter : int, optional
        Explicit iteration count; required when ``lambda <= 1``.
    """

    def __init__(self, community_size, p, q, alpha=DEFAULT_ALPHA, n_iter=None):
        self.community_size = community_size
        self.p = p
        self.q = q
        self.alpha = alpha
        self.n_iter = n_iter

    def fit(self, X, y=None):
        graph = check_graph(X)
        params = check_params(graph.n, self.community_size, self.p, self.q)
        result = run_spectral(graph, params, alpha=self.alpha, n_iter=self.n_iter)
        self.beliefs_ = result.values
        self.n_iter_ = result.t
        self.community_ = result.community
        self.labels_ = np.zeros(graph.n, dtype=np.int64)
        self.labels_[self.community_] = 1
        return self
