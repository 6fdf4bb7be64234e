"""Exact recovery: successive withholding, belief propagation on each fold, and a voting cleanup."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from . import _rng
from .bp import DEFAULT_TBAR0, BpConfig, run_bp, select_top_k
from .exceptions import DomainError
from .model import ModelParams, PlantedGraph, snr
from .validation import check_graph, check_params

DEFAULT_DELTA = 1.0 / 11.0


@dataclass(frozen=True)
class Partition:
    """Disjoint vertex subsets covering ``range(n)``; sizes differ by at most one."""

    subsets: tuple
    delta: float

    @property
    def n_folds(self) -> int:
        return len(self.subsets)


def n_folds_for(delta: float) -> int:
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    folds = round(1.0 / delta)
    if abs(folds * delta - 1.0) > 1e-9:
        raise DomainError(f"1/delta must be an integer, got delta={delta}")
    return folds


def partition(n: int, delta: float, seed: int = 0) -> Partition:
    """Uniformly random split of ``range(n)`` into ``1/delta`` near-equal subsets."""
    folds = n_folds_for(delta)
    if n < folds:
        raise DomainError(f"cannot split {n} vertices into {folds} nonempty folds")
    perm = _rng.stream(seed, _rng.PARTITION).permutation(n)
    subsets = tuple(np.sort(part) for part in np.array_split(perm, folds))
    return Partition(subsets=subsets, delta=delta)


def vote_counts(graph: PlantedGraph, estimate, withheld) -> np.ndarray:
    """For each withheld vertex, the number of its neighbors inside ``estimate``.

    Touches only the adjacency lists of ``withheld``.
    """
    estimate = np.asarray(estimate, dtype=np.int64)
    withheld = np.asarray(withheld, dtype=np.int64)
    in_estimate = np.zeros(graph.n, dtype=bool)
    in_estimate[estimate] = True
    if in_estimate[withheld].any():
        raise ValueError("estimate and withheld set must be disjoint")
    starts = graph.indptr[withheld]
    lens = graph.degree[withheld]
    total = int(lens.sum())
    if total == 0:
        return np.zeros(withheld.size, dtype=np.int64)
    owner = np.repeat(np.arange(withheld.size), lens)
    offsets = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
    edge_ids = np.repeat(starts, lens) + offsets
    hits = in_estimate[graph.indices[edge_ids]]
    return np.bincount(owner, weights=hits, minlength=withheld.size).astype(np.int64)


def fold_size(K: float, delta: float) -> int:
    # ceil with a guard against K(1-delta) landing a rounding error above an integer
    return int(math.ceil(K * (1.0 - delta) - 1e-9))


@dataclass(frozen=True)
class ExactResult:
    community: np.ndarray
    votes: np.ndarray
    fold_estimates: tuple
    partition: Partition


def bp_plus_cleanup(
    graph: PlantedGraph,
    params: ModelParams,
    delta: float = DEFAULT_DELTA,
    config: BpConfig | None = None,
    seed: int = 0,
) -> ExactResult:
    """Withhold each fold in turn, run BP on the rest, let withheld vertices vote.

    Votes are counted only on edges between a fold and the estimate computed
    without it; the final answer is the ``K`` vertices with most votes, ties
    to the smaller index.
    """
    config = config or BpConfig()
    if params.q > 0 and snr(params) * (1.0 - delta) * math.e <= 1.0:
        warnings.warn(
            "lambda (1 - delta) e <= 1: belief propagation is not expected to reach weak recovery",
            RuntimeWarning,
            stacklevel=2,
        )
    part = partition(graph.n, delta, seed)
    k_fold = fold_size(params.K, delta)
    votes = np.zeros(graph.n, dtype=np.int64)
    estimates = []
    for withheld in part.subsets:
        keep = np.ones(graph.n, dtype=bool)
        keep[withheld] = False
        retained = np.flatnonzero(keep)
        sub = graph.subgraph(retained)
        sub_params = params.replace(n=retained.size, K=k_fold)
        beliefs = run_bp(sub, sub_params, config).values
        est = retained[select_top_k(beliefs, k_fold)]
        estimates.append(est)
        votes[withheld] = vote_counts(graph, est, withheld)
    community = select_top_k(votes, params.k_int)
    return ExactResult(community=community, votes=votes, fold_estimates=tuple(estimates), partition=part)


def degree_threshold(params: ModelParams) -> float:
    """Degree cut ``n q + (K-1)(p-q)/2``."""
    if params.p == params.q:
        raise DomainError("degree thresholding needs p > q")
    return params.n * params.q + (params.K - 1) * (params.p - params.q) / 2.0


def degree_threshold_estimator(graph: PlantedGraph, params: ModelParams) -> np.ndarray:
    """Vertices whose degree exceeds :func:`degree_threshold`."""
    return np.flatnonzero(graph.degree > degree_threshold(params))


class BPPlusCleanup(ClusterMixin, BaseEstimator):
    """Exact recovery by belief propagation on withheld folds followed by voting.

    Parameters
    ----------
    community_size, p, q : float
        Model parameters (assumed known).
    delta : float, default=1/11
        Fold fraction; ``1/delta`` must be an integer.
    n_iter, tbar0 : int
        Belief propagation schedule, as in :class:`~hidden_community.bp.BeliefPropagation`.
    random_state : int, default=0
        Seed of the fold assignment.
    """

    def __init__(self, community_size, p, q, delta=DEFAULT_DELTA, n_iter=None, tbar0=DEFAULT_TBAR0, random_state=0):
        self.community_size = community_size
        self.p = p
        self.q = q
        self.delta = delta
        self.n_iter = n_iter
        self.tbar0 = tbar0
        self.random_state = random_state

    def fit(self, X, y=None):
        graph = check_graph(X)
        params = check_params(graph.n, self.community_size, self.p, self.q, require_q_positive=False)
        result = bp_plus_cleanup(
            graph,
            params,
            delta=self.delta,
            config=BpConfig(t_f=self.n_iter, tbar0=self.tbar0),
            seed=self.random_state,
        )
        self.votes_ = result.votes
        self.community_ = result.community
        self.labels_ = np.zeros(graph.n, dtype=np.int64)
        self.labels_[self.community_] = 1
        return self


class DegreeThreshold(ClusterMixin, BaseEstimator):
    """Baseline: keep vertices with degree above ``n q + (K-1)(p-q)/2``."""

    def __init__(self, community_size, p, q):
        self.community_size = community_size
        self.p = p
        self.q = q

    def fit(self, X, y=None):
        graph = check_graph(X)
        params = check_params(graph.n, self.community_size, self.p, self.q, require_q_positive=False)
        self.threshold_ = degree_threshold(params)
        self.community_ = degree_threshold_estimator(graph, params)
        self.labels_ = np.zeros(graph.n, dtype=np.int64)
        self.labels_[self.community_] = 1
        return self
