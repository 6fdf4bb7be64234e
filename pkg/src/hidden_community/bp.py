"""Belief propagation for weak recovery of a planted community."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .exceptions import DomainError
from .model import ModelParams, PlantedGraph
from .validation import check_graph, check_is_fitted, check_params

DEFAULT_TBAR0 = 10


def log_star(x: float) -> int:
    """Number of natural-log applications needed to bring ``x`` to at most 1."""
    if not x > 0:
        raise DomainError(f"log_star requires x > 0, got {x}")
    k = 0
    while x > 1.0:
        x = math.log(x)
        k += 1
    return k


def edge_gain(x, c):
    """Stable ``log((c e^x + 1) / (e^x + 1))``; nondecreasing in ``x`` with range ``[0, log c]``."""
    if not (c >= 1.0 and math.isfinite(c)):
        raise DomainError(f"edge_gain requires finite c >= 1, got {c}")
    x = np.asarray(x, dtype=np.float64)
    ex = np.exp(-np.abs(x))
    with np.errstate(over="ignore"):
        pos = math.log(c) + np.log1p(ex / c) - np.log1p(ex)
        neg = np.log1p(c * ex) - np.log1p(ex)
    out = np.where(x >= 0, pos, neg)
    return float(out) if out.ndim == 0 else out


def _check_bp_params(params: ModelParams):
    if params.q <= 0:
        raise DomainError("message updates require q > 0")
    return -params.K * (params.p - params.q), params.nu, params.p / params.q


def _check_buffer(graph, messages, name="messages"):
    if messages.shape != (graph.n_directed,):
        raise ValueError(
            f"{name} must have one entry per directed edge ({graph.n_directed}), got {messages.shape}"
        )


def _vertex_totals(graph, params, messages):
    offset, nu, c = _check_bp_params(params)
    gain = edge_gain(messages - nu, c)
    gain = np.atleast_1d(gain)
    totals = np.bincount(graph.indices, weights=gain, minlength=graph.n).astype(np.float64, copy=False)
    totals += offset
    return totals, gain


def bp_iterate(graph: PlantedGraph, params: ModelParams, messages, out=None):
    """One synchronous message update.

    Each vertex forms the total of its incoming gains once, and the message
    to ``j`` subtracts the term that came from ``j``; O(|E|) work.
    """
    messages = np.asarray(messages, dtype=np.float64)
    _check_buffer(graph, messages)
    totals, gain = _vertex_totals(graph, params, messages)
    if out is None:
        out = np.empty_like(messages)
    elif out is messages:
        raise ValueError("out must not alias the input buffer")
    else:
        _check_buffer(graph, out, "out")
    np.take(totals, graph.src, out=out)
    out -= gain[graph.rev]
    return out


def bp_beliefs(graph: PlantedGraph, params: ModelParams, messages) -> np.ndarray:
    """Vertex beliefs from all incoming messages (no exclusion)."""
    messages = np.asarray(messages, dtype=np.float64)
    _check_buffer(graph, messages)
    totals, _ = _vertex_totals(graph, params, messages)
    return totals


@dataclass(frozen=True)
class BpConfig:
    """Iteration schedule: ``t_f`` if given, else ``tbar0 + log*(nu) + 2``."""

    t_f: int | None = None
    tbar0: int = DEFAULT_TBAR0

    def resolve(self, params: ModelParams) -> int:
        if self.t_f is not None:
            if self.t_f < 1:
                raise DomainError(f"t_f must be >= 1, got {self.t_f}")
            return int(self.t_f)
        nu = params.nu
        return int(self.tbar0) + (log_star(nu) if nu > 0 else 0) + 2


@dataclass(frozen=True)
class VertexBeliefs:
    values: np.ndarray
    t: int


def run_bp(graph: PlantedGraph, params: ModelParams, config: BpConfig | int | None = None) -> VertexBeliefs:
    """Run ``t_f - 1`` message iterations from zero, then combine into vertex beliefs."""
    if config is None:
        config = BpConfig()
    elif isinstance(config, int):
        config = BpConfig(t_f=config)
    t_f = config.resolve(params)
    if params.q == 0 and params.p > 0:
        # q -> 0 limit: any edge certifies membership of both endpoints
        values = np.where(graph.degree > 0, np.inf, -params.K * params.p)
        return VertexBeliefs(values=values, t=t_f)
    _check_bp_params(params)
    read = np.zeros(graph.n_directed)
    write = np.empty_like(read)
    for _ in range(t_f - 1):
        bp_iterate(graph, params, read, out=write)
        read, write = write, read
    return VertexBeliefs(values=bp_beliefs(graph, params, read), t=t_f)


def select_top_k(beliefs, k) -> np.ndarray:
    """Indices of the ``k`` largest beliefs, ties to the smaller index, returned sorted."""
    beliefs = np.asarray(beliefs, dtype=np.float64)
    k = int(k)
    if k > beliefs.size or k < 0:
        raise DomainError(f"cannot select {k} of {beliefs.size} vertices")
    order = np.argsort(-beliefs, kind="stable")
    return np.sort(order[:k])


def threshold_estimator(beliefs, nu) -> np.ndarray:
    """Vertices whose belief is at least ``nu``."""
    return np.flatnonzero(np.asarray(beliefs) >= nu)


class BeliefPropagation(ClusterMixin, BaseEstimator):
    """Weak recovery of a planted community by belief propagation.

    Parameters
    ----------
    community_size : float
        Expected community size ``K``.
    p, q : float
        Edge probabilities inside the community and elsewhere (``p > q > 0``).
    n_iter : int, optional
        Total iteration count ``t_f``. Defaults to ``tbar0 + log*(nu) + 2``.
    tbar0 : int, default=10
        Additive constant of the default schedule.

    Attributes
    ----------
    beliefs_ : ndarray of shape (n,)
        Final vertex log-likelihood ratio estimates.
    community_ : ndarray
        The ``round(K)`` vertices with largest belief.
    labels_ : ndarray of shape (n,)
        0/1 membership indicator of ``community_``.
    n_iter_ : int
    """

    def __init__(self, community_size, p, q, n_iter=None, tbar0=DEFAULT_TBAR0):
        self.community_size = community_size
        self.p = p
        self.q = q
        self.n_iter = n_iter
        self.tbar0 = tbar0

    def fit(self, X, y=None):
        graph = check_graph(X)
        params = check_params(graph.n, self.community_size, self.p, self.q)
        result = run_bp(graph, params, BpConfig(t_f=self.n_iter, tbar0=self.tbar0))
        self.beliefs_ = result.values
        self.n_iter_ = result.t
        self.community_ = select_top_k(result.values, params.k_int)
        self.labels_ = np.zeros(graph.n, dtype=np.int64)
        self.labels_[self.community_] = 1
        return self

    def threshold_community(self):
        """Alternative estimate ``{i : belief_i >= nu}``."""
        check_is_fitted(self, "beliefs_")
        n = self.beliefs_.size
        return threshold_estimator(self.beliefs_, math.log((n - self.community_size) / self.community_size))
