"""Poisson Galton-Watson tree model: sampling, exact root likelihood ratios, moment analysis.

Every vertex of label 1 has ``Pois(Kp)`` label-1 children, every vertex of
label 0 has ``Pois(Kq)``, and all vertices have ``Pois((n-K)q)`` label-0
children. The root log-likelihood ratio for depth ``t`` obeys the same
recursion as graph belief propagation, with leaves at 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _rng
from .bp import edge_gain
from .exceptions import DomainError
from .model import ModelParams

DEFAULT_MAX_NODES = 10_000_000
# target number of bottom-level nodes held in memory per batch
_BATCH_BUDGET = 4_000_000


class RootMode(str, enum.Enum):
    PRIOR = "prior"
    FORCE0 = "force0"
    FORCE1 = "force1"


@dataclass(frozen=True)
class TreeParams:
    """Offspring means of the tree model plus ``nu`` and ``c = p/q``."""

    kp: float
    kq: float
    mq: float
    nu: float

    def __post_init__(self):
        if self.kq <= 0 or self.mq <= 0 or self.kp < self.kq:
            raise DomainError("tree model needs Kp >= Kq > 0 and (n-K)q > 0")

    @classmethod
    def from_model(cls, params: ModelParams) -> "TreeParams":
        K, n = params.K, params.n
        return cls(kp=K * params.p, kq=K * params.q, mq=(n - K) * params.q, nu=params.nu)

    @classmethod
    def from_lambda(cls, lam: float, nu: float, c: float) -> "TreeParams":
        """Parameterize by signal-to-noise ratio, log prior odds and density ratio."""
        if not c > 1:
            raise DomainError("from_lambda needs c > 1")
        kq = lam * math.exp(nu) / (c - 1.0) ** 2
        return cls(kp=c * kq, kq=kq, mq=lam * math.exp(2.0 * nu) / (c - 1.0) ** 2, nu=nu)

    @property
    def c(self) -> float:
        return self.kp / self.kq

    @property
    def lam(self) -> float:
        return (self.kp - self.kq) ** 2 / self.mq

    @property
    def offset(self) -> float:
        """``-K(p-q)``."""
        return -(self.kp - self.kq)

    @property
    def d1(self) -> float:
        return self.kp + self.mq

    @property
    def d0(self) -> float:
        return self.kq + self.mq

    @property
    def pi1(self) -> float:
        return 1.0 / (1.0 + math.exp(self.nu))

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1


def _as_tree_params(params) -> TreeParams:
    return params if isinstance(params, TreeParams) else TreeParams.from_model(params)


class _PoissonTable:
    """Exact-to-rounding Poisson sampler by table inversion with a guide table."""

    GUIDE = 4096

    def __init__(self, mean: float):
        self.mean = mean
        kmax = int(mean + 15.0 * math.sqrt(mean) + 40)
        pmf = stats.poisson.pmf(np.arange(kmax + 1), mean)
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        self.cdf = cdf
        self.guide = np.searchsorted(cdf, np.arange(self.GUIDE) / self.GUIDE, side="right")

    def draw(self, rng, size) -> np.ndarray:
        u = rng.random(size)
        j = self.guide[(u * self.GUIDE).astype(np.intp)]
        todo = np.flatnonzero(u >= self.cdf[j])
        while todo.size:
            j[todo] += 1
            todo = todo[u[todo] >= self.cdf[j[todo]]]
        return j


class _Sampler:
    def __init__(self, tp: TreeParams):
        self.tp = tp
        self.ones = {1: _PoissonTable(tp.kp), 0: _PoissonTable(tp.kq)}
        self.zeros = _PoissonTable(tp.mq)
        self.total = {1: _PoissonTable(tp.d1), 0: _PoissonTable(tp.d0)}
        self.g0 = edge_gain(-tp.nu, tp.c)
        kmax = max(t.cdf.size for t in self.total.values())
        # gain sent up by a depth-one subtree whose root has k children
        self.gain_table = np.atleast_1d(edge_gain(tp.offset + np.arange(kmax) * self.g0 - tp.nu, tp.c))

    def by_label(self, tables, labels, rng):
        out = np.empty(labels.size, dtype=np.int64)
        is1 = labels == 1
        n1 = int(is1.sum())
        out[is1] = tables[1].draw(rng, n1)
        out[~is1] = tables[0].draw(rng, labels.size - n1)
        return out


def _segment_sums(vals, lens):
    out = np.zeros(lens.size)
    nz = lens > 0
    if vals.size:
        out[nz] = np.add.reduceat(vals, (np.cumsum(lens) - lens)[nz])
    return out


def _children_labels(cnt, L):
    parent = np.repeat(np.arange(cnt.size), cnt)
    rank = np.arange(parent.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    return parent, (rank < np.repeat(L, cnt)).astype(np.uint8)


@dataclass
class _Levels:
    labels: list  # per depth, uint8 labels
    parents: list  # per depth >= 1, index of parent in previous depth
    counts: list  # per depth, number of children
    # per node at depth horizon-2: summed gains of its depth-one subtrees
    bottom: np.ndarray | None
    alive: np.ndarray  # per root, False if discarded by the node cap


def _grow(tp, horizon, root_labels, rng, sampler, max_nodes):
    """Grow trees level by level for root values up to ``horizon``.

    Depths below ``horizon - 1`` are materialized; the vertices at depth
    ``horizon - 1`` only contribute through their child counts, looked up in
    ``sampler.gain_table``.
    """
    root_labels = np.asarray(root_labels, dtype=np.uint8)
    B = root_labels.size
    lv = _Levels(labels=[root_labels], parents=[None], counts=[], bottom=None, alive=np.ones(B, dtype=bool))
    if horizon == 0:
        return lv
    if horizon == 1:
        lv.counts.append(sampler.by_label(sampler.total, root_labels, rng))
        return lv
    root_of = np.arange(B)
    totals = np.ones(B, dtype=np.int64)
    for d in range(horizon - 1):
        lab = lv.labels[d]
        L = sampler.by_label(sampler.ones, lab, rng)
        M = sampler.zeros.draw(rng, lab.size)
        cnt = L + M
        if max_nodes is not None:
            totals += np.bincount(root_of, weights=cnt, minlength=B).astype(np.int64)
            over = lv.alive & (totals > max_nodes)
            if over.any():
                lv.alive &= ~over
                dead = ~lv.alive[root_of]
                cnt[dead] = L[dead] = M[dead] = 0
        lv.counts.append(cnt)
        if d < horizon - 2:
            parent, labels = _children_labels(cnt, L)
            lv.labels.append(labels)
            lv.parents.append(parent)
            root_of = root_of[parent]
        else:
            table = sampler.gain_table
            n1 = sampler.total[1].draw(rng, int(L.sum()))
            n0 = sampler.total[0].draw(rng, int(M.sum()))
            lv.bottom = _segment_sums(table[n1], L) + _segment_sums(table[n0], M)
    return lv


def _root_llrs(tp: TreeParams, lv: _Levels, horizon: int, sampler) -> np.ndarray:
    """Root log-likelihood ratios for every truncation depth ``0..horizon``."""
    B = lv.labels[0].size
    out = np.zeros((B, horizon + 1))
    if horizon == 0:
        return out
    out[:, 1] = tp.offset + lv.counts[0] * sampler.g0
    for s in range(2, horizon + 1):
        if s == horizon:
            vals = tp.offset + lv.bottom
        else:
            gains = sampler.gain_table[lv.counts[s - 1]]
            vals = tp.offset + _segment_sums(gains, lv.counts[s - 2])
        for d in range(s - 3, -1, -1):
            gains = np.atleast_1d(edge_gain(vals - tp.nu, tp.c))
            vals = tp.offset + _segment_sums(gains, lv.counts[d])
        out[:, s] = vals
    return out


def _expected_bottom(tp: TreeParams, horizon: int) -> float:
    d = max(tp.d1, tp.d0, 1.0)
    return d ** max(horizon - 1, 0)


def simulate_root_llrs(params, horizon, root_labels, rng, max_nodes=DEFAULT_MAX_NODES):
    """Root log-likelihood ratios ``Lambda^0..Lambda^horizon`` for independent trees.

    Returns ``(llrs, alive)``; rows of trees discarded by the node cap are NaN.
    """
    tp = _as_tree_params(params)
    root_labels = np.asarray(root_labels, dtype=np.uint8)
    sampler = _Sampler(tp)
    batch = max(1, int(_BATCH_BUDGET / _expected_bottom(tp, horizon)))
    parts, alive_parts = [], []
    for start in range(0, root_labels.size, batch):
        lv = _grow(tp, horizon, root_labels[start : start + batch], rng, sampler, max_nodes)
        vals = _root_llrs(tp, lv, horizon, sampler)
        vals[~lv.alive] = np.nan
        parts.append(vals)
        alive_parts.append(lv.alive)
    if not parts:
        return np.zeros((0, horizon + 1)), np.zeros(0, dtype=bool)
    return np.concatenate(parts), np.concatenate(alive_parts)


@dataclass(frozen=True)
class LabeledTree:
    """Tree truncated at ``depth``; level ``d`` lists labels of vertices at distance ``d``."""

    labels: tuple
    parents: tuple
    depth: int

    @property
    def root_label(self) -> int:
        return int(self.labels[0][0])

    @property
    def n_nodes(self) -> int:
        return sum(lab.size for lab in self.labels)

    def children_count(self, d: int) -> np.ndarray:
        if d >= self.depth:
            return np.zeros(self.labels[d].size, dtype=np.int64)
        return np.bincount(self.parents[d + 1], minlength=self.labels[d].size)


def _root_label(tp, mode, rng):
    mode = RootMode(mode)
    if mode is RootMode.FORCE0:
        return 0
    if mode is RootMode.FORCE1:
        return 1
    return int(rng.random() < tp.pi1)


def sample_tree(params, depth: int, root_mode=RootMode.PRIOR, seed: int = 0) -> LabeledTree:
    """One labeled tree truncated at ``depth``."""
    if depth < 0:
        raise DomainError("depth must be non-negative")
    tp = _as_tree_params(params)
    rng = _rng.stream(seed, _rng.TREE)
    root = _root_label(tp, root_mode, rng)
    sampler = _Sampler(tp)
    labels, parents = [np.array([root], dtype=np.uint8)], [None]
    for _ in range(depth):
        L = sampler.by_label(sampler.ones, labels[-1], rng)
        M = sampler.zeros.draw(rng, labels[-1].size)
        parent, lab = _children_labels(L + M, L)
        labels.append(lab)
        parents.append(parent)
    return LabeledTree(labels=tuple(labels), parents=tuple(parents), depth=depth)


def tree_bp(tree: LabeledTree, params) -> float:
    """Exact root log-likelihood ratio of ``tree``, evaluated leaves to root."""
    tp = _as_tree_params(params)
    if tree.depth == 0:
        return 0.0
    vals = np.zeros(tree.labels[tree.depth].size)
    for d in range(tree.depth - 1, -1, -1):
        gains = np.atleast_1d(edge_gain(vals - tp.nu, tp.c))
        vals = tp.offset + np.bincount(tree.parents[d + 1], weights=gains, minlength=tree.labels[d].size)
    return float(vals[0])


def map_classify(llr, nu):
    """MAP label: 1 iff the log-likelihood ratio reaches ``nu``."""
    out = (np.asarray(llr) >= nu).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def _mean_se(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        nan = np.full(x.shape[1:], np.nan)
        return nan, nan.copy()
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full_like(mean, np.inf)
    return mean, se


def _b_term(z, nu):
    # e^z / (1 + e^(z - nu)) without overflow
    return 1.0 / (np.exp(-z) + math.exp(-nu))


@dataclass(frozen=True)
class MomentSeries:
    """Monte Carlo moments of the root log-likelihood ratio, indexed by depth ``t``.

    ``z1``/``z0`` hold the raw samples (trials x depths) for roots forced to
    label 1 and label 0.
    """

    t: np.ndarray
    a_hat: np.ndarray
    a_se: np.ndarray
    b_hat: np.ndarray
    b_se: np.ndarray
    rho_hat: np.ndarray
    rho_se: np.ndarray
    mart_hat: np.ndarray
    mart_se: np.ndarray
    pe_hat: np.ndarray
    pe_se: np.ndarray
    pe0_hat: np.ndarray
    pe1_hat: np.ndarray
    pi0: float
    pi1: float
    z0: np.ndarray
    z1: np.ndarray
    discarded: int


def estimate_moments_mc(params, horizon: int, trials: int, seed: int = 0, max_nodes=DEFAULT_MAX_NODES) -> MomentSeries:
    """Monte Carlo estimates of ``a_t``, ``b_t``, the Bhattacharyya coefficient and MAP errors.

    ``a_t = E[e^Z1]``, ``b_t = E[e^Z1 / (1 + e^(Z1 - nu))]`` from label-1
    roots; ``rho_t = E[e^(Z0/2)]`` and ``E[e^Z0]`` from label-0 roots; the
    weighted MAP error combines both with prior weights.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    tp = _as_tree_params(params)
    rng1 = _rng.stream(seed, _rng.TREE, 1)
    rng0 = _rng.stream(seed, _rng.TREE, 0)
    z1, alive1 = simulate_root_llrs(tp, horizon, np.ones(trials, np.uint8), rng1, max_nodes)
    z0, alive0 = simulate_root_llrs(tp, horizon, np.zeros(trials, np.uint8), rng0, max_nodes)
    z1, z0 = z1[alive1], z0[alive0]
    nu = tp.nu
    a_hat, a_se = _mean_se(np.exp(z1))
    b_hat, b_se = _mean_se(_b_term(z1, nu))
    rho_hat, rho_se = _mean_se(np.exp(z0 / 2.0))
    mart_hat, mart_se = _mean_se(np.exp(z0))
    e1 = (z1 < nu).astype(np.float64)
    e0 = (z0 >= nu).astype(np.float64)
    pe1, pe1_se = _mean_se(e1)
    pe0, pe0_se = _mean_se(e0)
    pe = tp.pi0 * pe0 + tp.pi1 * pe1
    pe_se = np.sqrt((tp.pi0 * pe0_se) ** 2 + (tp.pi1 * pe1_se) ** 2)
    return MomentSeries(
        t=np.arange(horizon + 1),
        a_hat=a_hat,
        a_se=a_se,
        b_hat=b_hat,
        b_se=b_se,
        rho_hat=rho_hat,
        rho_se=rho_se,
        mart_hat=mart_hat,
        mart_se=mart_se,
        pe_hat=pe,
        pe_se=pe_se,
        pe0_hat=pe0,
        pe1_hat=pe1,
        pi0=tp.pi0,
        pi1=tp.pi1,
        z0=z0,
        z1=z1,
        discarded=int((~alive1).sum() + (~alive0).sum()),
    )


@dataclass(frozen=True)
class ErrorRates:
    t: np.ndarray
    pe_hat: np.ndarray
    pe_se: np.ndarray
    pe0_hat: np.ndarray
    pe0_se: np.ndarray
    pe1_hat: np.ndarray
    pe1_se: np.ndarray
    n0: int
    n1: int
    pi0: float
    pi1: float


def error_rate_mc(params, horizon: int, trials: int, seed: int = 0, max_nodes=DEFAULT_MAX_NODES) -> ErrorRates:
    """MAP error rates with root labels drawn from the prior.

    The weighted rate is ``pi0 * pe0 + pi1 * pe1`` with the per-class rates
    measured on the roots of each label.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    tp = _as_tree_params(params)
    rng = _rng.stream(seed, _rng.TREE, 2)
    roots = (rng.random(trials) < tp.pi1).astype(np.uint8)
    z, alive = simulate_root_llrs(tp, horizon, roots, rng, max_nodes)
    z, roots = z[alive], roots[alive]
    wrong = map_classify(z, tp.nu) != roots[:, None]
    w0, w1 = wrong[roots == 0], wrong[roots == 1]
    nan = np.full(horizon + 1, np.nan)
    pe0, pe0_se = _mean_se(w0) if w0.shape[0] else (nan, nan)
    pe1, pe1_se = _mean_se(w1) if w1.shape[0] else (nan, nan)
    if w0.shape[0] == 1:
        pe0_se = np.zeros(horizon + 1)
    if w1.shape[0] == 1:
        pe1_se = np.zeros(horizon + 1)
    pe = tp.pi0 * pe0 + tp.pi1 * pe1
    pe_se = np.sqrt((tp.pi0 * pe0_se) ** 2 + (tp.pi1 * pe1_se) ** 2)
    return ErrorRates(
        t=np.arange(horizon + 1),
        pe_hat=pe,
        pe_se=pe_se,
        pe0_hat=pe0,
        pe0_se=pe0_se,
        pe1_hat=pe1,
        pe1_se=pe1_se,
        n0=int(w0.shape[0]),
        n1=int(w1.shape[0]),
        pi0=tp.pi0,
        pi1=tp.pi1,
    )


@dataclass(frozen=True)
class MomentEnvelope:
    lower: np.ndarray
    upper: np.ndarray
    # certified[t]: every step up to t started at or below the cutoff
    certified: np.ndarray
    # first t whose lower value exceeds nu / (2 (C - lam)), or None
    crossing: int | None


def moment_envelope(lam: float, nu: float, c: float, horizon: int) -> MomentEnvelope:
    """Deterministic envelope for ``b_t``.

    Upper: ``u_{t+1} = exp(lam u_t)`` since ``b_t <= a_t``. Lower:
    ``l_{t+1} = max(l_t, exp(lam l_t)(1 - e^(-nu/2)))``. The growth step is
    justified only below the cutoff ``nu / (2(C - lam))`` with
    ``C = lam (2 + c)``; ``certified`` marks entries reached that way and
    ``crossing`` is the first ``t`` above the cutoff. Both start at ``b_0 = 1 / (1 + e^-nu)``.
    """
    if not lam > 0:
        raise DomainError("lam must be positive")
    if not c >= 1:
        raise DomainError("c must be >= 1")
    C = lam * (2.0 + c)
    cutoff = nu / (2.0 * (C - lam))
    b0 = 1.0 / (1.0 + math.exp(-nu))
    lower = np.empty(horizon + 1)
    upper = np.empty(horizon + 1)
    certified = np.zeros(horizon + 1, dtype=bool)
    lower[0] = upper[0] = b0
    certified[0] = True
    shrink = 1.0 - math.exp(-nu / 2.0)
    with np.errstate(over="ignore"):
        for t in range(horizon):
            lower[t + 1] = max(lower[t], float(np.exp(lam * lower[t])) * shrink)
            certified[t + 1] = certified[t] and lower[t] <= cutoff
            upper[t + 1] = np.exp(lam * upper[t])
    above = np.flatnonzero(lower > cutoff)
    crossing = int(above[0]) if above.size else None
    return MomentEnvelope(lower=lower, upper=upper, certified=certified, crossing=crossing)


def error_bounds(rho: float, pi0: float, pi1: float):
    """Bhattacharyya bounds ``(pi1 pi0 rho^2, sqrt(pi1 pi0) rho)`` on the MAP error."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [0, 1], got {rho}")
    if abs(pi0 + pi1 - 1.0) > 1e-12 or min(pi0, pi1) < 0:
        raise DomainError("priors must be nonnegative and sum to 1")
    return pi1 * pi0 * rho * rho, math.sqrt(pi1 * pi0) * rho


def next_rho_bounds(lam: float, b: float, c: float):
    """Bounds ``(exp(-lam b / 8), exp(-lam b / (8 c^1.5)))`` on the next-depth Bhattacharyya coefficient."""
    if not c >= 1:
        raise DomainError("c must be >= 1")
    return math.exp(-lam * b / 8.0), math.exp(-lam * b / (8.0 * c**1.5))


@dataclass(frozen=True)
class ConverseBounds:
    symmetric_difference: float
    type_sum: float
    type_sum_at_threshold: float
    valid: bool


def converse_values(lam: float, K: float, n: float) -> ConverseBounds:
    """Lower bounds for local algorithms, valid when ``lam <= 1/e``."""
    damp = math.exp(-lam * math.e / 4.0)
    return ConverseBounds(
        symmetric_difference=K * (n - K) / n * damp,
        type_sum=0.5 * damp,
        type_sum_at_threshold=0.5 * math.exp(-0.25),
        valid=lam <= 1.0 / math.e,
    )
