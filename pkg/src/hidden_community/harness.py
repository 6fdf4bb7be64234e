"""Scoring, seeded parameter sweeps and the graph-versus-tree coupling check."""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _rng
from .bp import BpConfig, run_bp, select_top_k
from .exact import DEFAULT_DELTA, bp_plus_cleanup, degree_threshold_estimator
from .exceptions import DomainError
from .model import CommunityLabels, CommunityMode, ModelParams, generate
from .spectral import DEFAULT_ALPHA, run_spectral
from .tree import TreeParams, simulate_root_llrs

ALGORITHMS = ("bp", "spectral", "degree", "exact")


@dataclass(frozen=True)
class RecoveryMetrics:
    false_positives: int
    false_negatives: int
    community_size: int
    n: int

    @property
    def symmetric_difference(self) -> int:
        return self.false_positives + self.false_negatives

    @property
    def normalized_error(self) -> float:
        if self.community_size == 0:
            return 0.0 if self.symmetric_difference == 0 else math.inf
        return self.symmetric_difference / self.community_size

    @property
    def exact(self) -> bool:
        return self.symmetric_difference == 0

    @property
    def pe0(self) -> float:
        n0 = self.n - self.community_size
        return self.false_positives / n0 if n0 else 0.0

    @property
    def pe1(self) -> float:
        return self.false_negatives / self.community_size if self.community_size else 0.0

    @property
    def pe(self) -> float:
        pi1 = self.community_size / self.n
        return (1.0 - pi1) * self.pe0 + pi1 * self.pe1


def metrics(estimate, labels) -> RecoveryMetrics:
    """Compare an estimated vertex set with the true labels."""
    sigma = labels.sigma if isinstance(labels, CommunityLabels) else np.asarray(labels)
    n = sigma.size
    est = np.unique(np.asarray(estimate, dtype=np.int64))
    if est.size and (est[0] < 0 or est[-1] >= n):
        raise DomainError("estimate contains vertices outside [0, n)")
    chosen = np.zeros(n, dtype=bool)
    chosen[est] = True
    truth = sigma.astype(bool)
    return RecoveryMetrics(
        false_positives=int(np.count_nonzero(chosen & ~truth)),
        false_negatives=int(np.count_nonzero(truth & ~chosen)),
        community_size=int(truth.sum()),
        n=n,
    )


def q_for_lambda(lam: float, n: float, K: float, ratio: float) -> float:
    """Background density giving signal-to-noise ``lam`` at ``p = ratio * q``."""
    if not ratio > 1:
        raise DomainError("p/q must exceed 1")
    if not 0 < K < n:
        raise DomainError("need 0 < K < n")
    return lam * (n - K) / (K * K * (ratio - 1.0) ** 2)


@dataclass(frozen=True)
class SweepSpec:
    algorithm: str
    lambdas: tuple
    n: int
    K: float
    ratio: float
    trials: int = 1
    seed: int = 0
    community_mode: CommunityMode = CommunityMode.FIXED
    # iteration count for bp/spectral/exact; None uses each algorithm's default
    n_iter: int | None = None
    alpha: float = DEFAULT_ALPHA
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise DomainError(f"algorithm must be one of {ALGORITHMS}")
        if len(self.lambdas) == 0:
            raise DomainError("lambda grid is empty")
        if self.trials < 1:
            raise DomainError("trials must be >= 1")
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))


@dataclass(frozen=True)
class TrialRow:
    algorithm: str
    point: int
    trial: int
    lam: float
    n: int
    K: float
    p: float
    q: float
    seed: int
    t: int
    symmetric_difference: int
    normalized_error: float
    exact: bool
    seconds: float


@dataclass(frozen=True)
class PointSummary:
    algorithm: str
    point: int
    lam: float
    n: int
    K: float
    p: float
    q: float
    base_seed: int
    t: int
    trials: int
    mean_error: float
    se_error: float
    exact_fraction: float
    skipped: str = ""


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)


def _run_algorithm(spec: SweepSpec, graph, params, seed):
    if spec.algorithm == "bp":
        res = run_bp(graph, params, BpConfig(t_f=spec.n_iter))
        return select_top_k(res.values, params.k_int), res.t
    if spec.algorithm == "spectral":
        res = run_spectral(graph, params, spec.alpha, spec.n_iter)
        return res.community, res.t
    if spec.algorithm == "degree":
        return degree_threshold_estimator(graph, params), 0
    config = BpConfig(t_f=spec.n_iter)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = bp_plus_cleanup(graph, params, spec.delta, config, seed)
    return res.community, config.resolve(params)


def run_trial(spec: SweepSpec, point: int, trial: int, params: ModelParams) -> TrialRow:
    seed = _rng.derive_seed(spec.seed, point, trial)
    start = time.perf_counter()
    graph, labels = generate(params, seed=seed)
    community, t = _run_algorithm(spec, graph, params, seed)
    m = metrics(community, labels)
    return TrialRow(
        algorithm=spec.algorithm,
        point=point,
        trial=trial,
        lam=spec.lambdas[point],
        n=params.n,
        K=params.K,
        p=params.p,
        q=params.q,
        seed=seed,
        t=t,
        symmetric_difference=m.symmetric_difference,
        normalized_error=m.normalized_error,
        exact=m.exact,
        seconds=time.perf_counter() - start,
    )


def point_params(spec: SweepSpec, point: int) -> ModelParams:
    q = q_for_lambda(spec.lambdas[point], spec.n, spec.K, spec.ratio)
    p = spec.ratio * q
    if p > 1.0:
        raise DomainError(f"derived p = {p:.6g} exceeds 1")
    return ModelParams(n=spec.n, K=spec.K, p=p, q=q, community_mode=spec.community_mode)


def sweep(spec: SweepSpec, threads: int = 1) -> SweepResult:
    """Run every (point, trial) of ``spec``; points with an invalid derived ``p`` are skipped."""
    result = SweepResult(spec=spec)
    jobs, valid = [], {}
    for point, lam in enumerate(spec.lambdas):
        try:
            valid[point] = point_params(spec, point)
        except DomainError as exc:
            q = lam * (spec.n - spec.K) / (spec.K**2 * (spec.ratio - 1.0) ** 2) if spec.ratio > 1 else math.nan
            result.summary.append(
                PointSummary(spec.algorithm, point, lam, spec.n, spec.K, spec.ratio * q, q, spec.seed, 0, 0, math.nan, math.nan, math.nan, str(exc))
            )
            continue
        jobs.extend((point, trial) for trial in range(spec.trials))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda job: run_trial(spec, job[0], job[1], valid[job[0]]), jobs))
    else:
        rows = [run_trial(spec, point, trial, valid[point]) for point, trial in jobs]
    rows.sort(key=lambda r: (r.point, r.trial))
    result.rows = rows
    for point, params in valid.items():
        errs = np.array([r.normalized_error for r in rows if r.point == point])
        exact = np.array([r.exact for r in rows if r.point == point])
        se = float(errs.std(ddof=1) / math.sqrt(errs.size)) if errs.size > 1 else math.nan
        t = next(r.t for r in rows if r.point == point)
        result.summary.append(
            PointSummary(spec.algorithm, point, spec.lambdas[point], params.n, params.K, params.p, params.q, spec.seed, t, int(errs.size), float(errs.mean()), se, float(exact.mean()))
        )
    result.summary.sort(key=lambda s: s.point)
    return result


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_rows(path, rows, header):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


TRIAL_HEADER = [
    "algorithm", "point", "trial", "lambda", "n", "K", "p", "q", "seed", "t",
    "sym_diff", "normalized_error", "exact", "seconds",
]
SUMMARY_HEADER = [
    "algorithm", "point", "lambda", "n", "K", "p", "q", "base_seed", "t",
    "trials", "mean_error", "se_error", "exact_fraction", "skipped",
]


def write_sweep(result: SweepResult, path, summary_path=None):
    """Trial rows to ``path``; per-point summary to ``summary_path``."""
    write_rows(path, [
        (r.algorithm, r.point, r.trial, r.lam, r.n, r.K, r.p, r.q, r.seed, r.t,
         r.symmetric_difference, r.normalized_error, r.exact, r.seconds)
        for r in result.rows
    ], TRIAL_HEADER)
    if summary_path is not None:
        write_rows(summary_path, [
            (s.algorithm, s.point, s.lam, s.n, s.K, s.p, s.q, s.base_seed, s.t,
             s.trials, s.mean_error, s.se_error, s.exact_fraction, s.skipped)
            for s in result.summary
        ], SUMMARY_HEADER)


@dataclass(frozen=True)
class CouplingResult:
    t: int
    ks: dict  # label -> KS statistic
    pvalue: dict
    graph_samples: dict
    tree_samples: dict
    warnings: tuple


MIN_SAMPLES = 100
KS_DECIMALS = 10


def graph_beliefs(graph, params: ModelParams, t: int) -> np.ndarray:
    """Vertex beliefs after ``t`` rounds of message passing from zero messages."""
    if t == 0:
        return np.zeros(graph.n)
    return run_bp(graph, params, BpConfig(t_f=t)).values


def coupling_check(params: ModelParams, t: int, vertex_samples: int, tree_trials: int, seed: int = 0) -> CouplingResult:
    """Two-sample KS distance between graph beliefs and tree root ratios, per true label."""
    if t < 0:
        raise DomainError("t must be >= 0")
    notes = []
    d = params.n * params.p
    if (2.0 + d) ** t > params.n / 10.0:
        notes.append(f"(2 + np)^t = {(2.0 + d) ** t:.3g} is not small relative to n = {params.n}")
    graph, labels = generate(params, seed=_rng.derive_seed(seed, _rng.TRIAL))
    rng = _rng.stream(seed, _rng.SAMPLE)
    ks, pv, ng, nt = {}, {}, {}, {}
    if params.p == params.q or t == 0:
        values = np.zeros(graph.n)
        tp = None
    else:
        values = graph_beliefs(graph, params, t)
        tp = TreeParams.from_model(params)
    for label in (0, 1):
        pool = np.flatnonzero(labels.sigma == label)
        take = min(vertex_samples, pool.size)
        chosen = rng.choice(pool, size=take, replace=False) if take else pool
        g = values[chosen]
        if tp is None:
            z = np.zeros(tree_trials)
        else:
            z, alive = simulate_root_llrs(tp, t, np.full(tree_trials, label, np.uint8), _rng.stream(seed, _rng.TREE, label))
            z = z[alive, t]
        if g.size < MIN_SAMPLES or z.size < MIN_SAMPLES:
            notes.append(f"label {label}: only {g.size} graph and {z.size} tree samples; KS has low power")
        if g.size and z.size:
            # equal lattice values from the two routes may differ in the last ulp
            res = stats.ks_2samp(np.round(g, KS_DECIMALS), np.round(z, KS_DECIMALS))
            ks[label], pv[label] = float(res.statistic), float(res.pvalue)
        else:
            ks[label], pv[label] = math.nan, math.nan
        ng[label], nt[label] = int(g.size), int(z.size)
    return CouplingResult(t=t, ks=ks, pvalue=pv, graph_samples=ng, tree_samples=nt, warnings=tuple(notes))
