import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from hidden_community.bp import BpConfig
from hidden_community.exact import (
    BPPlusCleanup,
    DegreeThreshold,
    bp_plus_cleanup,
    degree_threshold,
    degree_threshold_estimator,
    fold_size,
    n_folds_for,
    partition,
    vote_counts,
)
from hidden_community.exceptions import DomainError
from hidden_community.model import ModelParams, PlantedGraph, generate

REF = ModelParams(1100, 100, 0.2, 0.1)


def random_graph(rng, n, prob):
    A = np.triu(rng.random((n, n)) < prob, 1)
    return PlantedGraph.from_edges(n, np.argwhere(A))


class TestPartition:
    @given(st.integers(1, 500), st.sampled_from([0.5, 0.25, 0.2, 0.1, 1 / 11, 1 / 3]), st.integers(0, 2**32))
    @settings(max_examples=200)
    def test_covers_and_balanced(self, n, delta, seed):
        folds = round(1 / delta)
        if n < folds:
            with pytest.raises(DomainError):
                partition(n, delta, seed)
            return
        part = partition(n, delta, seed)
        assert part.n_folds == folds
        joined = np.concatenate(part.subsets)
        assert np.array_equal(np.sort(joined), np.arange(n))
        sizes = [s.size for s in part.subsets]
        assert max(sizes) - min(sizes) <= 1

    def test_deterministic_per_seed(self):
        a, b, c = partition(100, 0.1, 3), partition(100, 0.1, 3), partition(100, 0.1, 4)
        assert all(np.array_equal(x, y) for x, y in zip(a.subsets, b.subsets))
        assert not all(np.array_equal(x, y) for x, y in zip(a.subsets, c.subsets))

    def test_membership_is_uniform(self):
        hits = np.zeros(12)
        for s in range(600):
            hits += np.isin(np.arange(12), partition(12, 0.25, s).subsets[0])
        # each vertex lands in fold 0 with probability 1/4
        assert np.all(np.abs(hits / 600 - 0.25) < 0.08)

    @pytest.mark.parametrize("delta", [0.0, 1.0, 0.3, -0.1])
    def test_bad_delta(self, delta):
        with pytest.raises(DomainError):
            n_folds_for(delta)


class TestVotes:
    def test_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 40))
            g = random_graph(rng, n, rng.uniform(0, 0.4))
            perm = rng.permutation(n)
            cut = int(rng.integers(0, n + 1))
            withheld, rest = perm[:cut], perm[cut:]
            est = rest[rng.random(rest.size) < 0.5]
            A = g.to_scipy().toarray()
            expected = A[np.ix_(withheld, est)].sum(axis=1) if withheld.size else np.zeros(0)
            assert np.array_equal(vote_counts(g, est, withheld), expected)

    def test_rejects_overlap(self):
        g = PlantedGraph.from_edges(3, [[0, 1]])
        with pytest.raises(ValueError):
            vote_counts(g, [0, 1], [1, 2])

    def test_only_withheld_rows_are_touched(self):
        g = PlantedGraph.from_edges(4, [[0, 1], [2, 3]])
        assert vote_counts(g, [1, 3], [0]).tolist() == [1]
        assert vote_counts(g, [1], [2]).tolist() == [0]


class TestHelpers:
    def test_fold_size(self):
        assert fold_size(100, 1 / 11) == 91
        assert fold_size(110, 1 / 11) == 100
        assert fold_size(10, 0.5) == 5
        assert fold_size(7, 0.5) == 4

    def test_degree_threshold_value(self):
        assert degree_threshold(REF) == pytest.approx(114.95, rel=1e-14)
        with pytest.raises(DomainError):
            degree_threshold(ModelParams(100, 10, 0.1, 0.1))

    def test_degree_estimator(self):
        g = PlantedGraph.from_edges(5, [[0, 1], [0, 2], [0, 3], [1, 2]])
        params = ModelParams(5, 2, 1.0, 0.2)
        # cut = 1 + 0.4 = 1.4
        assert degree_threshold_estimator(g, params).tolist() == [0, 1, 2]


class TestCleanup:
    def test_warns_below_bp_threshold(self):
        # lambda = 0.3, so lambda (1 - delta) e is about 0.74
        params = ModelParams(1100, 100, 0.06, 0.03)
        g, _ = generate(params, seed=0)
        with pytest.warns(RuntimeWarning):
            bp_plus_cleanup(g, params, config=BpConfig(t_f=2))

    def test_no_warning_above(self):
        params = ModelParams(1000, 100, 0.42, 0.1)
        g, _ = generate(params, seed=0)
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            bp_plus_cleanup(g, params, config=BpConfig(t_f=2))

    def test_disjoint_cliques_recovered_exactly(self):
        # p = 1, q = 0: the community is a clique with no other edges
        params = ModelParams(60, 12, 1.0, 0.0)
        g, lab = generate(params, seed=3)
        res = bp_plus_cleanup(g, params, delta=0.25, config=BpConfig(t_f=3))
        assert res.community.tolist() == lab.members.tolist()

    def test_structure_of_result(self):
        params = ModelParams(1000, 100, 0.42, 0.1)
        g, lab = generate(params, seed=1)
        res = bp_plus_cleanup(g, params, config=BpConfig(t_f=3), seed=2)
        assert res.partition.n_folds == 11
        assert res.community.size == 100
        for withheld, est in zip(res.partition.subsets, res.fold_estimates):
            assert est.size == fold_size(100, 1 / 11)
            assert not np.isin(est, withheld).any()
            assert np.array_equal(res.votes[withheld], vote_counts(g, est, withheld))

    def test_deterministic(self):
        params = ModelParams(500, 50, 0.5, 0.1)
        g, _ = generate(params, seed=4)
        a = bp_plus_cleanup(g, params, config=BpConfig(t_f=2), seed=7)
        b = bp_plus_cleanup(g, params, config=BpConfig(t_f=2), seed=7)
        assert np.array_equal(a.community, b.community) and np.array_equal(a.votes, b.votes)


class TestEstimators:
    def test_cleanup_estimator(self):
        params = ModelParams(500, 50, 0.5, 0.1)
        g, _ = generate(params, seed=5)
        est = BPPlusCleanup(50, 0.5, 0.1, n_iter=2, random_state=1).fit(g)
        ref = bp_plus_cleanup(g, params, config=BpConfig(t_f=2), seed=1)
        assert np.array_equal(est.community_, ref.community)
        assert est.labels_.sum() == 50
        assert clone(est).get_params() == est.get_params()

    def test_degree_estimator(self):
        g, _ = generate(REF, seed=6)
        est = DegreeThreshold(100, 0.2, 0.1).fit(g)
        assert est.threshold_ == pytest.approx(114.95)
        assert np.array_equal(np.flatnonzero(est.labels_), np.flatnonzero(g.degree > 114.95))
        assert math.isfinite(est.threshold_)
