import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import logsumexp

from hidden_community import _rng
from hidden_community.exceptions import DomainError
from hidden_community.model import ModelParams
from hidden_community.tree import (
    RootMode,
    TreeParams,
    _PoissonTable,
    converse_values,
    error_bounds,
    error_rate_mc,
    estimate_moments_mc,
    map_classify,
    moment_envelope,
    next_rho_bounds,
    sample_tree,
    simulate_root_llrs,
    tree_bp,
)

SMALL = TreeParams(kp=2.0, kq=1.0, mq=3.0, nu=math.log(3.0))


def log_likelihood(tree, tp, d, node, label):
    """log P(subtree at ``node`` | its label), summing out all descendant labels."""
    if d == tree.depth:
        return 0.0
    kids = np.flatnonzero(tree.parents[d + 1] == node)
    mean = tp.d1 if label == 1 else tp.d0
    total = stats.poisson.logpmf(kids.size, mean)
    p1 = (tp.kp if label == 1 else tp.kq) / mean
    for child in kids:
        total += logsumexp([
            math.log(p1) + log_likelihood(tree, tp, d + 1, child, 1),
            math.log1p(-p1) + log_likelihood(tree, tp, d + 1, child, 0),
        ])
    return total


def brute_llr(tree, tp):
    return log_likelihood(tree, tp, 0, 0, 1) - log_likelihood(tree, tp, 0, 0, 0)


class TestParams:
    def test_from_model(self):
        tp = TreeParams.from_model(ModelParams(1100, 100, 0.2, 0.1))
        assert (tp.kp, tp.kq, tp.mq) == pytest.approx((20.0, 10.0, 100.0))
        assert tp.lam == pytest.approx(1.0)
        assert tp.offset == pytest.approx(-10.0)
        assert tp.pi1 == pytest.approx(1 / 11)

    @given(st.floats(0.01, 20), st.floats(0.0, 8), st.floats(1.01, 50))
    def test_from_lambda_roundtrip(self, lam, nu, c):
        tp = TreeParams.from_lambda(lam, nu, c)
        assert tp.lam == pytest.approx(lam, rel=1e-9)
        assert tp.c == pytest.approx(c, rel=1e-9)
        assert tp.mq / tp.kq == pytest.approx(math.exp(nu), rel=1e-9)

    def test_invalid(self):
        with pytest.raises(DomainError):
            TreeParams(kp=1.0, kq=2.0, mq=1.0, nu=0.0)
        with pytest.raises(DomainError):
            TreeParams.from_lambda(1.0, 1.0, 1.0)


class TestSampler:
    @pytest.mark.parametrize("mean", [0.3, 4.0, 60.0, 900.0])
    def test_poisson_table(self, mean):
        rng = np.random.default_rng(1)
        x = _PoissonTable(mean).draw(rng, 200_000)
        assert abs(x.mean() - mean) <= 5 * math.sqrt(mean / x.size)
        assert abs(x.var() / mean - 1) < 0.03
        lo, hi = stats.poisson.ppf([1e-4, 1 - 1e-4], mean)
        edges = np.unique(np.r_[np.arange(lo, hi + 1), np.inf]) if hi - lo < 60 else np.unique(
            np.r_[stats.poisson.ppf(np.linspace(0.02, 0.98, 30), mean), np.inf]
        )
        # counts in bins [e_i, e_{i+1})
        cdf = stats.poisson.cdf(edges - 1, mean)
        expected = np.diff(np.r_[0.0, cdf]) * x.size
        observed = np.bincount(np.searchsorted(edges, x, side="right"), minlength=edges.size)[: edges.size]
        keep = expected > 20
        assert stats.chisquare(observed[keep], expected[keep] * observed[keep].sum() / expected[keep].sum()).pvalue > 1e-4

    def test_root_modes(self):
        assert sample_tree(SMALL, 2, RootMode.FORCE1, seed=0).root_label == 1
        assert sample_tree(SMALL, 2, RootMode.FORCE0, seed=0).root_label == 0
        roots = [sample_tree(SMALL, 0, RootMode.PRIOR, seed=s).root_label for s in range(2000)]
        # pi1 = 1/4
        assert abs(np.mean(roots) - 0.25) < 0.04

    def test_tree_shape(self):
        tree = sample_tree(SMALL, 3, RootMode.FORCE1, seed=4)
        assert len(tree.labels) == 4
        for d in range(1, 4):
            assert tree.parents[d].size == tree.labels[d].size
            assert np.all(np.diff(tree.parents[d]) >= 0)
            assert tree.children_count(d - 1).sum() == tree.labels[d].size
        assert tree.n_nodes == sum(lab.size for lab in tree.labels)

    def test_label_proportions(self):
        # children of a label-1 parent are label 1 with probability kp / d1
        ones = total = 0
        for s in range(400):
            tree = sample_tree(SMALL, 1, RootMode.FORCE1, seed=s)
            ones += int(tree.labels[1].sum())
            total += tree.labels[1].size
        assert abs(ones / total - 2 / 5) < 0.04


class TestExactLikelihood:
    def test_depth_one_closed_form(self):
        for s in range(20):
            tree = sample_tree(SMALL, 1, seed=s)
            N = tree.labels[1].size
            expected = -(SMALL.d1 - SMALL.d0) + N * math.log(SMALL.d1 / SMALL.d0)
            assert tree_bp(tree, SMALL) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("depth", [2, 3])
    def test_matches_brute_force(self, depth):
        for s in range(60):
            tree = sample_tree(SMALL, depth, seed=s)
            if tree.n_nodes > 400:
                continue
            assert tree_bp(tree, SMALL) == pytest.approx(brute_llr(tree, SMALL), abs=1e-9)

    def test_depth_zero(self):
        assert tree_bp(sample_tree(SMALL, 0, seed=1), SMALL) == 0.0

    def test_map_rule(self):
        assert map_classify(1.1, 1.0) == 1 and map_classify(1.0, 1.0) == 1 and map_classify(0.9, 1.0) == 0
        assert map_classify(np.array([0.0, 2.0]), 1.0).tolist() == [0, 1]


class TestFastPath:
    @pytest.mark.parametrize("label", [0, 1])
    def test_matches_explicit_trees(self, label):
        mode = RootMode.FORCE1 if label else RootMode.FORCE0
        slow = np.array([tree_bp(sample_tree(SMALL, 2, mode, seed=s), SMALL) for s in range(3000)])
        fast, alive = simulate_root_llrs(SMALL, 2, np.full(3000, label, np.uint8), _rng.stream(9, label))
        assert alive.all()
        res = stats.ks_2samp(np.round(slow, 10), np.round(fast[:, 2], 10))
        assert res.pvalue > 1e-3

    def test_columns(self):
        z, _ = simulate_root_llrs(SMALL, 3, np.ones(50, np.uint8), np.random.default_rng(0))
        assert z.shape == (50, 4)
        assert np.all(z[:, 0] == 0.0)
        # depth 1 only sees the child count, a point on the lattice offset + N g0
        n1 = (z[:, 1] - SMALL.offset) / math.log(SMALL.d1 / SMALL.d0)
        assert np.allclose(n1, np.round(n1), atol=1e-9)

    def test_deterministic(self):
        roots = np.array([0, 1, 1, 0] * 50, np.uint8)
        a, _ = simulate_root_llrs(SMALL, 3, roots, _rng.stream(5, 1))
        b, _ = simulate_root_llrs(SMALL, 3, roots, _rng.stream(5, 1))
        assert np.array_equal(a, b)

    def test_node_cap(self):
        tp = TreeParams.from_lambda(2.0, math.log(4), 2.0)
        z, alive = simulate_root_llrs(tp, 4, np.ones(200, np.uint8), np.random.default_rng(1), max_nodes=50)
        assert not alive.all()
        assert np.all(np.isnan(z[~alive])) and np.all(np.isfinite(z[alive]))
        ms = estimate_moments_mc(tp, 4, 200, seed=1, max_nodes=50)
        assert ms.discarded > 0

    def test_empty_batch(self):
        z, alive = simulate_root_llrs(SMALL, 2, np.zeros(0, np.uint8), np.random.default_rng(0))
        assert z.shape == (0, 3) and alive.size == 0


@pytest.fixture(scope="module")
def series():
    return estimate_moments_mc(TreeParams.from_lambda(0.8, math.log(4), 2.5), 3, 20000, seed=3)


class TestMoments:
    def test_label_zero_martingale(self, series):
        # E[e^Z0] = 1 at every depth
        assert np.all(np.abs(series.mart_hat - 1) <= 5 * series.mart_se + 1e-12)

    def test_a_recursion(self, series):
        # a_{t+1} = exp(lam b_t)
        pred = np.exp(0.8 * series.b_hat[:-1])
        assert np.all(np.abs(series.a_hat[1:] - pred) <= 5 * series.a_se[1:] + 5 * 0.8 * pred * series.b_se[:-1])

    def test_depth_one_exact(self, series):
        tp = TreeParams.from_lambda(0.8, math.log(4), 2.5)
        assert series.a_hat[0] == 1.0
        a1 = math.exp((tp.d1 - tp.d0) ** 2 / tp.d0)
        assert abs(series.a_hat[1] - a1) <= 5 * series.a_se[1]

    def test_ordering(self, series):
        assert np.all(series.b_hat <= series.a_hat + 1e-12)
        assert series.b_hat[0] == pytest.approx(0.8, rel=1e-14)
        assert np.all(series.rho_hat <= 1 + 1e-12)
        assert np.all(np.diff(series.b_hat) >= -5 * series.b_se[1:])

    def test_error_within_bhattacharyya_bounds(self, series):
        for t in range(4):
            lo, hi = error_bounds(min(series.rho_hat[t], 1.0), series.pi0, series.pi1)
            assert lo - 5 * series.pe_se[t] <= series.pe_hat[t] <= hi + 5 * series.pe_se[t]

    def test_prior_sampling_agrees(self, series):
        er = error_rate_mc(TreeParams.from_lambda(0.8, math.log(4), 2.5), 3, 20000, seed=4)
        assert er.n0 + er.n1 == 20000
        assert np.all(np.abs(er.pe_hat - series.pe_hat) <= 5 * np.hypot(er.pe_se, series.pe_se) + 1e-12)
        # with no observations the MAP guess is the majority label
        assert er.pe_hat[0] == pytest.approx(er.pi1)

    def test_rejects_zero_trials(self):
        with pytest.raises(DomainError):
            estimate_moments_mc(SMALL, 2, 0)
        with pytest.raises(DomainError):
            error_rate_mc(SMALL, 2, 0)


def combined(x, y):
    """Differences of two sample means and their joint standard error."""
    mx, my = x.mean(axis=0), y.mean(axis=0)
    se = np.sqrt(x.var(axis=0, ddof=1) / x.shape[0] + y.var(axis=0, ddof=1) / y.shape[0])
    return mx - my, se


class TestChangeOfMeasure:
    def test_bounded_function(self, series):
        g0 = np.minimum(np.exp(series.z0), 10.0)
        g1 = np.minimum(np.exp(series.z1), 10.0) * np.exp(-series.z1)
        diff, se = combined(g0, g1)
        assert np.all(np.abs(diff) <= 4 * se + 1e-12)

    def test_second_moment(self, series):
        diff, se = combined(np.exp(2 * series.z0), np.exp(series.z1))
        assert np.all(np.abs(diff) <= 4 * se + 1e-12)

    def test_next_rho_sandwich(self, series):
        lam, c = 0.8, 2.5
        for t in range(3):
            lo, hi = next_rho_bounds(lam, series.b_hat[t], c)
            slack = 4 * series.rho_se[t + 1] + 4 * lam / 8 * series.b_se[t]
            assert lo - slack <= series.rho_hat[t + 1] <= hi + slack

    def test_gaussian_shape(self):
        # large nu, below the local threshold: Lambda given label 1 is close to N(lam b / 2, lam b)
        lam = 0.3
        tp = TreeParams.from_lambda(lam, 5.0, 2.0)
        ms = estimate_moments_mc(tp, 2, 8000, seed=8)
        for t in range(2):
            z = ms.z1[:, t + 1]
            target = lam * ms.b_hat[t]
            assert z.mean() == pytest.approx(target / 2, rel=0.1)
            assert z.var() == pytest.approx(target, rel=0.1)

    def test_bound_values(self):
        lo, hi = next_rho_bounds(1.0, 8.0, 4.0)
        assert lo == pytest.approx(math.exp(-1)) and hi == pytest.approx(math.exp(-1 / 8))
        with pytest.raises(DomainError):
            next_rho_bounds(1.0, 1.0, 0.5)


class TestEnvelope:
    def test_first_step(self):
        env = moment_envelope(1.0, math.log(10), 2.0, 3)
        assert env.lower[0] == env.upper[0] == pytest.approx(10 / 11)
        assert env.upper[1] == pytest.approx(2.4820650846230120, rel=1e-14)
        assert env.lower[1] == pytest.approx(1.6971671878042831, rel=1e-14)

    @given(st.floats(0.05, 3.0), st.floats(0.1, 10.0), st.floats(1.0, 20.0), st.integers(0, 12))
    @settings(max_examples=200)
    def test_ordering(self, lam, nu, c, horizon):
        env = moment_envelope(lam, nu, c, horizon)
        assert np.all(env.lower <= env.upper)
        assert np.all(env.lower[1:] >= env.lower[:-1])
        assert np.all(env.upper[1:] >= env.upper[:-1])
        cutoff = nu / (2 * (lam * (2 + c) - lam))
        if env.crossing is not None:
            assert env.lower[env.crossing] > cutoff
            assert np.all(env.lower[: env.crossing] <= cutoff)
            assert not env.certified[env.crossing + 1 :].any()
        else:
            assert env.certified.all()

    def test_certified_prefix(self):
        # cutoff = ln 10 / 6 sits below b_0 = 10/11
        env = moment_envelope(1.0, math.log(10), 2.0, 3)
        assert env.crossing == 0
        assert env.certified.tolist() == [True, False, False, False]
        env = moment_envelope(0.05, 6.0, 2.0, 4)
        assert env.crossing is None and env.certified.all()

    def test_bounded_at_inverse_e(self):
        env = moment_envelope(1 / math.e, 2.0, 3.0, 50)
        assert np.all(env.upper <= math.e)

    def test_contains_monte_carlo(self):
        tp = TreeParams.from_lambda(0.8, math.log(4), 2.5)
        ms = estimate_moments_mc(tp, 3, 20000, seed=5)
        env = moment_envelope(0.8, math.log(4), 2.5, 3)
        assert np.all(ms.b_hat <= env.upper + 5 * ms.b_se)
        ok = env.certified
        assert np.all(ms.b_hat[ok] >= env.lower[ok] - 5 * ms.b_se[ok] - 1e-12)

    def test_invalid(self):
        with pytest.raises(DomainError):
            moment_envelope(0.0, 1.0, 2.0, 3)
        with pytest.raises(DomainError):
            moment_envelope(1.0, 1.0, 0.5, 3)


class TestBounds:
    def test_error_bounds(self):
        assert error_bounds(1.0, 0.5, 0.5) == pytest.approx((0.25, 0.5))
        assert error_bounds(0.0, 0.9, 0.1) == (0.0, 0.0)
        with pytest.raises(DomainError):
            error_bounds(1.5, 0.5, 0.5)
        with pytest.raises(DomainError):
            error_bounds(0.5, 0.5, 0.6)

    def test_converse(self):
        cb = converse_values(1 / math.e, 100, 1100)
        assert cb.type_sum == pytest.approx(0.38940039153570243, rel=1e-14)
        assert cb.symmetric_difference == pytest.approx(70.800071188309533, rel=1e-14)
        assert cb.type_sum_at_threshold == pytest.approx(cb.type_sum, rel=1e-14)
        assert cb.valid
        assert not converse_values(0.5, 100, 1100).valid
