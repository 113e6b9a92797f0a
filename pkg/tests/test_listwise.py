import numpy as np
import pytest

from rankrec.errors import ConfigurationError, UndefinedMetricError
from rankrec.listwise import listwise_grad, listwise_loss, smooth_ranks
from rankrec.metrics import MetricSpec, RankedJudgments

from conftest import random_judgments
from oracles import fd_gradient

LOSS_SPECS = [
    MetricSpec("ndcg"),
    MetricSpec("ap"),
    MetricSpec("rr"),
    MetricSpec("nrbp", 0.9),
]


class TestSmoothRanks:
    def test_equal_scores(self):
        assert smooth_ranks([0.0, 0.0]) == pytest.approx([1.5, 1.5])

    def test_wide_margin(self):
        out = smooth_ranks([10.0, 0.0])
        assert out == pytest.approx([1.0000454, 1.9999546], abs=1e-6)

    def test_single_item(self):
        assert smooth_ranks([4.2]) == pytest.approx([1.0])

    def test_sum_law(self, rng):
        # sigma(x) + sigma(-x) = 1 pairs make the total exactly N(N+1)/2
        for _ in range(50):
            n = int(rng.integers(1, 30))
            scores = rng.normal(size=n) * 3
            total = smooth_ranks(scores).sum()
            assert total == pytest.approx(n * (n + 1) / 2, rel=1e-12)

    def test_values_strictly_inside_bounds(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 20))
            out = smooth_ranks(rng.normal(size=n))
            assert np.all(out > 1.0) and np.all(out < n)


class TestListwiseLoss:
    def test_rank_sum_loss_equal_scores(self):
        j = RankedJudgments([1, 0], [0.0, 0.0])
        assert listwise_loss(MetricSpec("nrbp", 0.8), j) == pytest.approx(0.5)

    def test_rank_sum_loss_vanishes_at_ideal_limit(self):
        labels = [1, 1, 1, 0, 0, 0, 0]
        scores = np.where(np.array(labels) == 1, 20.0, 0.0)
        j = RankedJudgments(labels, scores)
        assert listwise_loss(MetricSpec("nrbp", 0.8), j) < 1e-6

    def test_rr_loss_equal_scores(self):
        j = RankedJudgments([1, 0], [0.0, 0.0])
        assert listwise_loss(MetricSpec("rr"), j) == pytest.approx(-1 / 1.5)

    def test_ndcg_loss_equal_scores_both_relevant(self):
        j = RankedJudgments([1, 1], [0.0, 0.0])
        expected = -(2.0 / np.log2(2.5)) / (1.0 + 1.0 / np.log2(3.0))
        assert listwise_loss(MetricSpec("ndcg"), j) == pytest.approx(expected)
        assert expected == pytest.approx(-0.9277, abs=1e-4)

    def test_zero_positives_undefined(self):
        j = RankedJudgments([0, 0], [0.0, 1.0])
        with pytest.raises(UndefinedMetricError):
            listwise_loss(MetricSpec("ndcg"), j)

    def test_unsupported_kind(self):
        j = RankedJudgments([1, 0], [0.0, 1.0])
        with pytest.raises(ConfigurationError):
            listwise_loss(MetricSpec("rbp", 0.8), j)

    def test_rank_sum_loss_ignores_persistence(self, rng):
        for _ in range(20):
            labels, scores = random_judgments(rng, max_n=10)
            j = RankedJudgments(labels, scores)
            values = {
                listwise_loss(MetricSpec("nrbp", p), j) for p in (0.8, 0.9, 0.95)
            }
            assert len(values) == 1

    @pytest.mark.parametrize("spec", LOSS_SPECS, ids=lambda s: s.label)
    def test_shift_invariance(self, spec, rng):
        for _ in range(20):
            labels, scores = random_judgments(rng, max_n=10)
            j = RankedJudgments(labels, scores)
            shifted = RankedJudgments(labels, scores + 13.7)
            assert listwise_loss(spec, shifted) == pytest.approx(
                listwise_loss(spec, j), rel=1e-9, abs=1e-9
            )

    def test_raising_relevant_score_never_increases_rank_sum_loss(self, rng):
        spec = MetricSpec("nrbp", 0.8)
        for _ in range(50):
            labels, scores = random_judgments(rng, max_n=10, require_negative=True)
            j = RankedJudgments(labels, scores)
            base = listwise_loss(spec, j)
            rel = np.flatnonzero(labels == 1)
            k = rel[rng.integers(len(rel))]
            bumped = scores.copy()
            bumped[k] += rng.uniform(0.1, 2.0)
            assert listwise_loss(spec, RankedJudgments(labels, bumped)) <= base + 1e-12


class TestListwiseGrad:
    def test_rank_sum_grad_two_items(self):
        j = RankedJudgments([1, 0], [0.0, 0.0])
        grad = listwise_grad(MetricSpec("nrbp", 0.8), j)
        assert grad == pytest.approx([-0.25, 0.25])

    def test_symmetry_for_like_labeled_items(self):
        j = RankedJudgments([1, 1, 0, 0], [0.3, 0.3, 0.3, 0.3])
        for spec in LOSS_SPECS:
            grad = listwise_grad(spec, j)
            assert grad[0] == pytest.approx(grad[1])
            assert grad[2] == pytest.approx(grad[3])

    @pytest.mark.parametrize("spec", LOSS_SPECS, ids=lambda s: s.label)
    def test_matches_finite_differences(self, spec, rng):
        for _ in range(40):
            labels, scores = random_judgments(rng, max_n=12, require_negative=True)
            j = RankedJudgments(labels, scores)
            grad = listwise_grad(spec, j)
            fd = fd_gradient(
                lambda f: listwise_loss(spec, RankedJudgments(labels, f)), scores
            )
            np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-7)

    @pytest.mark.parametrize("spec", LOSS_SPECS, ids=lambda s: s.label)
    def test_gradient_components_sum_to_zero(self, spec, rng):
        # losses depend on score differences only
        for _ in range(20):
            labels, scores = random_judgments(rng, max_n=10, require_negative=True)
            grad = listwise_grad(spec, RankedJudgments(labels, scores))
            assert grad.sum() == pytest.approx(0.0, abs=1e-10)
