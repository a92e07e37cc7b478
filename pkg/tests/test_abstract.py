import math

import numpy as np
import pytest
from scipy import stats

from staircase_dp.abstract_mech import (
    CandidateScoring,
    abstract_distribution,
    abstract_sample,
    abstract_select,
    fuzz_neighbours,
    grid_scoring,
)
from staircase_dp.exceptions import ValidationError
from staircase_dp.mechanisms import PrivacyParams, StaircaseContinuous, cdf, staircase_pdf


def scoring(scores, delta=1.0, ids=None):
    ids = ids if ids is not None else tuple(f"c{i}" for i in range(len(scores)))
    return CandidateScoring(ids, np.asarray(scores, dtype=float), delta)


class TestDistribution:
    def test_uniform(self):
        p = abstract_distribution(scoring([2.0] * 5), PrivacyParams(1.0, 1.0), 0.3)
        np.testing.assert_allclose(p, 0.2, rtol=1e-15)

    def test_two_candidates_gamma_one(self):
        params = PrivacyParams(0.8, 2.0)
        b = params.b
        p = abstract_distribution(scoring([0.0, 2.0], 2.0), params, 1.0)
        np.testing.assert_allclose(p, [1 / (1 + b), b / (1 + b)], rtol=1e-15)

    def test_same_step(self):
        p = abstract_distribution(scoring([0.0, 0.5]), PrivacyParams(1.0, 1.0), 1.0)
        np.testing.assert_allclose(p, [0.5, 0.5], rtol=1e-15)

    def test_matches_density(self):
        params = PrivacyParams(1.3, 1.0)
        s = scoring([0.0, 0.2, 0.9, 1.4, 3.3])
        m = StaircaseContinuous(params, 0.4)
        f = staircase_pdf(m, s.scores)
        np.testing.assert_allclose(abstract_distribution(s, params, 0.4), f / f.sum(), rtol=1e-14)

    def test_far_scores_do_not_underflow(self):
        p = abstract_distribution(scoring([5000.0, 5000.5, 5003.0]), PrivacyParams(1.0, 1.0), 0.5)
        assert abs(p.sum() - 1) < 1e-12 and np.all(p > 0)

    def test_validation(self):
        with pytest.raises(ValidationError):
            scoring([])
        with pytest.raises(ValidationError):
            scoring([1.0, -1.0])
        with pytest.raises(ValidationError):
            scoring([1.0, math.inf])
        with pytest.raises(ValidationError):
            scoring([1.0], delta=0.0)
        with pytest.raises(ValidationError):
            abstract_distribution(scoring([1.0]), PrivacyParams(1.0, 2.0), 0.5)
        with pytest.raises(ValidationError):
            abstract_distribution(scoring([1.0]), PrivacyParams(1.0, 1.0), 1.5)


class TestSampling:
    def test_single(self):
        s = scoring([3.0], ids=("only",))
        rng = np.random.default_rng(0)
        assert set(abstract_sample(s, PrivacyParams(1.0, 1.0), 0.5, rng, size=50)) == {"only"}

    def test_u_zero_is_first(self):
        s = scoring([1.0, 0.0, 0.0])
        assert abstract_select(s, PrivacyParams(1.0, 1.0), 0.5, 0.0) == "c0"
        assert abstract_select(s, PrivacyParams(1.0, 1.0), 0.5, np.nextafter(1.0, 0)) == "c2"

    def test_uniform_chi_square(self):
        s = scoring([1.0] * 8)
        picks = abstract_sample(s, PrivacyParams(1.0, 1.0), 0.5, np.random.default_rng(4), size=100_000)
        counts = np.array([picks.count(c) for c in s.candidates])
        assert stats.chisquare(counts).pvalue > 1e-3

    def test_frequencies_match(self):
        params = PrivacyParams(1.0, 1.0)
        s = scoring([0.0, 0.6, 1.2, 2.5])
        p = abstract_distribution(s, params, 0.3)
        picks = abstract_sample(s, params, 0.3, np.random.default_rng(5), size=100_000)
        counts = np.array([picks.count(c) for c in s.candidates])
        assert stats.chisquare(counts, p * counts.sum()).pvalue > 1e-3


class TestPrivacy:
    @pytest.mark.parametrize("eps,gamma", [(0.5, 0.3), (1.0, 0.0), (2.0, 1.0), (3.0, 0.1)])
    def test_fuzz_two_epsilon(self, eps, gamma):
        res = fuzz_neighbours(PrivacyParams(eps, 1.0), gamma, n_pairs=1000, max_candidates=16, seed=7)
        assert res["passed"]
        assert res["max_ratio"] <= math.exp(2 * eps) * (1 + 1e-12)

    def test_bound_is_nearly_attained(self):
        # candidate 0 moves one level closer while n - 1 others each move one level away
        params = PrivacyParams(1.0, 1.0)
        n = 1000
        before = abstract_distribution(scoring([1.4] * n), params, 0.5)
        after = abstract_distribution(scoring([0.4] + [2.4] * (n - 1)), params, 0.5)
        ratio = after[0] / before[0]
        assert ratio == pytest.approx(n / (1 + (n - 1) * params.b**2), rel=1e-12)
        assert math.exp(1.0) < ratio <= math.exp(2.0)


def test_reduction_to_continuous():
    """Selection over a refining grid converges to the staircase law at rate O(h)."""
    params = PrivacyParams(1.0, 1.0)
    gamma, target, half_width = 0.3, 1 / 30, 16.0
    m = StaircaseContinuous(params, gamma)
    peak = float(staircase_pdf(m, 0.0))
    errors = []
    for j in range(4, 11):
        h = 2.0**-j
        grid = np.arange(-half_width, half_width + h / 2, h)
        p = abstract_distribution(grid_scoring(grid, target, 1.0), params, gamma)
        err = float(np.max(np.abs(np.cumsum(p) - cdf(m, grid - target))))
        assert err <= peak * h
        errors.append(err)
    assert errors[-1] < errors[0] / 32
