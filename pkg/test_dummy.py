#!/usr/bin/env python3
"""
Tests for dummy-count distributions, DP certification and calibration.
"""

import math

import numpy as np
import pytest
from scipy import stats

from Core.dummy import (AsymmetricGeometric, BinomialDistribution, PointMass, PrivacyBudget,
                        binary_mechanism_pmfs, calibrate_fme, calibrate_lnf, calibrate_offset, certify_dp,
                        distribution_from_config, two_sided_geometric)
from Core.exceptions import CalibrationError
from Core.utils.rng import Rng

def test_one_sided_geometric_is_pure_dp_at_critical_beta():
    for eps in (0.25, 0.5, 1.0):
        dist = AsymmetricGeometric(math.exp(-eps), 0)
        beta = 1.0 - math.exp(-eps)
        assert certify_dp(dist, beta, eps) <= 1e-15

def test_point_mass_with_full_sampling_is_not_private():
    assert certify_dp(PointMass(3), 1.0, 1.0) == pytest.approx(1.0)

def test_beta_zero_certifies_trivially():
    assert certify_dp(PointMass(0), 0.0, 0.0) == 0.0

def test_mechanism_pmfs_are_distributions():
    p0, p1 = binary_mechanism_pmfs(BinomialDistribution(4, 0.3), 0.6)
    assert p0.sum() == pytest.approx(1.0)
    assert p1.sum() == pytest.approx(1.0)
    assert p0[-1] == 0.0

def test_binomial_delta_matches_direct_hockey_stick():
    dist = BinomialDistribution(20, 0.5)
    eps = 1.0
    p0, p1 = binary_mechanism_pmfs(dist, 1.0)
    direct = max(np.maximum(p1 - math.exp(eps) * p0, 0).sum(), np.maximum(p0 - math.exp(eps) * p1, 0).sum())
    assert certify_dp(dist, 1.0, eps) == pytest.approx(direct, rel=1e-9, abs=1e-15)

def test_calibrate_offset_is_minimal():
    eps, delta, beta = 0.5, 1e-8, 1.0
    dist = calibrate_offset(eps, delta, beta)
    offset = dist.params['offset']
    assert certify_dp(dist, beta, eps) <= delta
    assert offset > 0
    smaller = AsymmetricGeometric(math.exp(-eps), offset - 1, math.exp(-eps))
    assert certify_dp(smaller, beta, eps) > delta

def test_calibrate_prefers_one_sided_form_for_weak_sampling():
    eps = 1.0
    dist = calibrate_offset(eps, 1e-12, 0.5 * (1.0 - math.exp(-eps)))
    assert dist.params['offset'] == 0 and dist.params['left_decay'] == 0.0

def test_infeasible_budgets():
    with pytest.raises(CalibrationError):
        calibrate_offset(1.0, 0.0, 1.0)
    with pytest.raises(CalibrationError):
        calibrate_offset(0.0, 1e-12, 0.5)

def test_calibrate_fme_splits_the_budget():
    budget = PrivacyBudget(2.0, 1e-10, 0.5)
    d1, d2 = calibrate_fme(budget, 0.8)
    assert certify_dp(d1, 0.8, 0.5) <= 0.25e-10
    assert certify_dp(d2, 1.0, 0.5) <= 0.25e-10
    lnf = calibrate_lnf(PrivacyBudget(1.0, 1e-10), 1.0)
    assert certify_dp(lnf, 1.0, 0.5) <= 0.5e-10
    (eps1, delta1), (eps2, delta2) = budget.split_parts()
    assert (eps1, eps2) == pytest.approx((1.0, 1.0))
    assert (delta1, delta2) == pytest.approx((0.5e-10, 0.5e-10), rel=1e-9)

def test_threshold_and_tail():
    dist = BinomialDistribution(2, 0.5)
    assert dist.tail(0) == 1.0
    assert dist.tail(2) == pytest.approx(0.25)
    assert dist.tail(3) == 0.0
    assert dist.threshold(0.05) == 3
    assert dist.threshold(0.3) == 2

def test_sampling_matches_pmf():
    dist = AsymmetricGeometric(math.exp(-0.5), 10, math.exp(-0.5))
    draws = dist.sample(Rng(3).stream("shuffler"), 50000)
    assert abs(draws.mean() - dist.mean) < 5 * math.sqrt(dist.variance / draws.size)
    assert draws.min() >= 0

def test_binomial_sampling_goodness_of_fit():
    dist = BinomialDistribution(6, 0.4)
    draws = dist.sample(Rng(4).stream("shuffler"), 20000)
    observed = np.bincount(draws, minlength=7)
    assert stats.chisquare(observed, dist.pmf * draws.size).pvalue > 1e-4

def test_two_sided_geometric_is_symmetric():
    noise = two_sided_geometric(math.exp(-1.0), Rng(5).stream("collector"), 40000)
    assert abs(noise.mean()) < 0.05
    assert two_sided_geometric(0.0, Rng(5).stream("collector")) == 0

def test_distribution_from_config():
    assert isinstance(distribution_from_config("binomial", {"m": 3, "p": 0.5}), BinomialDistribution)
    assert distribution_from_config("point_mass", {"k": 2}).mean == 2.0
    geometric = distribution_from_config("asymmetric-geometric", {"decay": 0.5, "offset": 3})
    assert geometric.params['offset'] == 3
    with pytest.raises(ValueError):
        distribution_from_config("laplace", {})

def main():
    """Run the dummy distribution tests."""
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    for test in tests:
        print(f"Running {test.__name__}...")
        test()
    print(f"\nAll {len(tests)} dummy distribution tests passed")

if __name__ == "__main__":
    main()
