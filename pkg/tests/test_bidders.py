"""Bid formulas and the lift-scale calibration procedures."""

import numpy as np
import pytest

from liftsim.bidders import (
    BidderConfig, CalibrationError, PopulationStats,
    calibrate_beta, calibrate_equal_attribution,
    calibrate_equal_attribution_weighted,
    lift_bid, passive_bid, rational_bid, split_weight_gap, value_bid,
)
from liftsim.market import GroundTruthUser, dollars_to_micros

D = dollars_to_micros


def _user(i, p, delta_p):
    return GroundTruthUser(f"u{i}", p=p, delta_p=delta_p)


def _random_population(rng, n):
    users = []
    for i in range(n):
        p = float(rng.uniform(0.005, 0.1))
        users.append(_user(i, p, p * float(rng.uniform(0.05, 0.95))))
    return users


def test_passive_bid_is_zero():
    assert passive_bid() == 0


def test_value_bid_examples():
    assert value_bid(0.04, alpha=D(100.0)) == D(4.0)
    assert value_bid(0.02, alpha=D(100.0)) == D(2.0)
    assert value_bid(0.0, alpha=D(100.0)) == 0


def test_lift_bid_examples():
    assert lift_bid(0.019, beta=D(200.0)) == D(3.8)
    assert lift_bid(0.01, beta=D(200.0)) == D(2.0)
    assert lift_bid(0.0, beta=D(200.0)) == 0
    assert lift_bid(-0.05, beta=D(200.0)) == 0  # negative lift clamps to zero


def test_rational_bid_examples():
    assert rational_bid(0.04, a=1.0, cpa=D(100.0)) == D(4.0)
    assert rational_bid(0.04, a=0.5, cpa=D(100.0)) == D(2.0)
    assert rational_bid(0.5, a=0.0, cpa=D(100.0)) == 0


def test_scale_equivariance_within_one_micro():
    rng = np.random.default_rng(11)
    for _ in range(300):
        p = float(rng.uniform(0.0, 0.3))
        alpha = float(rng.uniform(1, 400)) * 1e6
        c = float(rng.uniform(0.5, 8.0))
        assert abs(value_bid(p, c * alpha) / c - value_bid(p, alpha)) <= 1.0
        assert abs(lift_bid(p, c * alpha) / c - lift_bid(p, alpha)) <= 1.0


def test_winner_invariant_under_common_scaling():
    from liftsim.market import head_to_head_winner
    rng = np.random.default_rng(12)
    for _ in range(300):
        p = float(rng.uniform(0.001, 0.2))
        dp = p * float(rng.uniform(0.01, 0.99))
        alpha = float(rng.uniform(10, 500))
        beta = float(rng.uniform(10, 2000))
        c = float(rng.uniform(0.01, 100.0))
        assert (head_to_head_winner(p, dp, alpha, beta)
                == head_to_head_winner(p, dp, c * alpha, c * beta))


def test_calibrate_beta_examples():
    stats = PopulationStats(mean_p=0.02, mean_delta_p=0.005, n=100)
    assert calibrate_beta(stats, cpa=D(100.0)) == pytest.approx(D(400.0))
    even = PopulationStats(mean_p=0.02, mean_delta_p=0.02, n=100)
    assert calibrate_beta(even, cpa=D(100.0)) == pytest.approx(D(100.0))
    with pytest.raises(CalibrationError):
        calibrate_beta(PopulationStats(mean_p=0.02, mean_delta_p=0.0, n=10), D(100.0))


def test_lift_side_sum_monotone_in_beta():
    rng = np.random.default_rng(5)
    population = _random_population(rng, 200)
    thresholds = [100.0 * u.p / u.delta_p for u in population]
    weights = [u.p for u in population]
    betas = np.linspace(min(thresholds) * 0.5, max(thresholds) * 2.0, 400)
    gaps = [split_weight_gap(thresholds, weights, float(b)) for b in betas]
    assert all(b2 >= b1 - 1e-12 for b1, b2 in zip(gaps, gaps[1:]))


def test_two_user_split_is_forced_and_flagged():
    population = [_user("a", 0.04, 0.01), _user("b", 0.02, 0.019)]
    cal = calibrate_equal_attribution(population, alpha=100.0)
    # Indifference points are 400 (user a) and 200/1.9 (user b); any scale
    # between them wins exactly one user per side.
    assert 100.0 * 0.02 / 0.019 < cal.beta < 400.0
    assert cal.residual == pytest.approx(abs(0.04 - 0.02) / 0.06)
    assert not cal.converged


def test_identical_users_cannot_be_split_by_a_scale():
    population = [_user(i, 0.03, 0.012) for i in range(10)]
    cal = calibrate_equal_attribution(population, alpha=100.0)
    assert not cal.converged
    assert cal.residual == pytest.approx(1.0)  # everyone lands on one side


def test_bisection_matches_exhaustive_grid_scan():
    rng = np.random.default_rng(77)
    for trial in range(5):
        population = _random_population(rng, 1000)
        alpha = 100.0
        cal = calibrate_equal_attribution(population, alpha, tolerance=1e-3)

        thresholds = sorted({alpha * u.p / u.delta_p for u in population})
        weights = [u.p for u in population]
        per_user = [alpha * u.p / u.delta_p for u in population]
        candidates = [thresholds[0] * 0.5, thresholds[-1] * 2.0]
        candidates += [0.5 * (a + b) for a, b in zip(thresholds, thresholds[1:])]
        best = min(abs(split_weight_gap(per_user, weights, b)) for b in candidates)
        total = sum(weights)
        assert cal.residual == pytest.approx(best / total, abs=1e-12)
        assert cal.residual <= 0.01


def test_calibration_rejects_bad_input():
    with pytest.raises(CalibrationError):
        calibrate_equal_attribution([], alpha=100.0)
    no_lift = [_user(i, 0.03, 0.0) for i in range(5)]
    with pytest.raises(CalibrationError):
        calibrate_equal_attribution(no_lift, alpha=100.0)


def test_weighted_calibration_balances_weighted_sums():
    rng = np.random.default_rng(9)
    population = _random_population(rng, 800)
    a_values = [float(rng.uniform(0.05, 1.0)) for _ in population]
    cpa = D(100.0)
    cal = calibrate_equal_attribution_weighted(population, a_values, cpa)
    thresholds = [cpa * u.p * a / u.delta_p for u, a in zip(population, a_values)]
    weights = [u.p * a for u, a in zip(population, a_values)]
    gap = split_weight_gap(thresholds, weights, cal.beta)
    assert abs(gap) / sum(weights) == pytest.approx(cal.residual)
    assert cal.converged


def test_bidder_config_validation():
    BidderConfig(kind="passive")
    BidderConfig(kind="value", alpha=1e8)
    with pytest.raises(ValueError):
        BidderConfig(kind="value")
    with pytest.raises(ValueError):
        BidderConfig(kind="lift", beta=0.0)
    with pytest.raises(ValueError):
        BidderConfig(kind="nonsense")
