"""Bidding strategies and the lift-bid scale calibration procedures.

Four strategies are supported:

* passive: always bids zero (control group).
* value:   bids ``alpha * p`` where ``p`` is the action rate.
* lift:    bids ``beta * max(delta_p, 0)``; negative lift clamps to a
  zero bid because exchanges reject negative bids.
* rational: bids ``cpa * p * a`` where ``a`` is the probability the
  bidder is attributed given an action happens.

``alpha`` and ``beta`` are real-valued scales in micros per unit
probability; money conversion happens once, at bid emission.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .market import GroundTruthUser, check_probability, to_money

PASSIVE = "passive"
VALUE = "value"
LIFT = "lift"
RATIONAL = "rational"

BIDDER_KINDS = (PASSIVE, VALUE, LIFT, RATIONAL)


class CalibrationError(ValueError):
    """Raised when a bid-scale calibration has no valid input."""


@dataclass(frozen=True)
class BidderConfig:
    """Configuration for one bidding strategy.

    ``alpha`` scales the value bidder, ``beta`` the lift bidder, both in
    micros per unit probability and strictly positive when their kind is
    active. ``attribution`` optionally maps a user to its attribution
    probability ``a`` for the rational strategy (defaults to 1).
    """

    kind: str
    alpha: float = 0.0
    beta: float = 0.0
    cpa: int = 0
    attribution: object | None = None  # callable user -> a in [0, 1]

    def __post_init__(self) -> None:
        if self.kind not in BIDDER_KINDS:
            raise ValueError(f"unknown bidder kind {self.kind!r}")
        if self.kind == VALUE and self.alpha <= 0:
            raise ValueError("value bidder requires alpha > 0")
        if self.kind == LIFT and self.beta <= 0:
            raise ValueError("lift bidder requires beta > 0")
        if self.kind == RATIONAL and self.cpa <= 0:
            raise ValueError("rational bidder requires cpa > 0")


@dataclass(frozen=True)
class PopulationStats:
    """Population means used for the default lift-scale selection."""

    mean_p: float
    mean_delta_p: float
    n: int

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("n must be positive")


@dataclass(frozen=True)
class BetaCalibration:
    """Result of an equal-attribution calibration.

    ``residual`` is |sum_value p - sum_lift p| as a fraction of the
    population total; ``converged`` is False when no scale in the bracket
    achieves the requested tolerance (always reported, never silently
    dropped, because the dominance checks assume near-equal attribution).
    """

    beta: float
    residual: float
    converged: bool


def passive_bid() -> int:
    """The control strategy: always bid zero."""
    return 0


def value_bid(p: float, alpha: float) -> int:
    """Bid proportional to the absolute action rate: round(alpha * p)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    check_probability(p, "p")
    return to_money(alpha * p)


def lift_bid(delta_p: float, beta: float) -> int:
    """Bid proportional to the action-rate lift: round(beta * max(delta_p, 0))."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return to_money(beta * max(delta_p, 0.0))


def rational_bid(p: float, a: float, cpa: int) -> int:
    """Bid the expected attributed revenue per impression: round(cpa * p * a).

    With ``a = 1`` this degenerates to the industry standard
    eCPM = AR x CPA.
    """
    check_probability(p, "p")
    check_probability(a, "a")
    return to_money(cpa * p * a)


def calibrate_beta(stats: PopulationStats, cpa: int) -> float:
    """Default lift-bid scale: (mean p / mean lift) * CPA.

    Prices each incremental action at the rate the advertiser already
    pays per absolute action. Requires a strictly positive mean lift.
    """
    if stats.mean_delta_p <= 0:
        raise CalibrationError("mean_delta_p must be positive to calibrate beta")
    if not 0 < stats.mean_delta_p <= stats.mean_p <= 1:
        raise CalibrationError(
            f"invalid population means: mean_p={stats.mean_p}, "
            f"mean_delta_p={stats.mean_delta_p}"
        )
    return (stats.mean_p / stats.mean_delta_p) * cpa


def split_weight_gap(
    thresholds: list[float], weights: list[float], beta: float
) -> float:
    """Lift-side minus value-side attributed weight at a given beta.

    User i falls to the lift side iff ``beta > thresholds[i]``; users
    exactly at their indifference point are tied and excluded from both
    sides. Non-decreasing in beta.
    """
    value_sum = 0.0
    lift_sum = 0.0
    for thr, w in zip(thresholds, weights):
        if beta < thr:
            value_sum += w
        elif beta > thr:
            lift_sum += w
    return lift_sum - value_sum


def _bisect_equal_split(
    thresholds: list[float],
    weights: list[float],
    tolerance: float,
    max_iter: int,
) -> BetaCalibration:
    """Monotone bisection for a beta that balances the two side sums.

    Exact equality is generally unattainable on a finite population; the
    best achievable beta is returned with its residual either way, and
    the returned scale never lands exactly on an indifference point.

    Thresholds of +inf (no lift) pin a user to the value side; thresholds
    of 0 pin it to the lift side. Only strictly positive finite ones can
    switch sides and span the search bracket.
    """
    finite = [t for t in thresholds if math.isfinite(t) and t > 0]
    if not finite:
        raise CalibrationError("no user has positive lift; nothing to calibrate")
    total = sum(weights)
    if total <= 0:
        raise CalibrationError("total attributable weight must be positive")

    def gap(beta: float) -> float:
        return split_weight_gap(thresholds, weights, beta)

    lo = min(finite) * 0.5
    hi = max(finite) * 2.0
    if gap(lo) > 0 or gap(hi) < 0:  # no crossing inside the bracket
        best = lo if abs(gap(lo)) <= abs(gap(hi)) else hi
        residual = abs(gap(best)) / total
        return BetaCalibration(best, residual, residual <= tolerance)

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid

    # The bracket now straddles one jump of the step function. Candidate
    # betas are taken strictly inside the open intervals between adjacent
    # indifference points around the jump, never exactly on one.
    uniq = sorted(set(finite))

    def interval_point(idx: int) -> float:
        if idx <= 0:
            return uniq[0] * 0.5
        if idx >= len(uniq):
            return uniq[-1] * 2.0
        return 0.5 * (uniq[idx - 1] + uniq[idx])

    lo_idx = bisect.bisect_right(uniq, lo)
    hi_idx = bisect.bisect_right(uniq, hi)
    candidates = {
        interval_point(idx)
        for idx in (lo_idx - 1, lo_idx, hi_idx, hi_idx + 1)
    }
    best = min(sorted(candidates), key=lambda b: abs(gap(b)))
    residual = abs(gap(best)) / total
    return BetaCalibration(beta=best, residual=residual,
                           converged=residual <= tolerance)


def calibrate_equal_attribution(
    population: list[GroundTruthUser],
    alpha: float,
    tolerance: float = 1e-3,
    max_iter: int = 200,
) -> BetaCalibration:
    """Find a lift scale that splits attributed actions evenly.

    Searches for beta such that the attributed-action sums of the value
    side (users with ``alpha * p > beta * delta_p``) and the lift side
    (the complement) agree to within ``tolerance`` of the population
    total. The lift-side sum is non-decreasing in beta, so the search is
    a monotone bisection over the bracket spanned by the per-user
    indifference points ``alpha * p_i / delta_p_i``.
    """
    if not population:
        raise CalibrationError("population must be non-empty")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    thresholds = [
        alpha * user.p / user.delta_p if user.delta_p > 0 else math.inf
        for user in population
    ]
    weights = [user.p for user in population]
    return _bisect_equal_split(thresholds, weights, tolerance, max_iter)


def calibrate_equal_attribution_weighted(
    population: list[GroundTruthUser],
    a_values: list[float],
    cpa: int,
    tolerance: float = 1e-3,
    max_iter: int = 200,
) -> BetaCalibration:
    """Equal-attribution calibration against a rational bidder.

    The value side bids ``cpa * p_i * a_i`` where ``a_i`` is the
    per-user attribution probability, and attributed actions on each
    side accrue at weight ``p_i * a_i``. Balances those weighted sums.
    """
    if not population:
        raise CalibrationError("population must be non-empty")
    if len(a_values) != len(population):
        raise ValueError("a_values must match the population length")
    if cpa <= 0:
        raise ValueError("cpa must be positive")
    for a in a_values:
        check_probability(a, "attribution probability")
    thresholds = [
        cpa * user.p * a / user.delta_p if user.delta_p > 0 else math.inf
        for user, a in zip(population, a_values)
    ]
    weights = [user.p * a for user, a in zip(population, a_values)]
    return _bisect_equal_split(thresholds, weights, tolerance, max_iter)
