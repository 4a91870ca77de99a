"""Exactly solvable regimes of the charging lot.

Three special cases admit explicit stationary laws: power for every
space (``M = K``), unlimited parking (``K`` infinite), and a lot that
never has a free space.  Together with the Erlang blocking formula
they yield computable bounds on the success probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom

from .model import (
    INFINITE_SPACES,
    JointDist,
    ModelParams,
    UndefinedMetricError,
    ValidationError,
    state_count,
    state_index,
)

_TRUNCATION_CAP = 10_000_000


@dataclass(frozen=True)
class MarginalDist:
    """Probability vector over an uncharged count ``z = 0..limit``.

    ``values`` optionally overrides the numeric value carried by each
    state; by default state ``i`` counts as ``i``.
    """

    probs: np.ndarray
    limit: int
    values: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (self.limit + 1,):
            raise ValidationError(f"need {self.limit + 1} entries, got shape {probs.shape}")
        if probs.min() < -1e-12:
            raise ValidationError(f"negative probability entry {probs.min()}")
        if abs(probs.sum() - 1.0) > 1e-10:
            raise ValidationError(f"probabilities sum to {probs.sum()}, not 1")
        if self.values is not None:
            values = np.asarray(self.values, dtype=float)
            object.__setattr__(self, "values", values)
            if values.shape != probs.shape:
                raise ValidationError("values must match probs in shape")

    def mean(self) -> float:
        """Expected uncharged count."""
        support = np.arange(self.limit + 1) if self.values is None else self.values
        return float(self.probs @ support)


@dataclass(frozen=True)
class SuccessBounds:
    """Bounds on the stationary fraction of fully charged departures.

    ``upper`` and ``lower_erlang_a`` sandwich the exact value;
    ``lower_full_lot`` is a second guaranteed lower bound;
    ``modified_lower`` sharpens it by swapping the capacity for the
    expected occupancy and is an approximation with no order guarantee.
    """

    upper: float
    lower_erlang_a: float
    lower_full_lot: float
    modified_lower: float

    def __post_init__(self):
        for name in ("upper", "lower_erlang_a", "lower_full_lot", "modified_lower"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} outside [0, 1]: {value}")
        if self.lower_erlang_a > self.upper + 1e-12:
            raise ValidationError("lower_erlang_a exceeds the upper bound")


def erlang_b(a: float, K: int) -> float:
    """Blocking probability of a loss system with offered load ``a``.

    Uses the ascending recursion ``B(a, k) = a B(a, k-1) / (k + a B(a, k-1))``,
    which is stable for large loads and server counts.

    Args:
        a: Offered load, nonnegative.
        K: Number of servers, nonnegative integer.
    """
    if a < 0:
        raise ValidationError(f"offered load must be nonnegative, got {a}")
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)) or K < 0:
        raise ValidationError(f"server count must be a nonnegative integer, got {K!r}")
    b = 1.0
    for k in range(1, K + 1):
        b = a * b / (k + a * b)
    return b


def erlang_loss_pmf(a: float, K: int) -> np.ndarray:
    """Occupancy distribution of the Erlang loss system over ``0..K``."""
    if a < 0:
        raise ValidationError(f"offered load must be nonnegative, got {a}")
    if a == 0.0:
        pmf = np.zeros(K + 1)
        pmf[0] = 1.0
        return pmf
    # Log-space Poisson weights keep large loads from overflowing.
    logw = np.concatenate(([0.0], np.cumsum(math.log(a) - np.log(np.arange(1, K + 1)))))
    return np.exp(logw - logsumexp(logw))


def dist_enough_power(params: ModelParams) -> JointDist:
    """Joint stationary law when power covers every space (``M = K``).

    The total count follows the Erlang loss law with load ``lam/nu``
    and, given ``q`` cars, the uncharged count is
    ``Binomial(q, nu/(nu+mu))``: each car is uncharged exactly when its
    parking clock is outrunning its charging clock.
    """
    if params.unbounded or params.M != params.K:
        raise ValidationError("the binomial closed form needs finite M = K")
    K = params.K
    p_q = erlang_loss_pmf(params.lam / params.nu, K)
    p_uncharged = params.nu / (params.nu + params.mu)
    probs = np.empty(state_count(K))
    for q in range(K + 1):
        i = state_index(q, 0)
        probs[i : i + q + 1] = p_q[q] * binom.pmf(np.arange(q + 1), q, p_uncharged)
    return JointDist(K, probs)


def dist_infinite_spaces(params: ModelParams, tail_eps: float = 1e-12) -> MarginalDist:
    """Stationary law of the uncharged count with unlimited parking.

    With no space constraint the uncharged count is a birth-death chain
    with birth rate ``lam`` and death rate ``mu*min(z, M) + z*nu``: a
    many-server abandonment queue in which even in-service cars leave
    when their parking time expires.  The support is truncated where a
    geometric tail bound falls below ``tail_eps`` of the total mass,
    then renormalized.
    """
    if not params.unbounded:
        raise ValidationError("this law needs K = INFINITE_SPACES")
    if tail_eps <= 0:
        raise ValidationError(f"tail_eps must be positive, got {tail_eps}")
    lam, mu, nu, M = params.lam, params.mu, params.nu, params.M
    if lam == 0.0:
        return MarginalDist(np.array([1.0]), 0)

    logw = [0.0]
    log_lam = math.log(lam)
    while True:
        z = len(logw) - 1
        ratio = lam / (mu * min(z + 1, M) + (z + 1) * nu)
        if ratio < 1.0:
            # Beyond z the weights are dominated by a geometric series
            # with this ratio; stop once that tail is negligible.
            log_tail = logw[-1] + math.log(ratio) - math.log1p(-ratio)
            if log_tail <= math.log(tail_eps) + logsumexp(logw):
                break
        if len(logw) > _TRUNCATION_CAP:
            raise ValidationError("truncation point not found; check parameters")
        logw.append(logw[-1] + log_lam - math.log(mu * min(z + 1, M) + (z + 1) * nu))
    logw = np.asarray(logw)
    probs = np.exp(logw - logsumexp(logw))
    return MarginalDist(probs, len(probs) - 1)


def full_lot_pmf(nu: float, mu: float, K: float, M: float) -> MarginalDist:
    """Stationary law of the uncharged count in a lot that stays full.

    Departing cars are replaced immediately by uncharged ones, so the
    uncharged count is a birth-death chain with birth rate ``nu*(K - z)``
    and death rate ``mu*min(z, M)``; the law follows from detailed
    balance, accumulated in log space.

    ``K`` may be fractional: the lattice then runs to ``ceil(K)`` with
    the exact ``K`` kept in the birth rates, and the top state carries
    the value ``K`` itself, since the uncharged count cannot exceed the
    capacity.  This is how the effective-occupancy modification plugs
    in a non-integer capacity; at integer ``K`` it reduces to the plain
    chain on ``0..K``.
    """
    if nu <= 0 or mu <= 0:
        raise ValidationError("rates nu and mu must be positive")
    if K < 0 or not math.isfinite(K):
        raise ValidationError(f"capacity K must be finite and nonnegative, got {K}")
    if M <= 0:
        raise ValidationError(f"power capacity M must be positive, got {M}")
    top = int(math.ceil(K))
    logw = np.empty(top + 1)
    logw[0] = 0.0
    for z in range(top):
        # K - z > 0 for every z below ceil(K), so the log is safe.
        logw[z + 1] = logw[z] + math.log(nu * (K - z)) - math.log(mu * min(z + 1, M))
    probs = np.exp(logw - logsumexp(logw))
    values = np.minimum(np.arange(top + 1, dtype=float), K)
    return MarginalDist(probs, top, values)


def dist_full_lot(params: ModelParams) -> MarginalDist:
    """Full-lot stationary law at the parameters' capacity ``K``."""
    if params.unbounded:
        raise ValidationError("the full-lot law needs a finite K")
    return full_lot_pmf(params.nu, params.mu, params.K, params.M)


def expected_occupancy(params: ModelParams) -> float:
    """Expected total count ``(lam/nu) * (1 - B(lam/nu, K))``.

    This is the mean of the Erlang loss law governing the total count,
    used as the effective capacity in the modified approximations.
    """
    if params.unbounded:
        raise ValidationError("expected occupancy needs a finite K")
    a = params.lam / params.nu
    return a * (1.0 - erlang_b(a, params.K))


def success_bounds(params: ModelParams) -> SuccessBounds:
    """Bounds on the stationary fraction of fully charged departures.

    ``upper = mu/(nu+mu)`` is the chance charging beats parking expiry
    for a car that is never throttled.  ``lower_erlang_a`` comes from
    the unlimited-parking law, ``lower_full_lot`` from the always-full
    lot, and ``modified_lower`` replaces the capacity with the expected
    occupancy.  Values are clipped into [0, 1]; a negative lower bound
    carries no information, and 0 is still a valid bound there.
    """
    if params.unbounded:
        raise ValidationError("bounds need a finite K")
    if params.lam <= 0:
        raise UndefinedMetricError("success bounds need a positive arrival rate")

    def clip(x: float) -> float:
        return min(1.0, max(0.0, x))

    upper = params.mu / (params.nu + params.mu)
    offered = params.lam / params.nu
    unlimited = dist_infinite_spaces(replace(params, K=INFINITE_SPACES))
    lower_erlang_a = clip(1.0 - unlimited.mean() / offered)
    e_q = expected_occupancy(params)
    full_mean = full_lot_pmf(params.nu, params.mu, params.K, params.M).mean()
    lower_full_lot = clip((e_q - full_mean) / e_q)
    modified_mean = full_lot_pmf(params.nu, params.mu, e_q, params.M).mean()
    modified_lower = clip((e_q - modified_mean) / e_q)
    return SuccessBounds(
        upper=upper,
        lower_erlang_a=lower_erlang_a,
        lower_full_lot=lower_full_lot,
        modified_lower=modified_lower,
    )
