"""Exactly solvable regimes, the blocking formula, and the bounds."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import binom, poisson
from hypothesis import given, settings, strategies as st

from evlot import (
    INFINITE_SPACES,
    ModelParams,
    UndefinedMetricError,
    ValidationError,
    build_generator,
    dist_enough_power,
    dist_full_lot,
    dist_infinite_spaces,
    erlang_b,
    erlang_loss_pmf,
    exact_metrics,
    expected_occupancy,
    full_lot_pmf,
    stationary_distribution,
    success_bounds,
)


class TestErlangB:
    def test_zero_servers_block_everything(self):
        assert erlang_b(3.7, 0) == 1.0

    def test_unit_load_single_server(self):
        assert erlang_b(1.0, 1) == pytest.approx(0.5, abs=1e-15)

    def test_matches_direct_sum(self):
        for a in (0.5, 2.0, 7.0):
            for K in (1, 3, 8):
                terms = [a**k / math.factorial(k) for k in range(K + 1)]
                assert erlang_b(a, K) == pytest.approx(terms[-1] / sum(terms), rel=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValidationError):
            erlang_b(-1.0, 3)
        with pytest.raises(ValidationError):
            erlang_b(1.0, 2.5)
        with pytest.raises(ValidationError):
            erlang_b(1.0, -1)


def test_erlang_loss_pmf_normalizes_and_handles_zero_load():
    pmf = erlang_loss_pmf(10.0, 10)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert pmf[-1] == pytest.approx(erlang_b(10.0, 10), abs=1e-12)
    assert np.array_equal(erlang_loss_pmf(0.0, 4), np.eye(5)[0])


def test_enough_power_three_state_values():
    d = dist_enough_power(ModelParams(lam=1, mu=1, nu=1, K=1, M=1))
    assert d.prob(0, 0) == pytest.approx(0.5, abs=1e-12)
    assert d.prob(1, 0) == pytest.approx(0.25, abs=1e-12)
    assert d.prob(1, 1) == pytest.approx(0.25, abs=1e-12)


def test_enough_power_conditional_law_is_binomial():
    params = ModelParams(lam=4.0, mu=2.0, nu=1.0, K=6, M=6)
    d = dist_enough_power(params)
    p_unc = params.nu / (params.nu + params.mu)
    marg = d.q_marginal()
    for q in (1, 3, 6):
        cond = np.array([d.prob(q, z) for z in range(q + 1)]) / marg[q]
        assert np.abs(cond - binom.pmf(np.arange(q + 1), q, p_unc)).max() <= 1e-12


def test_enough_power_matches_linear_solve():
    params = ModelParams(lam=4.0, mu=1.0, nu=1.0, K=5, M=5)
    exact = stationary_distribution(build_generator(params))
    assert np.abs(dist_enough_power(params).probs - exact.probs).max() <= 1e-10


def test_enough_power_requires_m_equal_k():
    with pytest.raises(ValidationError):
        dist_enough_power(ModelParams(lam=1, mu=1, nu=1, K=5, M=4))


class TestInfiniteSpaces:
    def test_weight_ratios(self):
        d = dist_infinite_spaces(ModelParams(lam=1, mu=1, nu=1, K=INFINITE_SPACES, M=1))
        assert d.probs[1] / d.probs[0] == pytest.approx(0.5, rel=1e-12)
        assert d.probs[2] / d.probs[1] == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_large_power_reduces_to_poisson_shape(self):
        d = dist_infinite_spaces(ModelParams(lam=3, mu=1, nu=1, K=INFINITE_SPACES, M=1000))
        ref = poisson.pmf(np.arange(d.limit + 1), 3.0 / 2.0)
        assert np.abs(d.probs - ref / ref.sum()).max() <= 1e-10

    def test_truncation_tail_is_negligible(self):
        params = ModelParams(lam=5, mu=1, nu=0.5, K=INFINITE_SPACES, M=2)
        tight = dist_infinite_spaces(params, tail_eps=1e-12)
        loose = dist_infinite_spaces(params, tail_eps=1e-6)
        assert tight.limit >= loose.limit
        n = loose.limit + 1
        assert np.abs(tight.probs[:n] - loose.probs).max() <= 1e-6

    def test_requires_unbounded_lot(self):
        with pytest.raises(ValidationError):
            dist_infinite_spaces(ModelParams(lam=1, mu=1, nu=1, K=5, M=1))
        with pytest.raises(ValidationError):
            dist_infinite_spaces(
                ModelParams(lam=1, mu=1, nu=1, K=INFINITE_SPACES, M=1), tail_eps=0.0
            )


class TestFullLot:
    def test_hand_solved_weights(self):
        d = dist_full_lot(ModelParams(lam=1, mu=1, nu=1, K=2, M=1))
        assert np.abs(d.probs - np.array([1, 2, 2]) / 5.0).max() <= 1e-12

    def test_full_power_is_binomial_exchange(self):
        # With M = K the chain is an urn swap and the law is binomial.
        nu, mu, K = 1.3, 0.6, 9
        d = full_lot_pmf(nu, mu, float(K), float(K))
        ref = binom.pmf(np.arange(K + 1), K, nu / (nu + mu))
        assert np.abs(d.probs - ref).max() <= 1e-12

    def test_matches_brute_force_balance_solve(self):
        nu, mu, K, M = 1.0, 1.0, 5, 2
        n = K + 1
        G = np.zeros((n, n))
        for z in range(n):
            if z < K:
                G[z, z + 1] = nu * (K - z)
            if z > 0:
                G[z, z - 1] = mu * min(z, M)
        np.fill_diagonal(G, -G.sum(axis=1))
        A = np.vstack([G.T[:-1], np.ones(n)])
        b = np.zeros(n)
        b[-1] = 1.0
        ref = np.linalg.solve(A, b)
        d = full_lot_pmf(nu, mu, float(K), float(M))
        assert np.abs(d.probs - ref).max() <= 1e-12

    @settings(max_examples=40, deadline=None)
    @given(
        nu=st.floats(min_value=0.1, max_value=5.0),
        mu=st.floats(min_value=0.1, max_value=5.0),
        K=st.integers(min_value=1, max_value=60),
        m_frac=st.floats(min_value=0.05, max_value=1.0),
    )
    def test_detailed_balance_residual(self, nu, mu, K, m_frac):
        M = max(m_frac * K, 1e-3)
        d = full_lot_pmf(nu, mu, float(K), M)
        for z in range(K):
            flow_up = nu * (K - z) * d.probs[z]
            flow_down = mu * min(z + 1, M) * d.probs[z + 1]
            assert abs(flow_up - flow_down) <= 1e-10 * max(flow_up, 1.0)

    def test_fractional_capacity_caps_top_state_value(self):
        d = full_lot_pmf(1.0, 1.0, 7.6, 3.0)
        assert d.limit == 8
        assert d.values[-1] == pytest.approx(7.6)
        assert np.array_equal(d.values[:-1], np.arange(8.0))
        assert d.probs.sum() == pytest.approx(1.0, abs=1e-10)
        # The capped value only lowers the mean.
        plain = float(d.probs @ np.arange(9))
        assert d.mean() < plain

    def test_integer_capacity_keeps_plain_support(self):
        d = full_lot_pmf(1.0, 1.0, 7.0, 3.0)
        assert d.limit == 7
        assert np.array_equal(d.values, np.arange(8.0))

    def test_rejects_bad_parameters(self):
        for bad in (dict(nu=0), dict(mu=-1), dict(K=-2), dict(M=0), dict(K=math.inf)):
            kwargs = dict(nu=1.0, mu=1.0, K=5.0, M=2.0)
            kwargs.update(bad)
            with pytest.raises(ValidationError):
                full_lot_pmf(**kwargs)


def test_expected_occupancy_formula():
    params = ModelParams(lam=10.0, mu=1.0, nu=2.0, K=10, M=5)
    a = params.lam / params.nu
    assert expected_occupancy(params) == pytest.approx(a * (1 - erlang_b(a, 10)), rel=1e-12)


class TestSuccessBounds:
    def test_upper_bound_is_exponential_race(self):
        b = success_bounds(ModelParams(lam=7, mu=1, nu=1, K=10, M=3))
        assert b.upper == pytest.approx(0.5, abs=1e-15)
        b2 = success_bounds(ModelParams(lam=7, mu=3, nu=1, K=10, M=3))
        assert b2.upper == pytest.approx(0.75, abs=1e-15)

    def test_sandwich_on_a_small_grid(self):
        for K in (5, 10):
            for mult in (0.8, 1.0, 1.2):
                for M in (1, K):
                    params = ModelParams(lam=mult * K, mu=1.0, nu=1.0, K=K, M=M)
                    exact = exact_metrics(params).p_success
                    b = success_bounds(params)
                    assert b.lower_erlang_a <= exact + 1e-12
                    assert b.lower_full_lot <= exact + 1e-12
                    assert exact <= b.upper + 1e-12

    def test_all_values_stay_in_unit_interval(self):
        # Low load makes the raw full-lot bound negative; it must clip to 0.
        b = success_bounds(ModelParams(lam=1.0, mu=1.0, nu=1.0, K=10, M=1))
        for value in (b.upper, b.lower_erlang_a, b.lower_full_lot, b.modified_lower):
            assert 0.0 <= value <= 1.0
        assert b.lower_full_lot == 0.0

    def test_requires_arrivals_and_finite_lot(self):
        with pytest.raises(UndefinedMetricError):
            success_bounds(ModelParams(lam=0.0, mu=1, nu=1, K=5, M=2))
        with pytest.raises(ValidationError):
            success_bounds(ModelParams(lam=1.0, mu=1, nu=1, K=INFINITE_SPACES, M=2))
