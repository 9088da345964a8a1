"""Monte Carlo regret of strategies."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expbandit.exact_dp import GridSpec, PolicyDecision, risk_with_forced_start, solve_exact
from expbandit.model import BanditState, DiscretePrior, Theta
from expbandit.simulate import (CHUNK, AlwaysArm, DPPolicy, EpsilonGreedy, ForcedStartThenDP, Greedy,
                                RegretEstimate, bayes_regret_mc, regret_samples, replication_uniforms,
                                row_width, simulate_strategy)

SYM = DiscretePrior.symmetric_two_point(1.0, 0.3)


@pytest.fixture(scope="module")
def sym_dp():
    table, risk = solve_exact(SYM, 6, GridSpec.for_prior(SYM, 64))
    return table, risk


class TestStreams:
    def test_row_width(self):
        assert row_width(1) == 4
        assert row_width(20) == 64
        assert row_width(21) == 64
        assert row_width(22) == 68

    def test_rows_independent_of_start(self):
        full = replication_uniforms(11, 0, 20, 7)
        part = replication_uniforms(11, 13, 7, 7)
        np.testing.assert_array_equal(full[13:], part)

    def test_seeds_differ(self):
        assert not np.array_equal(replication_uniforms(1, 0, 3, 5), replication_uniforms(2, 0, 3, 5))

    def test_negative_seed_accepted(self):
        assert replication_uniforms(-1, 0, 1, 2).shape == (1, 8)


class TestRegretEstimate:
    def test_from_samples(self):
        x = np.array([1.0, 2.0, 4.0, 5.0])
        est = RegretEstimate.from_samples(x)
        assert est.mean == 3.0
        assert est.std_error == pytest.approx(np.std(x, ddof=1) / 2)
        assert est.replications == 4
        assert est.within(3.0 + 2 * est.std_error)
        assert not est.within(3.0 + 4 * est.std_error)


class TestSimulateStrategy:
    def test_equal_arms(self):
        est = simulate_strategy(Greedy(SYM), Theta(1.0, 1.0), 10, 3, 4000)
        assert abs(est.mean) <= 3 * est.std_error

    def test_always_worse_arm(self):
        est = simulate_strategy(AlwaysArm(1), Theta(1.0, 2.0), 10, 5, 20000)
        assert est.within(10.0)

    def test_always_better_arm_nonnegative(self):
        est = simulate_strategy(AlwaysArm(2), Theta(1.0, 2.0), 10, 5, 5000)
        assert est.mean >= -3 * est.std_error
        assert est.within(0.0)

    def test_deterministic(self, sym_dp):
        pol = DPPolicy(sym_dp[0])
        a = simulate_strategy(pol, Theta(1.3, 0.7), 6, 42, 3000)
        b = simulate_strategy(pol, Theta(1.3, 0.7), 6, 42, 3000)
        assert a == b

    def test_threads_and_chunks_do_not_matter(self, sym_dp):
        pol = DPPolicy(sym_dp[0])
        reps = 2 * CHUNK + 123
        serial = regret_samples(pol, SYM, 6, 9, reps, threads=None)
        threaded = regret_samples(pol, SYM, 6, 9, reps, threads=3)
        np.testing.assert_array_equal(serial, threaded)
        head = regret_samples(pol, SYM, 6, 9, 50)
        np.testing.assert_array_equal(serial[:50], head)

    def test_tie_arm(self):
        class Indifferent(AlwaysArm):
            def decide_many(self, n1, n2, X1, X2, u):
                return np.full(X1.shape, PolicyDecision.TIE, dtype=int)

        pol = Indifferent(1)
        a = simulate_strategy(pol, Theta(1.0, 3.0), 4, 0, 2000, tie_arm=1)
        b = simulate_strategy(pol, Theta(1.0, 3.0), 4, 0, 2000, tie_arm=2)
        assert a.within(8.0) and b.within(0.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            simulate_strategy(AlwaysArm(1), Theta(1.0, 2.0), 5, 0, 0)
        with pytest.raises(ValueError):
            simulate_strategy(AlwaysArm(1), Theta(1.0, 2.0), 0, 0, 10)
        with pytest.raises(ValueError):
            simulate_strategy(AlwaysArm(1), Theta(1.0, 2.0), 5, 0, 10, tie_arm=3)
        with pytest.raises(ValueError):
            AlwaysArm(0)
        with pytest.raises(ValueError):
            EpsilonGreedy(SYM, 1.5)


class TestPolicies:
    def test_call_on_state(self, sym_dp):
        pol = DPPolicy(sym_dp[0])
        assert pol(BanditState(4.0, 2, 1.0, 2)) == PolicyDecision.ARM1
        assert pol(BanditState()) == PolicyDecision.TIE

    def test_dp_outside_table(self, sym_dp):
        with pytest.raises(ValueError):
            DPPolicy(sym_dp[0])(BanditState(1.0, 3, 1.0, 3))

    def test_greedy_follows_posterior_mean(self):
        g = Greedy(SYM)
        assert g(BanditState(5.0, 3, 2.0, 3)) == PolicyDecision.ARM1
        assert g(BanditState(2.0, 3, 5.0, 3)) == PolicyDecision.ARM2

    def test_eps_greedy_explores(self):
        eg = EpsilonGreedy(SYM, 1.0)
        s = BanditState(5.0, 3, 2.0, 3)
        assert eg(s, (0.2, 0.9)) == PolicyDecision.ARM2
        assert eg(s, (0.2, 0.1)) == PolicyDecision.ARM1
        assert EpsilonGreedy(SYM, 0.0)(s, (0.0, 0.9)) == PolicyDecision.ARM1

    def test_forced_start_order(self, sym_dp):
        pol = ForcedStartThenDP(sym_dp[0], 2)
        assert pol(BanditState()) == PolicyDecision.ARM1
        assert pol(BanditState(1.0, 1, 0.0, 0)) == PolicyDecision.ARM2
        assert pol(BanditState(1.0, 2, 0.5, 1)) == PolicyDecision.ARM2
        with pytest.raises(ValueError):
            ForcedStartThenDP(sym_dp[0], 0)


class TestBayesRegret:
    def test_point_mass_dp(self):
        p = DiscretePrior.point_mass(2.0, 1.0)
        table, _ = solve_exact(p, 8, GridSpec.for_prior(p, 16))
        est = bayes_regret_mc(DPPolicy(table), p, 8, 1, 5000)
        assert est.within(0.0)

    def test_dp_matches_solver(self, sym_dp):
        table, risk = sym_dp
        est = bayes_regret_mc(DPPolicy(table), SYM, 6, 2024, 40000)
        assert est.within(risk)

    def test_greedy_not_better_than_optimum(self, sym_dp):
        _, risk = sym_dp
        est = bayes_regret_mc(Greedy(SYM), SYM, 6, 77, 20000)
        assert est.mean >= risk - 3 * est.std_error

    def test_forced_start(self):
        g = GridSpec.for_prior(SYM, 96)
        table, _ = solve_exact(SYM, 4, g)
        ref = risk_with_forced_start(SYM, 4, 1, g)
        est = bayes_regret_mc(ForcedStartThenDP(table, 1), SYM, 4, 8, 40000)
        assert est.within(ref)

    @given(st.integers(0, 2 ** 64), st.integers(1, 40))
    @settings(max_examples=10, deadline=None)
    def test_reproducible(self, seed, reps):
        a = bayes_regret_mc(Greedy(SYM), SYM, 3, seed, reps)
        b = bayes_regret_mc(Greedy(SYM), SYM, 3, seed, reps)
        assert a == b
