import numpy as np
import pytest

from rmpmab.belief import (BeliefMatrix, BeliefState, BeliefTable, Regime, ThompsonBelief, collapse_from_count,
                           collapse_matrix, propagate_matrix, update_selected, update_unselected)
from rmpmab.errors import DelayOverflowError, DomainError
from rmpmab.markov import ChainParams, qm_pm

P = ChainParams(0.2, 0.3)


class TestBeliefState:
    def test_select_resets_delay(self):
        assert update_selected(BeliefState(3, 7, max_count=10), 5) == BeliefState(5, 0, max_count=10)
        assert update_selected(BeliefState(0, 0), 0) == BeliefState(0, 0)

    def test_observation_above_n(self):
        with pytest.raises(DomainError):
            update_selected(BeliefState(3, 7, max_count=10), 11)

    def test_unselected_ages(self):
        assert update_unselected(BeliefState(3, 7)) == BeliefState(3, 8)
        cont = BeliefState(2, 0.5, Regime.CONTINUOUS)
        assert update_unselected(cont, 0.25) == BeliefState(2, 0.75, Regime.CONTINUOUS)

    def test_discrete_rejects_fractional_increment(self):
        with pytest.raises(DomainError):
            update_unselected(BeliefState(3, 7), 0.5)
        with pytest.raises(DomainError):
            update_unselected(BeliefState(3, 1.0, Regime.CONTINUOUS), 0.0)

    def test_rejects_negative_or_fractional_delay(self):
        with pytest.raises(DomainError):
            BeliefState(1, -1)
        with pytest.raises(DomainError):
            BeliefState(1, 0.5)

    def test_delay_overflow(self):
        with pytest.raises(DelayOverflowError):
            update_unselected(BeliefState(1, 2 ** 32 - 1))

    def test_delay_counts_steps_since_observation(self):
        b = update_selected(BeliefState(0, 0), 4)
        for _ in range(6):
            b = update_unselected(b)
        assert b.delay == 6 and b.last_observation == 4


class TestBeliefTable:
    def test_matches_scalar_updates(self):
        table = BeliefTable(3, max_counts=[10, 10, 10])
        states = [None, None, None]
        rng = np.random.default_rng(0)
        for step in range(40):
            table.age()
            states = [None if s is None else update_unselected(s) for s in states]
            k, y = int(rng.integers(3)), int(rng.integers(11))
            table.observe(k, y)
            states[k] = update_selected(states[k] or BeliefState(0, 0, max_count=10), y)
        assert [table[k] for k in range(3)] == states

    def test_unobserved_arm_raises(self):
        with pytest.raises(DomainError):
            BeliefTable(2)[0]

    def test_from_states_round_trip(self):
        states = [BeliefState(1, 3, max_count=5), BeliefState(4, 0, max_count=5)]
        table = BeliefTable.from_states(states)
        assert [table[0], table[1]] == states


class TestBeliefMatrix:
    def test_zero_steps_unchanged(self):
        b = BeliefMatrix(np.array([0.1, 0.9]))
        assert propagate_matrix(b, P, 0) is b

    def test_converges_to_stationary(self):
        b = propagate_matrix(BeliefMatrix(np.array([0.3, 0.3, 0.3])), P, 500)
        np.testing.assert_allclose(b.per_process_active_prob, 0.4, atol=1e-12)

    def test_active_process_follows_qm(self):
        for m in (1, 2, 9):
            b = propagate_matrix(BeliefMatrix(np.array([1.0, 0.0])), P, m)
            q, p = qm_pm(P, m)
            np.testing.assert_allclose(b.per_process_active_prob, [q, p], atol=1e-15)

    def test_collapse(self):
        assert not collapse_matrix([0, 0, 0]).per_process_active_prob.any()
        assert collapse_matrix([1, 1]).per_process_active_prob.all()
        np.testing.assert_array_equal(collapse_matrix([1, 0, 1]).per_process_active_prob, [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(collapse_from_count(2, 4).per_process_active_prob, [1, 1, 0, 0])

    def test_marginals_validated(self):
        with pytest.raises(DomainError):
            BeliefMatrix(np.array([1.5]))


class TestThompsonBelief:
    def test_matches_per_arm_matrices(self):
        params = [ChainParams(0.2, 0.3), ChainParams(0.05, 0.6)]
        tb = ThompsonBelief(params, [4, 3])
        mats = [BeliefMatrix(np.full(4, params[0].active_fraction)), BeliefMatrix(np.full(3, params[1].active_fraction))]
        tb.collapse(1, 2)
        mats[1] = collapse_from_count(2, 3)
        for _ in range(5):
            tb.propagate()
            mats = [propagate_matrix(m, p, 1) for m, p in zip(mats, params)]
        for k in range(2):
            np.testing.assert_allclose(tb.matrix(k).per_process_active_prob, mats[k].per_process_active_prob, atol=1e-15)

    def test_sample_counts_law(self):
        tb = ThompsonBelief([ChainParams(0.2, 0.3)], [50])
        rng = np.random.default_rng(3)
        draws = np.array([tb.sample_counts(rng)[0] for _ in range(4000)])
        assert abs(draws.mean() - 20.0) < 4 * np.sqrt(12.0 / 4000)
