import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from rmpmab.errors import InvalidDiscretizationError, InvalidParameterError
from rmpmab.markov import (ChainParams, RateParams, decay_power, discretize_rates, generator_matrix,
                           m_step_matrix, qm_pm, stationary_distribution, transition_matrix)

probs = st.floats(min_value=1e-6, max_value=1 - 1e-6)


class TestChainParams:
    @pytest.mark.parametrize("a,b", [(0.0, 0.3), (1.0, 0.3), (0.2, 0.0), (0.2, 1.0), (-0.1, 0.5), (float("nan"), 0.5)])
    def test_rejects_closed_endpoints(self, a, b):
        with pytest.raises(InvalidParameterError):
            ChainParams(a, b)

    def test_rates_must_be_positive(self):
        with pytest.raises(InvalidParameterError):
            RateParams(1.0, 0.0)
        with pytest.raises(InvalidParameterError):
            RateParams(float("inf"), 1.0)


class TestTransitionMatrix:
    def test_direct_substitution(self):
        np.testing.assert_allclose(transition_matrix(ChainParams(0.2, 0.3)), [[0.8, 0.3], [0.2, 0.7]])

    def test_symmetric_chain(self):
        np.testing.assert_allclose(transition_matrix(ChainParams(0.5, 0.5)), np.full((2, 2), 0.5))

    @given(probs, probs)
    def test_columns_sum_to_one(self, a, b):
        np.testing.assert_allclose(transition_matrix(ChainParams(a, b)).sum(axis=0), 1.0, atol=1e-15)


class TestMStepMatrix:
    def test_zero_and_one_step(self):
        p = ChainParams(0.2, 0.3)
        np.testing.assert_allclose(m_step_matrix(p, 0), np.eye(2), atol=1e-15)
        np.testing.assert_allclose(m_step_matrix(p, 1), transition_matrix(p), atol=1e-15)

    def test_seven_steps_against_repeated_product(self):
        p = ChainParams(0.2, 0.3)
        np.testing.assert_allclose(m_step_matrix(p, 7), np.linalg.matrix_power(transition_matrix(p), 7), atol=1e-12)

    def test_eigendecomposition_oracle(self):
        p = ChainParams(0.37, 0.81)
        w, v = np.linalg.eig(transition_matrix(p))
        oracle = (v @ np.diag(w ** 13) @ np.linalg.inv(v)).real
        np.testing.assert_allclose(m_step_matrix(p, 13), oracle, atol=1e-12)

    def test_huge_power_is_stationary(self):
        p = ChainParams(0.2, 0.3)
        pi = stationary_distribution(p)
        big = m_step_matrix(p, 10**6)
        for col in range(2):
            np.testing.assert_allclose(big[:, col], pi, atol=1e-9)

    @settings(max_examples=60)
    @given(probs, probs, st.integers(0, 500))
    def test_stochastic_for_all_m(self, a, b, m):
        mat = m_step_matrix(ChainParams(a, b), m)
        assert np.all(mat >= -1e-15) and np.all(mat <= 1 + 1e-15)
        np.testing.assert_allclose(mat.sum(axis=0), 1.0, atol=1e-12)

    @settings(max_examples=60)
    @given(probs, probs, st.integers(0, 250), st.integers(0, 250))
    def test_semigroup(self, a, b, m1, m2):
        p = ChainParams(a, b)
        np.testing.assert_allclose(m_step_matrix(p, m1 + m2), m_step_matrix(p, m1) @ m_step_matrix(p, m2), atol=1e-11)

    def test_rejects_negative_or_fractional_steps(self):
        with pytest.raises(InvalidParameterError):
            m_step_matrix(ChainParams(0.2, 0.3), -1)
        with pytest.raises(InvalidParameterError):
            m_step_matrix(ChainParams(0.2, 0.3), 1.5)


class TestDecayPower:
    def test_exact_below_and_log_above_limit(self):
        assert decay_power(-0.5, 3) == -0.125
        np.testing.assert_allclose(decay_power(-0.9, 101), -(0.9 ** 101), rtol=1e-12)
        assert decay_power(0.5, 5000) == 0.0

    def test_array_matches_scalar(self):
        ms = np.arange(0, 200)
        np.testing.assert_allclose(decay_power(-0.7, ms), [decay_power(-0.7, int(m)) for m in ms], rtol=1e-13, atol=0)


class TestStationary:
    def test_power_iteration_oracle(self):
        p = ChainParams(0.2, 0.3)
        v = np.array([1.0, 0.0])
        for _ in range(2000):
            v = transition_matrix(p) @ v
        np.testing.assert_allclose(stationary_distribution(p), v, atol=1e-10)
        np.testing.assert_allclose(stationary_distribution(p), (0.6, 0.4))

    def test_equal_rates(self):
        np.testing.assert_allclose(stationary_distribution(ChainParams(0.3, 0.3)), (0.5, 0.5))

    @given(probs, probs)
    def test_fixed_point(self, a, b):
        p = ChainParams(a, b)
        pi = np.array(stationary_distribution(p))
        np.testing.assert_allclose(transition_matrix(p) @ pi, pi, atol=1e-12)


class TestQmPm:
    def test_zero_steps(self):
        assert qm_pm(ChainParams(0.2, 0.3), 0) == (1.0, 0.0)

    def test_large_m_is_stationary(self):
        q, p = qm_pm(ChainParams(0.2, 0.3), 400)
        assert q == pytest.approx(0.4, abs=1e-12) and p == pytest.approx(0.4, abs=1e-12)

    def test_matches_matrix_entries(self):
        params = ChainParams(0.2, 0.3)
        q, p = qm_pm(params, 5)
        mat = m_step_matrix(params, 5)
        assert q == pytest.approx(mat[1, 1], abs=1e-15)
        assert p == pytest.approx(mat[1, 0], abs=1e-15)

    def test_array_argument(self):
        q, p = qm_pm(ChainParams(0.2, 0.3), np.array([0, 1, 2]))
        np.testing.assert_allclose(q, [1.0, 0.7, 0.55])
        np.testing.assert_allclose(p, [0.0, 0.2, 0.3])


class TestDiscretize:
    def test_direct_scaling(self):
        c = discretize_rates(RateParams(2.0, 0.5), 100, 0.01)
        assert c.alpha == pytest.approx(0.0002) and c.beta == pytest.approx(0.005)

    def test_rejects_bad_steps(self):
        with pytest.raises(InvalidDiscretizationError):
            discretize_rates(RateParams(2.0, 0.5), 100, 0.0)
        with pytest.raises(InvalidDiscretizationError):
            discretize_rates(RateParams(1.0, 1.0), 1, 2.0)

    def test_converges_to_matrix_exponential(self):
        rates, n, tau = RateParams(2.0, 0.5), 4, 1.5
        exact = expm(generator_matrix(rates, n) * tau)
        errors = []
        for dt in (1e-2, 1e-3, 1e-4):
            chain = discretize_rates(rates, n, dt)
            errors.append(np.abs(m_step_matrix(chain, int(np.ceil(tau / dt))) - exact).max())
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 1e-3
