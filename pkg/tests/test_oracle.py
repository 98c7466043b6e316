import numpy as np
import pytest

from rmpmab.belief import BeliefState
from rmpmab.ensemble import EnsembleSpec, conditional_mean
from rmpmab.errors import DegenerateDiscountError, DomainError, OracleFailure
from rmpmab.markov import ChainParams
from rmpmab.oracle import (TruncatedArmMdp, affine_check, certify, crossing_violations, default_max_delay,
                           indifference_subsidy, passive_set_sweep, value_iteration)
from rmpmab.policies import FiniteArm, whittle_discrete

ARM = FiniteArm(ChainParams(0.2, 0.3), 10)
M = 60


@pytest.fixture(scope="module")
def mdp05():
    return TruncatedArmMdp(ARM, M, 0.5)


@pytest.fixture(scope="module")
def mdp0():
    return TruncatedArmMdp(ARM, M, 0.0)


class TestValueIteration:
    def test_huge_subsidy_is_all_passive(self, mdp05):
        lam = 1e3
        table = value_iteration(mdp05, lam)
        assert not table.optimal_action.any()
        np.testing.assert_allclose(table.values, lam / (1 - 0.5), rtol=1e-9)

    def test_very_negative_subsidy_is_all_active(self, mdp05):
        assert value_iteration(mdp05, -1e3).optimal_action.all()

    def test_bellman_residual_small(self, mdp05):
        table = value_iteration(mdp05, 4.5, tol=1e-10)
        assert table.bellman_residual() < 1e-9

    def test_iteration_cap(self):
        mdp = TruncatedArmMdp(ARM, 20, 0.999)
        with pytest.raises(OracleFailure):
            value_iteration(mdp, 4.0, tol=1e-12, max_iter=5)

    def test_gamma_one_rejected(self):
        with pytest.raises(DegenerateDiscountError):
            TruncatedArmMdp(ARM, 10, 1.0)

    def test_reward_is_conditional_mean(self, mdp05):
        spec = EnsembleSpec(ARM.params, 10)
        for j, m in [(0, 0), (8, 2), (3, 17)]:
            assert mdp05.reward[j, m] == pytest.approx(conditional_mean(spec, j, m), abs=1e-12)


class TestIndifferenceSubsidy:
    @pytest.mark.parametrize("j,m", [(0, 0), (8, 2), (10, 5), (4, 1)])
    def test_gamma_zero_is_conditional_mean(self, mdp0, j, m):
        spec = EnsembleSpec(ARM.params, 10)
        assert indifference_subsidy(mdp0, (j, m), tol=1e-11) == pytest.approx(conditional_mean(spec, j, m), abs=1e-9)

    def test_truncation_does_not_move_the_answer(self):
        a = indifference_subsidy(TruncatedArmMdp(ARM, 41, 0.5), (8, 2))
        b = indifference_subsidy(TruncatedArmMdp(ARM, 120, 0.5), (8, 2))
        assert a == pytest.approx(b, abs=1e-8)
        assert default_max_delay(ARM) == 41

    def test_state_outside_space(self, mdp05):
        with pytest.raises(DomainError):
            indifference_subsidy(mdp05, (11, 0))

    @pytest.mark.xfail(strict=True, reason="oracle gives 5.4375 here; the closed form gives 5.5 (see decisions ledger)")
    def test_matches_closed_form_at_8_2(self, mdp05):
        closed = whittle_discrete(ARM, BeliefState(8, 2, max_count=10), 0.5)
        assert indifference_subsidy(mdp05, (8, 2)) == pytest.approx(closed, abs=1e-4)

    @pytest.mark.xfail(strict=True, reason="at j = N*pi the oracle index is about 4.43, not 4 (see decisions ledger)")
    def test_steady_state_observation(self, mdp05):
        assert indifference_subsidy(mdp05, (4, 0)) == pytest.approx(4.0, abs=1e-6)

    def test_fresh_empty_observation_has_negative_index(self, mdp05):
        # acting at (0, 0) reveals nothing and earns nothing, while waiting lets activity build up
        assert indifference_subsidy(mdp05, (0, 0)) < 0.0

    def test_index_below_process_count(self, mdp05):
        # a subsidy of N per step beats any reward stream
        for j, m in [(10, 0), (7, 3), (2, 9)]:
            assert indifference_subsidy(mdp05, (j, m)) <= 10.0


class TestAffineForm:
    @pytest.mark.xfail(strict=True, reason="V(., m) = max(lambda, E[Y|j, m]) is piecewise in j at gamma = 0")
    def test_gamma_zero_slope_is_decay_power(self, mdp0):
        lam = indifference_subsidy(mdp0, (8, 3), tol=1e-11)
        fit = affine_check(value_iteration(mdp0, lam), 3, lam)
        assert fit.slope == pytest.approx(0.5 ** 3, abs=1e-4)

    @pytest.mark.xfail(strict=True, reason="fitted intercept and slope at m = 0 differ from the closed-form A0, B0")
    def test_zero_delay_coefficients(self, mdp05):
        lam = indifference_subsidy(mdp05, (8, 0))
        fit = affine_check(value_iteration(mdp05, lam), 0, lam)
        assert fit.intercept == pytest.approx(fit.closed_intercept, abs=1e-4)
        assert fit.slope == pytest.approx(fit.closed_slope, abs=1e-4)

    @pytest.mark.xfail(strict=True, reason="value column is not affine in j at the indifference subsidy")
    def test_value_column_affine(self, mdp05):
        lam = indifference_subsidy(mdp05, (8, 2))
        table = value_iteration(mdp05, lam)
        fit = affine_check(table, 2, lam)
        assert fit.residual < 1e-6 * np.abs(table.values).max()

    def test_closed_coefficients_reported(self, mdp05):
        lam = indifference_subsidy(mdp05, (8, 0))
        fit = affine_check(value_iteration(mdp05, lam), 0, lam)
        assert fit.closed_slope == pytest.approx(1.0 / (1 - 0.5 * 1.0))

    def test_requires_matching_subsidy(self, mdp05):
        with pytest.raises(DomainError):
            affine_check(value_iteration(mdp05, 3.0), 0, 4.0)


class TestIndexability:
    def test_single_crossing(self, mdp05):
        passive = passive_set_sweep(mdp05, np.linspace(-5, 11, 41))
        assert crossing_violations(passive) == []
        assert passive[-1].all() and not passive[0].any()

    def test_detects_flip_back(self):
        passive = np.array([[[False]], [[True]], [[False]]])
        assert crossing_violations(passive) == [(0, 0)]
        assert crossing_violations(passive, states=[(1, 1)]) == []


class TestCertify:
    def test_gamma_zero_agrees(self):
        rows = certify(ARM, [0.0], js=range(11), ms=range(4), max_delay=20, tol=1e-11)
        assert max(r.abs_diff for r in rows) < 1e-9

    def test_row_layout(self):
        rows = certify(ARM, [0.3], js=[2], ms=[1], max_delay=20)
        assert (rows[0].j, rows[0].m, rows[0].gamma) == (2, 1, 0.3)
        assert rows[0].closed_form == pytest.approx(whittle_discrete(ARM, BeliefState(2, 1, max_count=10), 0.3))
