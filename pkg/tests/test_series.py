import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import digamma, gammaln, polygamma

from balanced.errors import DomainError, RangeError
from balanced.series import (CoefficientSequence, asymptotic_report, continuous_coefficient,
                             eval_log_f, eval_profile, factorial_sequence, log_f_t, peak_data,
                             safe_index_max, solve_u)


@pytest.fixture(scope="module")
def fact100():
    return factorial_sequence(100)


@pytest.fixture(scope="module")
def fact700():
    return factorial_sequence(700)


class TestSequence:
    def test_validation(self):
        with pytest.raises(DomainError):
            CoefficientSequence(0.0, [0.0, np.nan])
        with pytest.raises(DomainError):
            CoefficientSequence(1.0, [0.0, 1.0])
        with pytest.raises(DomainError):
            CoefficientSequence(0.0, [])

    def test_immutable(self):
        seq = factorial_sequence(10)
        with pytest.raises(ValueError):
            seq.lambdas[1] = 3.0

    def test_normalization_check(self):
        factorial_sequence(8).check_normalized()
        with pytest.raises(DomainError):
            factorial_sequence(7).check_normalized()
        with pytest.raises(DomainError):
            CoefficientSequence(0.0, np.arange(12.0) + 1).check_normalized()

    def test_factorial_second_differences_positive(self):
        assert np.all(factorial_sequence(60).second_differences() > 0)


class TestEvalLogF:
    def test_e_at_one(self):
        assert eval_log_f(factorial_sequence(60), 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_constant(self):
        seq = CoefficientSequence(0.0, [0.0])
        assert eval_log_f(seq, 0.0) == 0.0
        assert eval_log_f(seq, 123.0) == 0.0

    def test_e_at_ten(self):
        assert eval_log_f(factorial_sequence(60), 10.0) == pytest.approx(10.0, abs=1e-8)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            eval_log_f(factorial_sequence(10), -1.0)

    def test_vector_form(self):
        seq = factorial_sequence(80)
        t = np.array([-2.0, 0.0, 1.5])
        assert np.allclose(log_f_t(seq, t), [eval_log_f(seq, math.exp(s)) for s in t], rtol=1e-14)

    @given(st.floats(0.0, 3.0), st.floats(1e-3, 20.0))
    @settings(max_examples=50, deadline=None)
    def test_scaling(self, log_k, x):
        seq = factorial_sequence(60)
        k = math.exp(log_k)
        assert eval_log_f(seq.scaled(k), x) == pytest.approx(eval_log_f(seq, x) + log_k, abs=1e-12)


class TestProfile:
    def test_point_mass(self):
        lam = np.full(12, np.inf)
        lam[5] = 0.0
        prof = eval_profile(CoefficientSequence(0.0, lam), 3.0)
        assert prof.u == 5.0
        assert prof.index_variance == 0.0

    def test_exponential_identity(self, fact100):
        prof = eval_profile(fact100, 25.0)
        assert prof.u == pytest.approx(25.0, rel=1e-12)
        assert prof.index_variance == pytest.approx(25.0, rel=1e-10)
        assert prof.weights.sum() == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(0.01, 40.0))
    @settings(max_examples=60, deadline=None)
    def test_weights_and_moments(self, x):
        seq = factorial_sequence(100)
        prof = eval_profile(seq, x)
        assert abs(prof.weights.sum() - 1.0) <= 1e-12
        idx = np.arange(prof.weights.size)
        var = float(np.sum(prof.weights * (idx - prof.u) ** 2))
        assert prof.index_variance == pytest.approx(var, rel=1e-10)
        assert 0 <= prof.u <= seq.truncation_order

    def test_nonpositive_x(self, fact100):
        with pytest.raises(DomainError):
            eval_profile(fact100, 0.0)

    def test_solve_u(self, fact100):
        assert math.exp(solve_u(fact100, 30.0)) == pytest.approx(30.0, rel=1e-12)
        with pytest.raises(RangeError):
            solve_u(fact100, 100.0)


class TestContinuousCoefficient:
    def test_gamma_oracle(self, fact100):
        cc = continuous_coefficient(fact100, 10.0)
        assert cc.lambda_of_a == pytest.approx(math.log(3628800.0), rel=1e-13)
        assert cc.lambda_prime == pytest.approx(float(digamma(11.0)), rel=1e-12)
        assert cc.lambda_second == pytest.approx(float(polygamma(1, 11.0)), rel=1e-10)
        assert cc.c_of_a == pytest.approx(math.exp(-cc.lambda_of_a), rel=1e-15)

    @pytest.mark.parametrize("a", [1.0, 2.5, 17.3, 40.0, 60.0, 250.0])
    def test_non_integer_gamma(self, fact700, a):
        cc = continuous_coefficient(fact700, a)
        assert cc.lambda_of_a == pytest.approx(float(gammaln(a + 1)), rel=1e-12, abs=1e-12)
        assert cc.lambda_prime == pytest.approx(float(digamma(a + 1)), rel=1e-11)
        assert cc.lambda_second == pytest.approx(float(polygamma(1, a + 1)), rel=1e-9)
        assert cc.lambda_second > 0

    @pytest.mark.parametrize("a", [20.0, 50.0])
    def test_second_difference(self, fact100, a):
        h = 1e-2
        lam = lambda s: continuous_coefficient(fact100, s).lambda_of_a
        fd = (lam(a + h) - 2 * lam(a) + lam(a - h)) / h ** 2
        assert fd == pytest.approx(continuous_coefficient(fact100, a).lambda_second, rel=1e-4)

    def test_second_difference_at_100(self, fact700):
        h = 1e-2
        lam = lambda s: continuous_coefficient(fact700, s).lambda_of_a
        fd = (lam(100 + h) - 2 * lam(100.0) + lam(100 - h)) / h ** 2
        assert fd == pytest.approx(continuous_coefficient(fact700, 100.0).lambda_second, rel=1e-4)

    def test_integer_matches_solved(self, solved_half):
        cc = continuous_coefficient(solved_half, 5.0)
        assert cc.c_of_a == pytest.approx(math.exp(-solved_half.lambdas[5]), rel=1e-7)

    def test_truncation_at_safe_edge(self, fact100):
        # the 4 sigma margin leaves a visible but small truncation effect
        a = safe_index_max(100)
        cc = continuous_coefficient(fact100, a)
        err = abs(cc.lambda_of_a - float(gammaln(a + 1)))
        assert 1e-6 < err < 1e-2

    def test_range_errors(self, fact100):
        with pytest.raises(DomainError):
            continuous_coefficient(fact100, 0.5)
        with pytest.raises(RangeError) as info:
            continuous_coefficient(fact100, 70.0)
        assert info.value.safe_max == pytest.approx(safe_index_max(100))


class TestPeaks:
    def test_factorial_height(self, fact700):
        pd = peak_data(fact700, 100.0)
        assert pd.x_a == pytest.approx(100.0, rel=1e-12)
        # h_100 = e^100 100! / 100^100, Stirling series to third order
        stirling = math.sqrt(200 * math.pi) * (1 + 1 / 1200 + 1 / (288 * 1e4)
                                               - 139 / (51840 * 1e6))
        assert pd.h_a_at_xa == pytest.approx(stirling, rel=1e-10)
        assert pd.h_a_at_xa / 10.0 == pytest.approx(math.sqrt(2 * math.pi), rel=0.02)
        assert pd.delta_a >= 1.0
        assert pd.x_tilde_a == pytest.approx(math.exp(float(digamma(101.0))), rel=1e-12)

    def test_monotone_in_a(self, fact100):
        grid = [5.0, 10.0, 20.0, 35.0, 55.0]
        pds = [peak_data(fact100, a) for a in grid]
        assert all(p2.x_a > p1.x_a for p1, p2 in zip(pds, pds[1:]))
        assert all(p2.x_tilde_a > p1.x_tilde_a for p1, p2 in zip(pds, pds[1:]))
        assert all(p.delta_a >= 1.0 and p.h_a_at_xa > 0 for p in pds)

    def test_solved_height_rough_bound(self, solved_half_large):
        for a in (40.0, 80.0, 120.0):
            assert peak_data(solved_half_large, a).h_a_at_xa >= math.sqrt(a) / 13


class TestAsymptoticReport:
    def test_factorial_400(self, fact700):
        (row,) = asymptotic_report(fact700, [400.0])
        assert row.a_lambda_second == pytest.approx(400 * float(polygamma(1, 401.0)), rel=1e-9)
        assert row.a_lambda_second == pytest.approx(1.0, rel=0.02)
        assert row.f_ratio_at_x_tilde == pytest.approx(1.0, abs=0.01)
        assert row.dx_tilde_da == pytest.approx(1.0, abs=0.02)
        assert abs(row.u_residual) < 1e-9
        assert row.variance_over_x == pytest.approx(1.0, rel=1e-9)

    def test_range_guard(self, fact100):
        with pytest.raises(RangeError):
            asymptotic_report(fact100, [60.0])
