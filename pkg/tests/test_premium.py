import math

import numpy as np
import pytest

from src.domain.distributions import Beta, Gamma
from src.domain.models.common_models import PremiumMethod, Verdict
from src.domain.models.risk_models import BaseRiskModel, MeasureChange
from src.use_cases.premium_use_cases import PremiumUseCases
from src.utils.exceptions import AssumptionViolatedError, BadIntervalError, InsufficientPathsError

from tests.conftest import SEED

MIXED_ESSCHER_ALPHA = "ln(c+theta) + 2*ln((c+1)/(c+1+theta))"


def mixed_esscher(c: float):
    base = BaseRiskModel(claim_law=Gamma(rate=c + 1, shape=2.0), mixing_law=Beta(a=2.0, b=1.0))
    change = MeasureChange.from_text(MIXED_ESSCHER_ALPHA, "c*x - 2*ln(c+1)", "1/(2*theta)", params={"c": c}, level=2)
    return base, change


class TestPremiumDensity:
    def test_square_change(self, premium, gamma_base, square_derived):
        quote = premium.premium_density(gamma_base, square_derived)
        assert quote.p_base == pytest.approx(5.0, rel=1e-12)
        assert quote.p_derived == pytest.approx(200 / 9, rel=1e-9)
        assert quote.expected_count_derived == pytest.approx(20 / 9, rel=1e-9)
        assert quote.mean_claim_derived == pytest.approx(10.0, rel=1e-12)
        assert quote.per_theta_base == "5*theta"
        assert quote.per_theta_derived == "10*theta^2"
        assert quote.method is PremiumMethod.CLOSED_FORM
        assert premium.check_condition_13(quote).holds

    def test_without_a_change_both_sides_agree(self, premium, gamma_base):
        quote = premium.premium_density(gamma_base)
        assert quote.p_base == quote.p_derived == 5.0
        assert not quote.cond13.holds

    def test_identity_change(self, premium, derive, gamma_base):
        identity = MeasureChange.identity()
        quote = premium.premium_density(gamma_base, derive(gamma_base, identity))
        assert quote.p_derived == quote.p_base
        assert not premium.check_condition_13(quote).holds
        for theta in (0.1, 1.0, 5.0):
            assert not premium.check_condition_14(theta, gamma_base, identity).holds

    def test_mixed_esscher_premium(self, premium, derive, beta_base, mixed_esscher_change):
        quote = premium.premium_density(beta_base, derive(beta_base, mixed_esscher_change))
        assert quote.method is PremiumMethod.QUADRATURE
        assert quote.mean_claim_derived == pytest.approx(2.0, rel=1e-12)
        assert quote.p_derived == pytest.approx(8 * PremiumUseCases.j_integral(1.0), rel=1e-8)
        assert quote.p_derived == pytest.approx(0.9355, abs=1e-4)

    def test_expected_value_ratio(self, premium, derive, gamma_base, doubling_change):
        quote = premium.premium_density(gamma_base, derive(gamma_base, doubling_change))
        assert quote.p_derived / quote.p_base == pytest.approx(2.0, rel=1e-12)
        p_theta, q_theta = premium.per_theta_premiums(gamma_base, doubling_change)
        for theta in (0.2, 1.0, 3.0):
            assert q_theta(theta) / p_theta(theta) == pytest.approx(2.0, rel=1e-12)

    def test_esscher_premium_grows_with_c(self, premium, derive, gamma_base):
        premiums = []
        for c in (0.01, 0.05, 0.1):
            change = PremiumUseCases.esscher_change(c, gamma_base)
            premiums.append(premium.premium_density(gamma_base, derive(gamma_base, change)).p_derived)
        assert premiums == pytest.approx([1 / 0.19, 1 / 0.15, 1 / 0.1], rel=1e-9)
        assert premiums == sorted(premiums)


class TestSchedule:
    def test_linear_in_remaining_time(self, premium, gamma_base, square_derived):
        quote = premium.premium_density(gamma_base, square_derived)
        assert premium.premium_schedule(quote, 0.5, 2.0) == pytest.approx(1.5 * 200 / 9, rel=1e-9)
        assert premium.premium_schedule(quote, 2.0, 2.0) == 0.0

    def test_mixed_esscher_schedule(self, premium, derive, beta_base, mixed_esscher_change):
        quote = premium.premium_density(beta_base, derive(beta_base, mixed_esscher_change))
        assert premium.premium_schedule(quote, 0.0, 1.0) == pytest.approx(0.93550, abs=1e-4)

    @pytest.mark.parametrize("t, horizon", [(-0.1, 1.0), (1.5, 1.0)])
    def test_outside_the_cover(self, premium, gamma_base, square_derived, t, horizon):
        quote = premium.premium_density(gamma_base, square_derived)
        with pytest.raises(BadIntervalError):
            premium.premium_schedule(quote, t, horizon)


class TestConditions:
    def test_condition_14_flips_at_one_half(self, premium, gamma_base, square_change):
        assert premium.check_condition_14(0.5 + 1e-6, gamma_base, square_change).holds
        assert not premium.check_condition_14(0.5 - 1e-6, gamma_base, square_change).holds

    def test_condition_14_margin(self, premium, gamma_base, square_change):
        check = premium.check_condition_14(1.0, gamma_base, square_change)
        assert (check.lower, check.upper) == pytest.approx((5.0, 10.0), rel=1e-9)
        assert check.margin == pytest.approx(5.0, rel=1e-9)

    def test_esscher_criterion_matches_condition_14(self, premium, gamma_base):
        for c in (0.02, 0.05, 0.1):
            criterion = PremiumUseCases.esscher_criterion(gamma_base, c)
            change = PremiumUseCases.esscher_change(c, gamma_base)
            assert criterion.holds
            assert criterion.holds == premium.check_condition_14(1.0, gamma_base, change).holds

    @pytest.mark.parametrize("c", [0.6, 1.0])
    def test_quadratic_criterion_on_a_grid(self, premium, c):
        base, change = mixed_esscher(c)
        for theta in (np.arange(100) + 0.5) / 100:
            direct = premium.check_condition_14(float(theta), base, change).holds
            assert direct == PremiumUseCases.mixed_esscher_quadratic(float(theta), c)

    def test_quadratic_criterion_has_a_window_below_one(self):
        window = [PremiumUseCases.mixed_esscher_quadratic(theta, 0.6) for theta in (0.05, 0.5, 0.95)]
        assert window == [False, True, False]


class TestJIntegral:
    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 5.0])
    def test_closed_form_matches_quadrature(self, c):
        assert PremiumUseCases.j_integral(c) == pytest.approx(PremiumUseCases.j_integral_quadrature(c), abs=1e-8)

    def test_value_at_one(self):
        assert PremiumUseCases.j_integral(1.0) == pytest.approx(4 / 3 + 3 * math.log(2 / 3), rel=1e-14)
        assert PremiumUseCases.j_integral(1.0) == pytest.approx(0.116938, abs=1e-5)

    @pytest.mark.parametrize("c", [0.0, -1.0])
    def test_needs_positive_c(self, c):
        with pytest.raises(AssumptionViolatedError):
            PremiumUseCases.j_integral(c)

    def test_condition_13_criterion(self, premium):
        check = premium.mixed_esscher_condition_13(1.0)
        assert check.holds
        assert check.lower == pytest.approx(1 / 12)


class TestMonteCarlo:
    def test_simulated_premium(self, premium, gamma_base, square_derived):
        report = premium.mc_premium_density(gamma_base, square_derived, 4_000, SEED)
        assert report.oracle == pytest.approx(200 / 9, rel=1e-9)
        assert report.verdict is Verdict.PASS

    def test_too_few_paths(self, premium, gamma_base, square_derived):
        with pytest.raises(InsufficientPathsError):
            premium.mc_premium_density(gamma_base, square_derived, 10, SEED)
