import math

import numpy as np
import pytest

from src.domain.distributions import Beta, Exponential, Gamma, Poisson, Tilted, Uniform
from src.domain.expression import parse
from src.domain.models.common_models import Verdict
from src.domain.models.risk_models import BaseRiskModel, MeasureChange
from src.use_cases.model_use_cases import ModelUseCases
from src.use_cases.premium_use_cases import PremiumUseCases
from src.utils.exceptions import InadmissibleModelError, NotValidatedError, UnknownIdentifierError


class TestBaseRiskModel:
    def test_identity_rate_by_default(self, gamma_base):
        assert gamma_base.has_identity_rate
        assert gamma_base.rate_fn(2.5) == 2.5

    def test_claims_must_avoid_zero_mass(self):
        with pytest.raises(InadmissibleModelError):
            BaseRiskModel(claim_law=Poisson(lam=1.0), mixing_law=Gamma(rate=2.0, shape=2.0))

    def test_rate_must_be_positive(self):
        with pytest.raises(InadmissibleModelError):
            BaseRiskModel(
                claim_law=Exponential(rate=1.0),
                mixing_law=Uniform(lo=0.0, hi=1.0),
                rate_fn=parse("theta - 0.5", variable="theta"),
            )

    def test_rate_must_be_a_function_of_theta(self):
        with pytest.raises(UnknownIdentifierError):
            BaseRiskModel(claim_law=Exponential(rate=1.0), mixing_law=Gamma(rate=2.0, shape=2.0), rate_fn=parse("x"))


class TestMeasureChange:
    def test_roles_are_enforced(self):
        with pytest.raises(UnknownIdentifierError):
            MeasureChange.from_text(alpha="x")

    def test_beta_is_additive(self, square_change):
        assert square_change.beta(10.0, 2.0) == pytest.approx(math.log(2.0) + math.log(2.0))

    def test_identity(self):
        assert MeasureChange.identity().is_identity()
        assert not MeasureChange.from_text(alpha="0.1").is_identity()


class TestValidateChange:
    def test_square_change_passes_at_level_two(self, model_use_cases, gamma_base, square_change):
        report = model_use_cases.validate_change(gamma_base, square_change)
        assert report.passed
        assert report.level == 2
        assert report.gamma_norm == pytest.approx(1.0, abs=1e-9)
        assert report.xi_norm == pytest.approx(1.0, abs=1e-9)
        assert report.claim_gates[1] == pytest.approx(10.0, rel=1e-8)
        assert report.mixing_gates[1] == pytest.approx(20 / 9, rel=1e-8)

    def test_identity_change_passes(self, model_use_cases, gamma_base):
        report = model_use_cases.validate_change(gamma_base, MeasureChange.identity(), level=2)
        assert report.passed

    def test_unnormalized_gamma_fails(self, model_use_cases, gamma_base):
        report = model_use_cases.validate_change(gamma_base, MeasureChange.from_text(gamma="ln(x/4)"))
        assert report.verdict is Verdict.FAIL
        assert report.gamma_norm == pytest.approx(1.25, rel=1e-8)

    def test_negative_xi_fails(self, model_use_cases):
        base = BaseRiskModel(claim_law=Exponential(rate=0.2), mixing_law=Uniform(lo=0.0, hi=1.0))
        report = model_use_cases.validate_change(base, MeasureChange.from_text(xi="3 - 4*theta"))
        assert report.xi_norm == pytest.approx(1.0, abs=1e-9)
        assert not report.xi_positive
        assert not report.passed

    def test_divergent_gate_fails_instead_of_raising(self, model_use_cases, gamma_base):
        # e^gamma is normalized but X e^gamma has no finite mean under Exp(0.2)
        change = MeasureChange.from_text(gamma="0.2*x - ln(1 + x^2) - ln(0.2) - ln(c)", params={"c": _lorentz_norm()})
        report = model_use_cases.validate_change(gamma_base, change)
        assert not report.passed
        assert report.level == 0
        assert report.divergent

    def test_derive_requires_validation(self, model_use_cases, gamma_base, square_change):
        with pytest.raises(NotValidatedError):
            model_use_cases.derive_q_model(gamma_base, square_change)

    def test_failed_validation_blocks_derivation(self, model_use_cases, gamma_base):
        change = MeasureChange.from_text(gamma="ln(x/4)")
        report, derived = model_use_cases.validated_q_model(gamma_base, change)
        assert derived is None and not report.passed
        with pytest.raises(NotValidatedError):
            model_use_cases.derive_q_model(gamma_base, change)

    def test_validated_pairs_are_bounded(self, gamma_base, square_change, esscher_change):
        models = ModelUseCases(cache_size=2)
        identity = MeasureChange.identity()
        for change in (identity, square_change):
            assert models.validate_change(gamma_base, change).passed
        # touching the identity pair makes the square change the oldest
        assert models.is_validated(gamma_base, identity)
        assert models.validate_change(gamma_base, esscher_change).passed
        assert models.validated_count == 2
        assert models.is_validated(gamma_base, identity)
        assert models.is_validated(gamma_base, esscher_change)
        assert not models.is_validated(gamma_base, square_change)
        with pytest.raises(NotValidatedError):
            models.derive_q_model(gamma_base, square_change)

    def test_clear_validated(self, model_use_cases, square_derived, gamma_base, square_change):
        assert model_use_cases.is_validated(gamma_base, square_change, level=2)
        model_use_cases.clear_validated()
        assert model_use_cases.validated_count == 0
        assert not model_use_cases.is_validated(gamma_base, square_change)


def _lorentz_norm() -> float:
    """Integral of 1/(1 + x^2) over (0, inf)."""
    return math.pi / 2


class TestDeriveQModel:
    def test_square_change(self, square_derived):
        assert square_derived.g.to_source() == "theta^2"
        assert square_derived.q_claim == Gamma(rate=0.2, shape=2.0)
        assert square_derived.q_mixing == Gamma(rate=3.0, shape=4.0)
        assert square_derived.q_claim.mean() == pytest.approx(10.0, rel=1e-9)

    def test_g_pointwise(self, square_derived):
        grid = np.linspace(0.01, 10.0, 50)
        assert np.allclose(square_derived.g(grid), grid ** 2, rtol=1e-12)

    def test_mixed_esscher(self, derive, beta_base, mixed_esscher_change):
        derived = derive(beta_base, mixed_esscher_change)
        assert derived.q_mixing == Uniform(lo=0.0, hi=1.0)
        assert derived.q_claim == Gamma(rate=1.0, shape=2.0)
        assert derived.q_claim.mean() == pytest.approx(2.0, rel=1e-9)
        # g(theta) = theta (c + theta) ((c+1)/(c+1+theta))^2 with c = 1
        assert derived.g(0.5) == pytest.approx(0.5 * 1.5 * (2 / 2.5) ** 2, rel=1e-12)

    def test_esscher_tilts_claims_only(self, derive, gamma_base, esscher_change):
        derived = derive(gamma_base, esscher_change)
        assert isinstance(derived.q_claim, Exponential)
        assert derived.q_claim.rate == pytest.approx(0.15, rel=1e-12)
        assert derived.q_mixing == gamma_base.mixing_law
        assert derived.g.to_source() == "theta"

    def test_expected_value_loads_the_intensity(self, derive, gamma_base):
        derived = derive(gamma_base, PremiumUseCases.expected_value_change(math.log(2.0)))
        assert derived.g(1.5) == pytest.approx(3.0, rel=1e-12)
        assert derived.q_claim == gamma_base.claim_law

    def test_nonclosed_tilt_falls_back_to_quadrature(self, derive):
        base = BaseRiskModel(claim_law=Exponential(rate=1.0), mixing_law=Beta(a=2.0, b=2.0))
        # (1 + theta) / 1.5 integrates to one under Beta(2, 2)
        derived = derive(base, MeasureChange.from_text(xi="(1 + theta)/1.5"))
        assert isinstance(derived.q_mixing, Tilted)
        assert derived.q_mixing.mean() == pytest.approx((0.5 + 0.3) / 1.5, rel=1e-8)
