import math

import pytest

from src.domain.distributions import Beta, Degenerate, Exponential, Gamma
from src.domain.expression import parse
from src.domain.models.risk_models import BaseRiskModel, MeasureChange
from src.use_cases.model_use_cases import ModelUseCases
from src.use_cases.premium_use_cases import PremiumUseCases
from src.use_cases.simulation_use_cases import SimulationUseCases
from src.use_cases.verification_use_cases import VerificationUseCases

SEED = 20190521


@pytest.fixture
def model_use_cases():
    return ModelUseCases()


@pytest.fixture
def simulation(model_use_cases):
    return SimulationUseCases(model_use_cases=model_use_cases, workers=1, chunk_size=2_000)


@pytest.fixture
def verification(model_use_cases, simulation):
    return VerificationUseCases(model_use_cases=model_use_cases, simulation_use_cases=simulation)


@pytest.fixture
def premium(model_use_cases, simulation):
    return PremiumUseCases(model_use_cases=model_use_cases, simulation_use_cases=simulation)


# --- Gamma-mixed exponential claims ---
@pytest.fixture
def gamma_base():
    return BaseRiskModel(claim_law=Exponential(rate=0.2), mixing_law=Gamma(rate=2.0, shape=2.0))


@pytest.fixture
def square_change():
    """alpha = ln theta, gamma = ln(x/5), xi tilting Ga(2, 2) to Ga(3, 4)."""
    return MeasureChange.from_text("ln(theta)", "ln(x/5)", "(27/8)*theta^2*exp(-theta)", level=2)


@pytest.fixture
def square_derived(model_use_cases, gamma_base, square_change):
    report = model_use_cases.validate_change(gamma_base, square_change)
    assert report.passed
    return model_use_cases.derive_q_model(gamma_base, square_change)


@pytest.fixture
def esscher_change(gamma_base):
    return PremiumUseCases.esscher_change(0.05, gamma_base)


@pytest.fixture
def doubling_change():
    return PremiumUseCases.expected_value_change(math.log(2.0))


# --- Mixed Esscher on gamma claims, Beta(2, 1) mixing, c = 1 ---
@pytest.fixture
def beta_base():
    return BaseRiskModel(claim_law=Gamma(rate=2.0, shape=2.0), mixing_law=Beta(a=2.0, b=1.0))


@pytest.fixture
def mixed_esscher_change():
    params = {"c": 1.0}
    return MeasureChange.from_text(
        "ln(c+theta) + 2*ln((c+1)/(c+1+theta))", "c*x - 2*ln(c+1)", "1/(2*theta)", params=params, level=2,
    )


@pytest.fixture
def classical_base():
    return BaseRiskModel(claim_law=Exponential(rate=0.2), mixing_law=Degenerate(point=1.0))


@pytest.fixture
def derive(model_use_cases):
    """Validates a change and returns its derived model."""
    def _derive(base, change):
        report = model_use_cases.validate_change(base, change)
        assert report.passed, report
        return model_use_cases.derive_q_model(base, change)
    return _derive


@pytest.fixture
def identity_rate():
    return parse("theta", variable="theta")
