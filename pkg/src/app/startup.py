import logging
from src.use_cases.model_use_cases import ModelUseCases
from src.use_cases.premium_use_cases import PremiumUseCases
from src.use_cases.scenario_use_cases import ScenarioUseCases
from src.use_cases.simulation_use_cases import SimulationUseCases
from src.use_cases.verification_use_cases import VerificationUseCases
from src.utils.config import settings

# Configure logging
logging.basicConfig(
    level=settings.LOG_LEVEL.upper(),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)

# --- Singleton Instances ---
# Created once and shared by the CLI; the model use cases hold the cache of
# validated measure changes that every other layer consults.
model_use_cases = ModelUseCases()
simulation_use_cases = SimulationUseCases(model_use_cases=model_use_cases)
verification_use_cases = VerificationUseCases(model_use_cases=model_use_cases, simulation_use_cases=simulation_use_cases)
premium_use_cases = PremiumUseCases(model_use_cases=model_use_cases, simulation_use_cases=simulation_use_cases)
scenario_use_cases = ScenarioUseCases(
    model_use_cases=model_use_cases,
    simulation_use_cases=simulation_use_cases,
    verification_use_cases=verification_use_cases,
    premium_use_cases=premium_use_cases,
)
