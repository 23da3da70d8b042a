import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.domain.functionals import Aggregate, Count, FunctionalBattery, WeightedBattery, parse_functional
from src.domain.models.common_models import MeasureKind, SurplusKind
from src.domain.models.path_models import EventSpec, MeasureTag, Path
from src.domain.models.risk_models import MeasureChange
from src.infrastructure.rng import RngStream
from src.use_cases.simulation_use_cases import SimulationUseCases, mixed_count_pmf
from src.utils.constants import FAMILY_ESTIMATE
from src.utils.exceptions import DomainError, NotValidatedError, OutOfHorizonError, ScenarioParseError

from tests.conftest import SEED


@pytest.fixture
def sample_path():
    return Path(theta=2.0, event_times=np.array([0.5, 1.5]), claims=np.array([5.0, 10.0]), horizon=2.0)


class TestPath:
    def test_counts_are_right_continuous(self, sample_path):
        assert sample_path.count_at(0.5) == 1
        assert sample_path.count_at(0.49) == 0
        assert sample_path.aggregate_at(1.0) == 5.0
        assert sample_path.aggregate_at(2.0) == 15.0

    def test_beyond_horizon(self, sample_path):
        with pytest.raises(OutOfHorizonError):
            sample_path.count_at(2.5)

    @pytest.mark.parametrize("theta, times, claims, horizon", [
        (0.0, [0.5], [1.0], 1.0),
        (1.0, [0.5, 0.5], [1.0, 1.0], 1.0),
        (1.0, [0.5, 1.5], [1.0, 1.0], 1.0),
        (1.0, [0.5], [-1.0], 1.0),
        (1.0, [0.5], [1.0, 2.0], 1.0),
    ])
    def test_invalid_paths(self, theta, times, claims, horizon):
        with pytest.raises(ValueError):
            Path(theta=theta, event_times=np.array(times), claims=np.array(claims), horizon=horizon)

    def test_events(self, sample_path):
        assert EventSpec.count_at_most(1.0, 1).holds(sample_path)
        assert not EventSpec.aggregate_at_most(2.0, 10.0).holds(sample_path)
        assert EventSpec.theta_in(1.0, 2.0).holds(sample_path)
        assert not EventSpec.theta_in(2.0).holds(sample_path)


class TestMeasureTag:
    def test_conditional_needs_theta(self):
        with pytest.raises(ValidationError):
            MeasureTag(kind=MeasureKind.CONDITIONAL_P)

    def test_unconditional_rejects_theta(self):
        with pytest.raises(ValidationError):
            MeasureTag(kind=MeasureKind.BASE_P, theta=1.0)

    def test_counterpart(self):
        assert MeasureTag.conditional_p(0.5).counterpart() == MeasureTag.conditional_q(0.5)
        assert MeasureTag.derived_q().counterpart() == MeasureTag.base_p()
        assert MeasureTag.conditional_q(0.5).label() == "conditional-q(0.5)"


class TestSimulatePath:
    def test_same_stream_same_path(self, simulation, gamma_base):
        first = simulation.simulate_path(gamma_base, None, MeasureTag.base_p(), 5.0, RngStream(SEED, 7))
        second = simulation.simulate_path(gamma_base, None, MeasureTag.base_p(), 5.0, RngStream(SEED, 7))
        assert first.same_as(second)

    def test_paths_respect_the_horizon(self, simulation, gamma_base):
        for path in simulation.simulate_paths(gamma_base, None, MeasureTag.base_p(), 3.0, 200, SEED):
            assert path.horizon == 3.0
            assert len(path) == 0 or path.event_times[-1] <= 3.0

    def test_conditional_tag_fixes_theta(self, simulation, gamma_base):
        paths = simulation.simulate_paths(gamma_base, None, MeasureTag.conditional_p(0.75), 1.0, 20, SEED)
        assert {path.theta for path in paths} == {0.75}

    def test_derived_tag_needs_a_derived_model(self, simulation, gamma_base):
        with pytest.raises(NotValidatedError):
            simulation.simulate_path(gamma_base, None, MeasureTag.derived_q(), 1.0, RngStream(SEED))

    def test_zero_horizon(self, simulation, gamma_base):
        path = simulation.simulate_path(gamma_base, None, MeasureTag.base_p(), 0.0, RngStream(SEED))
        assert len(path) == 0 and path.aggregate_at(0.0) == 0.0


class TestEvaluatePaths:
    def test_independent_of_chunking_and_workers(self, model_use_cases, gamma_base):
        battery = FunctionalBattery((Count(), Aggregate()), 2.0)
        args = (battery, gamma_base, None, MeasureTag.base_p(), 2.0, 240, SEED, FAMILY_ESTIMATE)
        serial = SimulationUseCases(model_use_cases, workers=1, chunk_size=1_000).evaluate_paths(*args)
        pooled = SimulationUseCases(model_use_cases, workers=2, chunk_size=50).evaluate_paths(*args)
        assert serial.shape == (240, 2)
        assert np.array_equal(serial, pooled)

    def test_families_are_disjoint(self, simulation, gamma_base):
        battery = FunctionalBattery((Aggregate(),), 2.0)
        first = simulation.evaluate_paths(battery, gamma_base, None, MeasureTag.base_p(), 2.0, 50, SEED, 0)
        second = simulation.evaluate_paths(battery, gamma_base, None, MeasureTag.base_p(), 2.0, 50, SEED, 1)
        assert not np.array_equal(first, second)


class TestLogDensity:
    def test_hand_computed_value(self, simulation, sample_path, square_change):
        log_xi = math.log(27 / 8 * 4 * math.exp(-2))
        # alpha = ln 2, gamma(5) = 0, gamma(10) = ln 2, h(2) (e^alpha - 1) = 2
        assert simulation.log_density_M(sample_path, 1.0, square_change) == pytest.approx(log_xi + math.log(2) - 2.0, rel=1e-12)
        assert simulation.log_density_M(sample_path, 2.0, square_change, include_xi=False) == pytest.approx(3 * math.log(2) - 4.0, rel=1e-12)

    def test_at_time_zero(self, simulation, sample_path, square_change):
        assert simulation.log_density_M(sample_path, 0.0, square_change, include_xi=False) == 0.0

    def test_beyond_horizon(self, simulation, sample_path, square_change):
        with pytest.raises(OutOfHorizonError):
            simulation.log_density_M(sample_path, 3.0, square_change)

    def test_nonfinite_gamma_is_a_domain_error(self, simulation, sample_path):
        change = MeasureChange.from_text(gamma="ln(x - 5)")
        with pytest.raises(DomainError):
            simulation.log_density_M(sample_path, 1.0, change)

    def test_density_has_mean_one(self, simulation, derive, gamma_base, esscher_change):
        derived = derive(gamma_base, esscher_change)
        battery = WeightedBattery((parse_functional("one"),), 1.0, esscher_change, True, gamma_base.rate_fn)
        weights = simulation.evaluate_paths(battery, gamma_base, derived, MeasureTag.base_p(), 1.0, 5_000, SEED, FAMILY_ESTIMATE)[:, 0]
        stderr = weights.std(ddof=1) / math.sqrt(weights.size)
        assert abs(weights.mean() - 1.0) <= 3 * stderr

    def test_conditional_density_has_mean_one(self, simulation, square_derived, gamma_base, square_change):
        battery = WeightedBattery((parse_functional("one"),), 1.0, square_change, False, gamma_base.rate_fn)
        tag = MeasureTag.conditional_p(0.5)
        weights = simulation.evaluate_paths(battery, gamma_base, square_derived, tag, 1.0, 5_000, SEED, FAMILY_ESTIMATE)[:, 0]
        stderr = weights.std(ddof=1) / math.sqrt(weights.size)
        assert abs(weights.mean() - 1.0) <= 3 * stderr

    # the square change has infinite unconditional variance, so it is normalized per theta
    @pytest.mark.parametrize("base_name, change_name, tag", [
        ("gamma_base", "square_change", MeasureTag.conditional_p(1.0)),
        ("gamma_base", "esscher_change", MeasureTag.base_p()),
        ("gamma_base", "doubling_change", MeasureTag.base_p()),
        ("beta_base", "mixed_esscher_change", MeasureTag.base_p()),
    ])
    @pytest.mark.parametrize("t", [0.5, 1.0])
    def test_every_change_is_normalized(self, request, simulation, derive, base_name, change_name, tag, t):
        base, change = request.getfixturevalue(base_name), request.getfixturevalue(change_name)
        derived = derive(base, change)
        battery = WeightedBattery((parse_functional("one"),), t, change, not tag.is_conditional, base.rate_fn)
        weights = simulation.evaluate_paths(battery, base, derived, tag, t, 5_000, SEED, FAMILY_ESTIMATE)[:, 0]
        assert np.all(weights > 0)
        stderr = weights.std(ddof=1) / math.sqrt(weights.size)
        assert abs(weights.mean() - 1.0) <= 4 * stderr


class TestSurplus:
    def test_v_change_uses_g_and_tilted_mean(self, simulation, sample_path, gamma_base, square_change):
        # S_1 - 1 * theta^2 * E_Q[X] = 5 - 4 * 10
        value = simulation.surplus(sample_path, 1.0, SurplusKind.V_CHANGE, gamma_base, square_change)
        assert value == pytest.approx(-35.0, rel=1e-9)

    def test_y_base(self, simulation, sample_path, gamma_base):
        assert simulation.surplus(sample_path, 2.0, SurplusKind.Y_BASE, gamma_base) == pytest.approx(15.0 - 2 * 2 * 5.0)

    def test_v_needs_a_change(self, simulation, gamma_base):
        with pytest.raises(NotValidatedError):
            simulation.surplus_process(SurplusKind.V_CHANGE, gamma_base)


class TestMixedCountPmf:
    def test_negative_binomial(self, gamma_base):
        # Poisson mixed over Gamma(rate=2, shape=2) at t = 1 is NegBin(2, 2/3)
        assert mixed_count_pmf(gamma_base, 1.0, 0) == pytest.approx(4 / 9, rel=1e-9)
        assert mixed_count_pmf(gamma_base, 1.0, 1) == pytest.approx(8 / 27, rel=1e-9)

    def test_sums_to_one(self, gamma_base):
        assert math.fsum(mixed_count_pmf(gamma_base, 2.0, k) for k in range(80)) == pytest.approx(1.0, abs=1e-9)


class TestFunctionals:
    def test_names(self):
        assert parse_functional("aggregate-above:10").name == "aggregate-above:10"
        assert parse_functional("no-claims").name == "no-claims"

    def test_unknown_functional(self):
        with pytest.raises(ScenarioParseError):
            parse_functional("maximum")
