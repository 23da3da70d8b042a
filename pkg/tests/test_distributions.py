import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from src.domain.distributions import (
    Beta,
    Degenerate,
    Exponential,
    Gamma,
    Poisson,
    Tilted,
    Uniform,
    parse_distribution,
    support_grid,
)
from src.domain.expression import parse
from src.infrastructure.rng import RngStream
from src.utils.exceptions import (
    ExpressionSyntaxError,
    OutsideConvergenceStripError,
    TiltNormalizationError,
)

from tests.conftest import SEED


@pytest.fixture
def gamma_tilt():
    return Tilted(base=Gamma(rate=2.0, shape=2.0), weight=parse("(27/8)*theta^2*exp(-theta)"))


class TestCatalog:
    def test_exponential_moments(self):
        law = Exponential(rate=0.2)
        assert [law.moment(k) for k in (1, 2, 3)] == pytest.approx([5.0, 50.0, 750.0], rel=1e-9)

    def test_gamma_moments(self):
        law = Gamma(rate=3.0, shape=4.0)
        assert law.mean() == pytest.approx(4 / 3, rel=1e-12)
        assert law.variance() == pytest.approx(4 / 9, rel=1e-12)

    def test_beta_and_uniform_moments(self):
        assert Beta(a=2.0, b=1.0).mean() == pytest.approx(2 / 3)
        assert Uniform(lo=0.0, hi=1.0).moment(2) == pytest.approx(1 / 3)

    def test_mgf_is_one_at_zero(self):
        for law in (Exponential(rate=0.2), Gamma(rate=2.0, shape=2.0), Beta(a=2.0, b=1.0), Poisson(lam=3.0)):
            assert law.mgf(0.0) == 1.0

    @pytest.mark.parametrize("s", [1e-300, -1e-300, 1e-12, 1e-10])
    def test_uniform_mgf_near_zero(self, s):
        assert Uniform(lo=0.0, hi=1.0).mgf(s) == pytest.approx(1.0 + s / 2, rel=1e-14)
        assert Uniform(lo=2.0, hi=5.0).mgf(s) == pytest.approx(1.0 + 3.5 * s, rel=1e-12)

    def test_uniform_mgf(self):
        assert Uniform(lo=0.0, hi=1.0).mgf(1.0) == pytest.approx(math.e - 1, rel=1e-14)

    def test_mgf_outside_strip(self):
        with pytest.raises(OutsideConvergenceStripError):
            Exponential(rate=0.2).mgf(0.2)

    @given(st.floats(min_value=0.0, max_value=20.0))
    def test_gamma_mgf_on_negative_axis(self, theta):
        c = 1.0
        law = Gamma(rate=c + 1, shape=2.0)
        assert law.mgf(-theta) == pytest.approx(((c + 1) / (c + 1 + theta)) ** 2, rel=1e-9)

    def test_poisson_moments(self):
        law = Poisson(lam=3.0)
        assert law.moment(1) == pytest.approx(3.0)
        assert law.variance() == pytest.approx(3.0)
        assert law.mgf(0.5) == pytest.approx(math.exp(3.0 * math.expm1(0.5)))

    def test_degenerate(self):
        law = Degenerate(point=2.0)
        assert law.moment(3) == 8.0
        assert law.expectation(lambda v: v + 1.0) == 3.0
        assert law.expectation(lambda v: 1.0, hi=1.0) == 0.0
        assert support_grid(law, 10).tolist() == [2.0]

    def test_uniform_bounds_are_ordered(self):
        with pytest.raises(ValidationError):
            Uniform(lo=1.0, hi=1.0)

    def test_rates_must_be_positive(self):
        with pytest.raises(ValidationError):
            Exponential(rate=0.0)

    def test_expectation_over_a_window(self):
        law = Exponential(rate=1.0)
        assert law.expectation(lambda x: 1.0, lo=1.0, hi=2.0) == pytest.approx(math.exp(-1) - math.exp(-2), rel=1e-9)

    def test_sampling_is_reproducible(self):
        law = Gamma(rate=2.0, shape=2.0)
        first = law.sample_many(RngStream(SEED, index=3), 10)
        second = law.sample_many(RngStream(SEED, index=3), 10)
        assert np.array_equal(first, second)
        assert not np.array_equal(first, law.sample_many(RngStream(SEED, index=4), 10))


class TestTilted:
    def test_normalization_is_checked(self):
        with pytest.raises(TiltNormalizationError) as info:
            Tilted(base=Exponential(rate=1.0), weight=parse("2", variable="x"))
        assert info.value.norm == pytest.approx(2.0)

    def test_gamma_tilt_matches_catalog_density(self, gamma_tilt):
        target = Gamma(rate=3.0, shape=4.0)
        grid = support_grid(target, 64)
        assert np.allclose(gamma_tilt.density(grid), target.density(grid), rtol=1e-9, atol=0.0)

    def test_gamma_tilt_moments(self, gamma_tilt):
        assert gamma_tilt.moment(1) == pytest.approx(4 / 3, rel=1e-8)
        assert gamma_tilt.moment(2) == pytest.approx(20 / 9, rel=1e-8)
        assert not gamma_tilt.is_catalog

    def test_gamma_tilt_cdf_and_quantile(self, gamma_tilt):
        target = Gamma(rate=3.0, shape=4.0)
        for x in (0.3, 1.0, 2.5):
            assert gamma_tilt.cdf(x) == pytest.approx(target.cdf(x), abs=1e-7)
        for p in (0.1, 0.5, 0.9):
            assert gamma_tilt.quantile(p) == pytest.approx(target.quantile(p), rel=1e-6)

    def test_mixing_weight_on_beta_gives_uniform_density(self):
        law = Tilted(base=Beta(a=2.0, b=1.0), weight=parse("1/(2*theta)"))
        grid = np.linspace(0.05, 0.95, 19)
        assert np.allclose(law.density(grid), 1.0, rtol=1e-12)
        assert law.mean() == pytest.approx(0.5, rel=1e-8)

    def test_discrete_tilt(self):
        # size-biased Poisson(2) is 1 + Poisson(2)
        law = Tilted(base=Poisson(lam=2.0), weight=parse("x/2"))
        assert law.discrete
        assert law.mean() == pytest.approx(3.0, rel=1e-9)
        assert law.quantile(0.01) == 1.0

    @settings(max_examples=10, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32))
    def test_samples_lie_in_support(self, index):
        law = Tilted(base=Gamma(rate=2.0, shape=2.0), weight=parse("(27/8)*theta^2*exp(-theta)"))
        samples = law.sample_many(RngStream(SEED, index=index), 50)
        assert np.all(samples > 0)

    def test_sample_mean(self, gamma_tilt):
        samples = gamma_tilt.sample_many(RngStream(SEED), 20_000)
        stderr = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - 4 / 3) < 4 * stderr


class TestLiterals:
    @pytest.mark.parametrize("text, expected", [
        ("exp(rate=0.2)", Exponential(rate=0.2)),
        ("exp(0.2)", Exponential(rate=0.2)),
        ("gamma(rate=2, shape=2)", Gamma(rate=2.0, shape=2.0)),
        ("beta(a=2,b=1)", Beta(a=2.0, b=1.0)),
        ("uniform(lo=0, hi=1)", Uniform(lo=0.0, hi=1.0)),
        ("poisson(lambda=3)", Poisson(lam=3.0)),
        ("degenerate(2.0)", Degenerate(point=2.0)),
    ])
    def test_catalog_literals(self, text, expected):
        assert parse_distribution(text) == expected

    def test_arguments_may_use_parameters(self):
        assert parse_distribution("gamma(rate=c+1, shape=2)", params={"c": 1.0}) == Gamma(rate=2.0, shape=2.0)

    def test_literal_prints_back(self):
        law = Gamma(rate=2.0, shape=2.0)
        assert parse_distribution(law.literal()) == law

    @pytest.mark.parametrize("text", ["weibull(1, 2)", "gamma", "exp(0.2, 1, 3)"])
    def test_bad_literals(self, text):
        with pytest.raises(ExpressionSyntaxError):
            parse_distribution(text)
