"""
Premium calculation under a measure change: premium densities p(P), p(Q) and
their per-theta forms, the premium schedule (T - t) p(Q), the two comparison
conditions, the Esscher and Expected-Value presets and the mixed-Esscher
J-integral.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from src.domain.distributions import Distribution
from src.domain.expression import RealFn, log_linear_form, parse, scale
from src.domain.functionals import Aggregate, FunctionalBattery
from src.domain.models.common_models import PremiumMethod, Verdict
from src.domain.models.path_models import MeasureTag
from src.domain.models.report_models import ConditionCheck, MCReport, PremiumQuote
from src.domain.models.risk_models import BaseRiskModel, DerivedModel, MeasureChange
from src.infrastructure.quadrature import integrate_interval
from src.use_cases.model_use_cases import ModelUseCases
from src.use_cases.simulation_use_cases import SimulationUseCases, tilted_claim_mean
from src.use_cases.verification_use_cases import within
from src.utils.constants import CLAIM_VARIABLE, FAMILY_ESTIMATE, MIN_PATHS, MIXING_VARIABLE, WALD_SIGMA_LEVEL
from src.utils.exceptions import (
    AssumptionViolatedError,
    BadIntervalError,
    DivergentIntegralError,
    InsufficientPathsError,
)

logger = logging.getLogger(__name__)


def _finite_or_inf(compute) -> float:
    try:
        return compute()
    except DivergentIntegralError as e:
        logger.warning(f"Premium integral diverges: {e.message}")
        return math.inf


def _rate_mean(mixing: Distribution, rate: RealFn) -> Tuple[float, PremiumMethod]:
    """E[rate(Theta)], from catalog moments when rate is c * theta^k with k a natural number."""
    form = log_linear_form(rate, log_scale=False)
    if form is not None and mixing.is_catalog and form.s == 0 and form.k >= 0 and float(form.k).is_integer():
        return math.exp(form.const) * mixing.moment(int(form.k)), PremiumMethod.CLOSED_FORM
    return mixing.expectation(rate), PremiumMethod.QUADRATURE


def compare(lower: float, upper: float) -> ConditionCheck:
    """lower < upper < inf."""
    return ConditionCheck(holds=bool(lower < upper < math.inf), lower=lower, upper=upper, margin=upper - lower)


class PremiumUseCases:
    def __init__(self, model_use_cases: ModelUseCases, simulation_use_cases: Optional[SimulationUseCases] = None):
        self.model_use_cases = model_use_cases
        self.simulation = simulation_use_cases

    def per_theta_premiums(self, base: BaseRiskModel, change: MeasureChange) -> Tuple[RealFn, RealFn]:
        """p(P_theta) = h(theta) E_P[X] and p(Q_theta) = g(theta) E_Q[X] as formulas in theta."""
        g = self.model_use_cases.derive_g(change, base.rate_fn)
        return scale(base.rate_fn, base.claim_law.moment(1)), scale(g, tilted_claim_mean(base, change))

    def premium_density(self, base: BaseRiskModel, derived: Optional[DerivedModel] = None) -> PremiumQuote:
        """
        p(P) = E_P[h(Theta)] E_P[X] and p(Q) = E_Q[g(Theta)] E_Q[X]; without a derived
        model the Q side is P itself. Divergent integrals make p(Q) infinite.
        """
        mean_claim = base.claim_law.moment(1)
        count_base, method_base = _rate_mean(base.mixing_law, base.rate_fn)
        p_base = count_base * mean_claim

        if derived is None:
            q_mixing, q_claim, g = base.mixing_law, base.claim_law, base.rate_fn
        else:
            q_mixing, q_claim, g = derived.q_mixing, derived.q_claim, derived.g
        mean_claim_q = _finite_or_inf(lambda: q_claim.moment(1))
        try:
            count_q, method = _rate_mean(q_mixing, g)
        except DivergentIntegralError as e:
            logger.warning(f"E_Q[g(Theta)] diverges: {e.message}")
            count_q, method = math.inf, PremiumMethod.QUADRATURE
        p_derived = count_q * mean_claim_q if math.isfinite(count_q) and math.isfinite(mean_claim_q) else math.inf
        if not q_claim.is_catalog:
            method = PremiumMethod.QUADRATURE

        quote = PremiumQuote(
            p_base=p_base,
            p_derived=p_derived,
            per_theta_base=scale(base.rate_fn, mean_claim).to_source(),
            per_theta_derived=scale(g, mean_claim_q).to_source() if math.isfinite(mean_claim_q) else "inf",
            expected_count_derived=count_q,
            mean_claim_derived=mean_claim_q,
            cond13=compare(p_base, p_derived),
            method=method if method_base is PremiumMethod.CLOSED_FORM else PremiumMethod.QUADRATURE,
        )
        logger.info(f"Premium densities: p(P) = {p_base:.10g}, p(Q) = {p_derived:.10g} ({quote.method.value})")
        return quote

    @staticmethod
    def premium_schedule(quote: PremiumQuote, t: float, horizon: float) -> float:
        """Premium still due at time t for cover until the horizon: (T - t) p(Q)."""
        if not 0 <= t <= horizon:
            raise BadIntervalError(t, horizon)
        return (horizon - t) * quote.p_derived

    @staticmethod
    def check_condition_13(quote: PremiumQuote) -> ConditionCheck:
        # E[S_t] is linear in t on both sides, so t = 1 decides every t > 0
        return quote.cond13

    def check_condition_14(self, theta: float, base: BaseRiskModel, change: MeasureChange) -> ConditionCheck:
        """p(P_theta) < p(Q_theta) < inf at a fixed theta."""
        p_theta, q_theta = self.per_theta_premiums(base, change)
        return compare(p_theta(theta), q_theta(theta))

    # --- Presets ---
    @staticmethod
    def esscher_change(c: float, base: BaseRiskModel, xi: Optional[RealFn] = None, level: int = 1) -> MeasureChange:
        """gamma(x) = c x - ln E_P[e^{cX}] with the normalizer bound as parameter ``norm``; alpha = 0."""
        norm = math.log(base.claim_law.mgf(c))
        gamma = parse("c*x - norm", variable=CLAIM_VARIABLE, params={"c": c, "norm": norm})
        return MeasureChange(
            gamma=gamma,
            xi=xi if xi is not None else parse("1", variable=MIXING_VARIABLE),
            level=level,
        )

    @staticmethod
    def expected_value_change(c: float, xi: Optional[RealFn] = None, level: int = 1) -> MeasureChange:
        """alpha = c constant, gamma = 0: the intensity is loaded by e^c."""
        return MeasureChange(
            alpha=parse("c", variable=MIXING_VARIABLE, params={"c": c}),
            xi=xi if xi is not None else parse("1", variable=MIXING_VARIABLE),
            level=level,
        )

    @staticmethod
    def esscher_criterion(base: BaseRiskModel, c: float) -> ConditionCheck:
        """E_P[X] E_P[e^{cX}] < E_P[X e^{cX}], the per-theta condition for an Esscher change."""
        claim = base.claim_law
        lower = claim.moment(1) * claim.mgf(c)
        upper = _finite_or_inf(lambda: claim.expectation(lambda x: x * np.exp(c * x)))
        return compare(lower, upper)

    # --- Mixed Esscher example ---
    @staticmethod
    def j_integral(c: float) -> float:
        """
        J(c) = integral over (0, 1) of theta (c + theta) / (c + 1 + theta)^2, in closed form
        (c + 3)/(c + 2) + (c + 2) ln((c + 1)/(c + 2)). Requires c + 3 > (c + 2)^2 ln((c + 2)/(c + 1)).
        """
        if not c > 0:
            raise AssumptionViolatedError(f"J(c) needs c > 0, got {c!r}.")
        if not c + 3 > (c + 2) ** 2 * math.log((c + 2) / (c + 1)):
            raise AssumptionViolatedError(f"c + 3 > (c + 2)^2 ln((c + 2)/(c + 1)) fails at c={c!r}.")
        return (c + 3) / (c + 2) + (c + 2) * math.log((c + 1) / (c + 2))

    @staticmethod
    def j_integral_quadrature(c: float) -> float:
        return integrate_interval(lambda th: th * (c + th) / (c + 1 + th) ** 2, 0.0, 1.0)

    def mixed_esscher_condition_13(self, c: float) -> ConditionCheck:
        """p(P) < p(Q) for the mixed Esscher change, which reduces to J(c) > (2/3)(c + 1)^-3."""
        return compare(2.0 / 3.0 * (c + 1) ** -3, self.j_integral(c))

    @staticmethod
    def mixed_esscher_quadratic(theta: float, c: float) -> bool:
        """theta^2 - (c+1)(c^2+2c-1) theta + (c+1)^2 (1-c-c^2) < 0, i.e. p(P_theta) < p(Q_theta) for the mixed Esscher change."""
        a = c + 1
        return theta * theta - a * (c * c + 2 * c - 1) * theta + a * a * (1 - c - c * c) < 0

    # --- Monte Carlo cross-check ---
    def mc_premium_density(self, base: BaseRiskModel, derived: DerivedModel, n: int, seed: int, quote: Optional[PremiumQuote] = None) -> MCReport:
        """Sample mean of S_1 under Q against p(Q), judged at 4 standard errors."""
        if n < MIN_PATHS:
            raise InsufficientPathsError(n, MIN_PATHS)
        quote = quote or self.premium_density(base, derived)
        samples = self.simulation.evaluate_paths(
            FunctionalBattery((Aggregate(),), 1.0), base, derived, MeasureTag.derived_q(), 1.0, n, seed, FAMILY_ESTIMATE
        )[:, 0]
        report = MCReport.from_samples(samples, Verdict.INFO, quote.p_derived, quantity="p(Q) simulated")
        passed = within(report.estimate - quote.p_derived, report.stderr, WALD_SIGMA_LEVEL, quote.p_derived)
        return report.model_copy(update={"verdict": Verdict.PASS if passed else Verdict.FAIL})

