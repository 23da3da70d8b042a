import logging
import math
from collections import OrderedDict
from typing import Callable, Optional, Tuple

import numpy as np

from src.domain.distributions import (
    Beta,
    Degenerate,
    Distribution,
    Exponential,
    Gamma,
    Tilted,
    Uniform,
    support_grid,
)
from src.domain.expression import LogLinearForm, RealFn, Var, exp_of, log_linear_form, monomial, multiply_exp, scale
from src.domain.models.common_models import Verdict
from src.domain.models.risk_models import AdmissibilityReport, BaseRiskModel, DerivedModel, MeasureChange
from src.utils.constants import GAUSS_NODES, MIXING_VARIABLE, NORMALIZATION_TOL, POSITIVITY_GRID_SIZE, VALIDATED_CACHE_SIZE
from src.utils.exceptions import DivergentIntegralError, DomainError, NotValidatedError

logger = logging.getLogger(__name__)

CLOSURE_CHECK_POINTS = 20


def _guarded(compute: Callable[[], float], label: str, divergent: list) -> float:
    try:
        value = compute()
    except (DivergentIntegralError, DomainError) as e:
        logger.warning(f"{label}: {e.message}")
        value = math.inf
    if not math.isfinite(value):
        divergent.append(label)
    return value


def _closed_form(law: Distribution, form: LogLinearForm) -> Optional[Distribution]:
    """Catalog law proportional to exp(k ln v + s v) * law(dv), when the family is closed under it."""
    if form.k == 0 and form.s == 0:
        return law
    if isinstance(law, Degenerate):
        return law
    if isinstance(law, (Exponential, Gamma)):
        shape = 1.0 if isinstance(law, Exponential) else law.shape
        rate, shape = law.rate - form.s, shape + form.k
        if rate <= 0 or shape <= 0:
            return None
        if isinstance(law, Exponential) and form.k == 0:
            return Exponential(rate=rate)
        return Gamma(rate=rate, shape=shape)
    if isinstance(law, (Beta, Uniform)) and form.s == 0:
        if isinstance(law, Uniform):
            if (law.lo, law.hi) != (0.0, 1.0):
                return None
            a, b = 1.0, 1.0
        else:
            a, b = law.a, law.b
        a += form.k
        if a <= 0:
            return None
        if a == 1.0 and b == 1.0:
            return Uniform(lo=0.0, hi=1.0)
        return Beta(a=a, b=b)
    return None


def _agrees(candidate: Distribution, law: Distribution, weight: RealFn) -> bool:
    grid = support_grid(law, CLOSURE_CHECK_POINTS)
    expected = np.asarray(weight(grid)) * np.asarray(law.density(grid))
    return bool(np.allclose(candidate.density(grid), expected, rtol=1e-9, atol=1e-300))


def tilt(law: Distribution, weight: RealFn, form: Optional[LogLinearForm]) -> Distribution:
    """weight(v) * law(dv), in catalog form when a closure rule applies and checks out pointwise."""
    if form is not None:
        candidate = _closed_form(law, form)
        if candidate is not None and _agrees(candidate, law, weight):
            return candidate
        if candidate is not None:
            logger.warning(f"Closed form {candidate} disagrees with the tilt of {law}; using quadrature.")
    return Tilted(base=law, weight=weight)


class ModelUseCases:
    def __init__(self, cache_size: int = VALIDATED_CACHE_SIZE):
        self._cache_size = cache_size
        self._validated: "OrderedDict[Tuple[BaseRiskModel, MeasureChange], AdmissibilityReport]" = OrderedDict()

    def _remember(self, key: Tuple[BaseRiskModel, MeasureChange], report: AdmissibilityReport) -> None:
        # least recently used pair goes first
        self._validated[key] = report
        self._validated.move_to_end(key)
        while len(self._validated) > self._cache_size:
            self._validated.popitem(last=False)

    def clear_validated(self) -> None:
        self._validated.clear()

    @property
    def validated_count(self) -> int:
        return len(self._validated)

    def derive_g(self, change: MeasureChange, rate_fn: Optional[RealFn] = None) -> RealFn:
        """g(theta) = h(theta) * e^alpha(theta), with h the identity by default."""
        rate = rate_fn if rate_fn is not None else monomial(1.0, 1.0, 0.0, MIXING_VARIABLE)
        identity_rate = isinstance(rate.tree, Var)
        form = log_linear_form(change.alpha, log_scale=True)
        if form is None:
            return multiply_exp(rate, change.alpha)
        factor = math.exp(form.const)
        if form.k == 0 and form.s == 0:
            return scale(rate, factor)
        if identity_rate:
            return monomial(factor, 1.0 + form.k, form.s, MIXING_VARIABLE)
        return multiply_exp(rate, change.alpha)

    def validate_change(self, base: BaseRiskModel, change: MeasureChange, level: Optional[int] = None) -> AdmissibilityReport:
        """
        Normalizations E_P[e^gamma(X)] and E_P[xi(Theta)], positivity of xi on a grid of
        the mixing support, and the integrability gates E_P[X^l e^gamma(X)], E_P[xi g^l]
        for l = 1, 2. Divergent integrals fail their gate instead of raising.
        """
        level = level or change.level
        divergent: list[str] = []
        claim, mixing = base.claim_law, base.mixing_law
        g = self.derive_g(change, base.rate_fn)

        gamma_norm = _guarded(lambda: claim.expectation(lambda x: np.exp(change.gamma(x))), "gamma_norm", divergent)
        xi_norm = _guarded(lambda: mixing.expectation(change.xi), "xi_norm", divergent)
        xi_positive = self._xi_positive(mixing, change.xi)

        claim_gates, mixing_gates = {}, {}
        for l in (1, 2):
            claim_gates[l] = _guarded(
                lambda: claim.expectation(lambda x: x ** l * np.exp(change.gamma(x))),
                f"E_P[X^{l} e^gamma]", divergent,
            )
            mixing_gates[l] = _guarded(
                lambda: mixing.expectation(lambda th: change.xi(th) * g(th) ** l),
                f"E_P[xi g^{l}]", divergent,
            )
        achieved = 0
        for l in (1, 2):
            if math.isfinite(claim_gates[l]) and math.isfinite(mixing_gates[l]):
                achieved = l
            else:
                break

        normalized = abs(gamma_norm - 1.0) <= NORMALIZATION_TOL and abs(xi_norm - 1.0) <= NORMALIZATION_TOL
        passed = normalized and xi_positive and achieved >= level
        report = AdmissibilityReport(
            gamma_norm=gamma_norm,
            xi_norm=xi_norm,
            xi_positive=xi_positive,
            level_requested=level,
            level=achieved,
            claim_gates=claim_gates,
            mixing_gates=mixing_gates,
            divergent=divergent,
            verdict=Verdict.PASS if passed else Verdict.FAIL,
        )
        if passed:
            self._remember((base, change), report)
        else:
            logger.warning(
                f"Measure change rejected: gamma_norm={gamma_norm!r}, xi_norm={xi_norm!r}, "
                f"xi_positive={xi_positive}, level {achieved} of {level}, divergent={divergent}"
            )
        return report

    @staticmethod
    def _xi_positive(mixing: Distribution, xi: RealFn) -> bool:
        grid = support_grid(mixing, POSITIVITY_GRID_SIZE)
        if grid.size > 1:
            nodes, _ = np.polynomial.legendre.leggauss(GAUSS_NODES)
            lo, hi = grid[0], grid[-1]
            grid = np.concatenate([grid, 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)])
        values = np.atleast_1d(xi(grid))
        return bool(np.all(np.isfinite(values) & (values > 0)))

    def is_validated(self, base: BaseRiskModel, change: MeasureChange, level: int = 1) -> bool:
        report = self._validated.get((base, change))
        if report is None:
            return False
        self._validated.move_to_end((base, change))
        return report.level >= level

    def derive_q_model(self, base: BaseRiskModel, change: MeasureChange, level: Optional[int] = None) -> DerivedModel:
        level = level or change.level
        if not self.is_validated(base, change, level):
            raise NotValidatedError()
        q_claim = tilt(base.claim_law, exp_of(change.gamma), log_linear_form(change.gamma, log_scale=True))
        q_mixing = tilt(base.mixing_law, change.xi, log_linear_form(change.xi, log_scale=False))
        derived = DerivedModel(
            g=self.derive_g(change, base.rate_fn),
            q_claim=q_claim,
            q_mixing=q_mixing,
            base=base,
            change=change,
            level=level,
        )
        logger.info(f"Derived model: g = {derived.g}, Q_X = {q_claim}, Q_Theta = {q_mixing}")
        return derived

    def validated_q_model(self, base: BaseRiskModel, change: MeasureChange, level: Optional[int] = None) -> Tuple[AdmissibilityReport, Optional[DerivedModel]]:
        """Validates, then derives when validation passed."""
        report = self.validate_change(base, change, level)
        if not report.passed:
            return report, None
        return report, self.derive_q_model(base, change, level)
