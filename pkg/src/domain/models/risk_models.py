import math
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, InstanceOf, model_validator

from src.domain.distributions import Distribution, support_grid
from src.domain.expression import RealFn, parse
from src.utils.constants import CLAIM_VARIABLE, MIXING_VARIABLE, SUPPORT_GRID_SIZE
from src.utils.exceptions import DivergentIntegralError, InadmissibleModelError, UnknownIdentifierError
from .common_models import Verdict


def _identity_rate() -> RealFn:
    return parse(MIXING_VARIABLE, variable=MIXING_VARIABLE)


def _check_variable(fn: RealFn, expected: str):
    if fn.variable not in (None, expected):
        raise UnknownIdentifierError(fn.variable, 0)


class BaseRiskModel(BaseModel):
    """Claim law P_X, mixing law P_Theta and the intensity h (identity unless given)."""

    model_config = ConfigDict(frozen=True)

    claim_law: Distribution
    mixing_law: Distribution
    rate_fn: InstanceOf[RealFn] = Field(default_factory=_identity_rate)

    @model_validator(mode="after")
    def _admissible(self):
        _check_variable(self.rate_fn, MIXING_VARIABLE)
        for role, law in (("claim", self.claim_law), ("mixing", self.mixing_law)):
            lo, _ = law.support
            if lo < 0 or (law.discrete and law.density(0.0) > 0):
                raise InadmissibleModelError(f"The {role} law {law} puts mass outside (0, inf).")
        rates = np.atleast_1d(self.rate_fn(support_grid(self.mixing_law, SUPPORT_GRID_SIZE)))
        if not np.all(np.isfinite(rates) & (rates > 0)):
            raise InadmissibleModelError(f"h(theta) = {self.rate_fn} is not positive on the mixing support.")
        try:
            mean = self.claim_law.moment(1)
        except DivergentIntegralError:
            mean = math.inf
        if not math.isfinite(mean):
            raise InadmissibleModelError(f"The claim law {self.claim_law} has no finite mean.")
        return self

    @property
    def has_identity_rate(self) -> bool:
        return self.rate_fn.to_source() == MIXING_VARIABLE


class MeasureChange(BaseModel):
    """The pair (beta, xi) with beta(x, theta) = alpha(theta) + gamma(x)."""

    model_config = ConfigDict(frozen=True)

    alpha: InstanceOf[RealFn] = Field(default_factory=lambda: parse("0", variable=MIXING_VARIABLE))
    gamma: InstanceOf[RealFn] = Field(default_factory=lambda: parse("0", variable=CLAIM_VARIABLE))
    xi: InstanceOf[RealFn] = Field(default_factory=lambda: parse("1", variable=MIXING_VARIABLE))
    level: int = Field(1, ge=1, le=2)

    @model_validator(mode="after")
    def _roles(self):
        _check_variable(self.alpha, MIXING_VARIABLE)
        _check_variable(self.gamma, CLAIM_VARIABLE)
        _check_variable(self.xi, MIXING_VARIABLE)
        return self

    @classmethod
    def identity(cls) -> "MeasureChange":
        return cls()

    @classmethod
    def from_text(cls, alpha: str = "0", gamma: str = "0", xi: str = "1", params=None, level: int = 1) -> "MeasureChange":
        return cls(
            alpha=parse(alpha, variable=MIXING_VARIABLE, params=params),
            gamma=parse(gamma, variable=CLAIM_VARIABLE, params=params),
            xi=parse(xi, variable=MIXING_VARIABLE, params=params),
            level=level,
        )

    def beta(self, x: float, theta: float) -> float:
        return self.alpha(theta) + self.gamma(x)

    def is_identity(self) -> bool:
        parts = (self.alpha, self.gamma, self.xi)
        if not all(fn.is_constant() for fn in parts):
            return False
        return self.alpha(0.0) == 0.0 and self.gamma(0.0) == 0.0 and self.xi(0.0) == 1.0


class DerivedModel(BaseModel):
    """The Q-side model: intensity g, claim law Q_X and mixing law Q_Theta."""

    model_config = ConfigDict(frozen=True)

    g: InstanceOf[RealFn]
    q_claim: Distribution
    q_mixing: Distribution
    base: BaseRiskModel
    change: MeasureChange
    level: int = 1


class AdmissibilityReport(BaseModel):
    gamma_norm: float
    xi_norm: float
    xi_positive: bool
    level_requested: int
    level: int = Field(..., ge=0, le=2)
    claim_gates: Dict[int, float]      # l -> E_P[X^l e^gamma(X)]
    mixing_gates: Dict[int, float]     # l -> E_P[xi(Theta) g(Theta)^l]
    divergent: List[str] = []
    verdict: Verdict

    @property
    def passed(self) -> bool:
        return self.verdict == Verdict.PASS
