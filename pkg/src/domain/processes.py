"""
Processes evaluated along a simulated path: the likelihood-ratio density of a
measure change and the centered aggregate-claims (surplus) processes.

All process objects are small frozen dataclasses so they pickle cleanly into
worker processes.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.domain.expression import RealFn
from src.domain.models.path_models import Path
from src.domain.models.risk_models import MeasureChange
from src.utils.exceptions import DomainError, OutOfHorizonError


def log_density_M(
    path: Path,
    t: float,
    change: MeasureChange,
    include_xi: bool = True,
    rate_fn: Optional[RealFn] = None,
) -> float:
    """
    ln xi(theta)*[include_xi] + N_t alpha(theta) + sum_{k<=N_t} gamma(X_k) - t h(theta)(e^alpha(theta) - 1),
    with h the identity unless ``rate_fn`` is given. Without xi this is the conditional
    density of Q_theta against P_theta on F_t.
    """
    if t < 0 or t > path.horizon:
        raise OutOfHorizonError(t, path.horizon)
    theta = path.theta
    alpha = change.alpha(theta)
    rate = theta if rate_fn is None else rate_fn(theta)
    claims = path.claims_until(t)
    jumps = math.fsum(np.atleast_1d(change.gamma(claims))) if claims.size else 0.0
    if not math.isfinite(alpha) or not math.isfinite(jumps):
        raise DomainError(f"beta is not finite along the path (theta={theta!r}).")
    value = claims.size * alpha + jumps - t * rate * math.expm1(alpha)
    if include_xi:
        xi = change.xi(theta)
        if not xi > 0:
            raise DomainError(f"xi({theta!r}) = {xi!r} is not positive.")
        value += math.log(xi)
    return value


@dataclass(frozen=True)
class ClaimSurplus:
    """S_t - t * intensity(theta) * mean_claim; V with (g, E_P[X e^gamma]) and Y with (h, E_P[X])."""

    intensity: RealFn
    mean_claim: float

    def __call__(self, path: Path, t: float) -> float:
        return path.aggregate_at(t) - t * self.intensity(path.theta) * self.mean_claim


@dataclass(frozen=True)
class CenteredAggregate:
    """S_t - t * drift with a deterministic drift E[S_1] (centering that ignores theta)."""

    drift: float

    def __call__(self, path: Path, t: float) -> float:
        return path.aggregate_at(t) - t * self.drift


@dataclass(frozen=True)
class RawAggregate:
    def __call__(self, path: Path, t: float) -> float:
        return path.aggregate_at(t)


@dataclass(frozen=True)
class DensityProcess:
    """M_t (or the conditional density when ``include_xi`` is off)."""

    change: MeasureChange
    include_xi: bool = True
    rate_fn: Optional[RealFn] = None

    def __call__(self, path: Path, t: float) -> float:
        return math.exp(log_density_M(path, t, self.change, self.include_xi, self.rate_fn))


@dataclass(frozen=True)
class ConstantProcess:
    value: float = 1.0

    def __call__(self, path: Path, t: float) -> float:
        return self.value
