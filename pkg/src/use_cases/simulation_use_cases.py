import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np
from scipy import stats

from src.domain.distributions import Distribution
from src.domain.expression import RealFn
from src.domain.models.common_models import SurplusKind
from src.domain.models.path_models import MeasureTag, Path
from src.domain.models.risk_models import BaseRiskModel, DerivedModel, MeasureChange
from src.domain.processes import ClaimSurplus, log_density_M
from src.infrastructure.rng import RngStream
from src.utils.config import settings
from src.utils.constants import FAMILY_SIMULATE, MAX_EVENTS_PER_PATH
from src.utils.exceptions import ExplosionError, NotValidatedError
from src.use_cases.model_use_cases import ModelUseCases

logger = logging.getLogger(__name__)

PathEvaluator = Callable[[Path], np.ndarray]


def side_of(base: BaseRiskModel, derived: Optional[DerivedModel], tag: MeasureTag) -> Tuple[Distribution, Distribution, RealFn]:
    """(mixing law, claim law, intensity) of the measure named by the tag."""
    if tag.is_derived:
        if derived is None:
            raise NotValidatedError(f"{tag.label()} needs a derived model.")
        return derived.q_mixing, derived.q_claim, derived.g
    return base.mixing_law, base.claim_law, base.rate_fn


def simulate_path(
    base: BaseRiskModel,
    derived: Optional[DerivedModel],
    tag: MeasureTag,
    horizon: float,
    stream: RngStream,
) -> Path:
    """
    Draws theta (unless the tag fixes it), then exponential interarrivals with rate
    h(theta) or g(theta) until the next arrival would pass the horizon, then one
    claim per arrival. Draw order is theta, interarrivals, claims.
    """
    mixing, claim_law, intensity = side_of(base, derived, tag)
    theta = tag.theta if tag.is_conditional else mixing.sample(stream)
    rate = intensity(theta)
    if horizon <= 0:
        return Path(theta, np.empty(0), np.empty(0), max(horizon, 0.0))

    mean_count = rate * horizon
    block = int(mean_count + 6.0 * math.sqrt(mean_count) + 16)
    times: List[np.ndarray] = []
    clock, count = 0.0, 0
    while True:
        arrivals = clock + np.cumsum(stream.exponential(rate, block))
        inside = arrivals[arrivals <= horizon]
        times.append(inside)
        count += inside.size
        if count > MAX_EVENTS_PER_PATH:
            raise ExplosionError(MAX_EVENTS_PER_PATH)
        if inside.size < block:
            break
        clock = arrivals[-1]
    event_times = np.concatenate(times)
    claims = claim_law.sample_many(stream, event_times.size) if event_times.size else np.empty(0)
    return Path(theta, event_times, claims, horizon)


def _evaluate_chunk(
    evaluator: PathEvaluator,
    base: BaseRiskModel,
    derived: Optional[DerivedModel],
    tag: MeasureTag,
    horizon: float,
    seed: int,
    family: int,
    start: int,
    stop: int,
) -> np.ndarray:
    rows = [
        evaluator(simulate_path(base, derived, tag, horizon, RngStream(seed, index, family)))
        for index in range(start, stop)
    ]
    return np.vstack(rows) if rows else np.empty((0, 0))


def _chunks(n: int, size: int) -> Iterator[Tuple[int, int]]:
    for start in range(0, n, size):
        yield start, min(n, start + size)


@lru_cache(maxsize=128)
def tilted_claim_mean(base: BaseRiskModel, change: MeasureChange) -> float:
    """E_P[X e^gamma(X)] (= E_Q[X]), computed once per (base, change)."""
    if change.gamma.is_constant():
        return math.exp(change.gamma(0.0)) * base.claim_law.moment(1)
    return base.claim_law.expectation(lambda x: x * np.exp(change.gamma(x)))


def mixed_count_pmf(base: BaseRiskModel, t: float, n: int, mixing: Optional[Distribution] = None, intensity: Optional[RealFn] = None) -> float:
    """P(N_t = n) = integral of e^{-t r} (t r)^n / n! with r = h(theta) over the mixing law."""
    mixing = mixing or base.mixing_law
    intensity = intensity or base.rate_fn
    return mixing.expectation(lambda theta: float(stats.poisson.pmf(n, t * intensity(theta))))


class SimulationUseCases:
    def __init__(self, model_use_cases: ModelUseCases, workers: Optional[int] = None, chunk_size: Optional[int] = None):
        self.model_use_cases = model_use_cases
        self.workers = workers or settings.WORKERS
        self.chunk_size = chunk_size or settings.CHUNK_SIZE

    def simulate_path(self, base, derived, tag: MeasureTag, horizon: float, stream: RngStream) -> Path:
        return simulate_path(base, derived, tag, horizon, stream)

    def simulate_paths(self, base, derived, tag: MeasureTag, horizon: float, n: int, seed: int, family: int = FAMILY_SIMULATE) -> List[Path]:
        return [simulate_path(base, derived, tag, horizon, RngStream(seed, index, family)) for index in range(n)]

    def evaluate_paths(
        self,
        evaluator: PathEvaluator,
        base: BaseRiskModel,
        derived: Optional[DerivedModel],
        tag: MeasureTag,
        horizon: float,
        n: int,
        seed: int,
        family: int,
    ) -> np.ndarray:
        """
        Rows evaluator(path_i) for i < n, path i drawn from stream (seed, family, i).
        Chunks go to a process pool when more than one worker is configured; the
        result is the same array either way.
        """
        chunks = list(_chunks(n, self.chunk_size))
        args = (evaluator, base, derived, tag, horizon, seed, family)
        if self.workers > 1 and len(chunks) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as executor:
                futures = [executor.submit(_evaluate_chunk, *args, start, stop) for start, stop in chunks]
                parts = [future.result() for future in futures]
        else:
            parts = [_evaluate_chunk(*args, start, stop) for start, stop in chunks]
        logger.debug(f"Evaluated {n} paths under {tag.label()} (family {family}, {len(chunks)} chunks)")
        return np.vstack(parts)

    @staticmethod
    def count_at(path: Path, t: float) -> int:
        return path.count_at(t)

    @staticmethod
    def aggregate_at(path: Path, t: float) -> float:
        return path.aggregate_at(t)

    @staticmethod
    def log_density_M(path: Path, t: float, change: MeasureChange, include_xi: bool = True, rate_fn: Optional[RealFn] = None) -> float:
        return log_density_M(path, t, change, include_xi, rate_fn)

    def surplus_process(self, kind: SurplusKind, base: BaseRiskModel, change: Optional[MeasureChange] = None) -> ClaimSurplus:
        """V_t = S_t - t g(theta) E_P[X e^gamma(X)] or Y_t = S_t - t h(theta) E_P[X]."""
        if kind is SurplusKind.V_CHANGE:
            if change is None:
                raise NotValidatedError("V needs a measure change.")
            g = self.model_use_cases.derive_g(change, base.rate_fn)
            return ClaimSurplus(intensity=g, mean_claim=tilted_claim_mean(base, change))
        return ClaimSurplus(intensity=base.rate_fn, mean_claim=base.claim_law.moment(1))

    def surplus(self, path: Path, t: float, kind: SurplusKind, base: BaseRiskModel, change: Optional[MeasureChange] = None) -> float:
        return self.surplus_process(kind, base, change)(path, t)
