"""
Path functionals f(path, t) and the batteries that evaluate several of them on
one path. A battery maps a Path to a row of floats; simulation code stacks the
rows of many paths into an (n, m) array.
"""
import math
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.domain.expression import RealFn
from src.domain.models.path_models import EventSpec, Path
from src.domain.models.risk_models import MeasureChange
from src.domain.processes import log_density_M
from src.utils.display_utils import format_number
from src.utils.exceptions import ScenarioParseError

PathFunctional = Callable[[Path, float], float]


@dataclass(frozen=True)
class One:
    name: str = "one"

    def __call__(self, path: Path, t: float) -> float:
        return 1.0


@dataclass(frozen=True)
class Count:
    name: str = "count"

    def __call__(self, path: Path, t: float) -> float:
        return float(path.count_at(t))


@dataclass(frozen=True)
class Aggregate:
    name: str = "aggregate"

    def __call__(self, path: Path, t: float) -> float:
        return path.aggregate_at(t)


@dataclass(frozen=True)
class NoClaims:
    name: str = "no-claims"

    def __call__(self, path: Path, t: float) -> float:
        return 1.0 if path.count_at(t) == 0 else 0.0


@dataclass(frozen=True)
class AggregateAbove:
    level: float

    @property
    def name(self) -> str:
        return f"aggregate-above:{format_number(self.level)}"

    def __call__(self, path: Path, t: float) -> float:
        return 1.0 if path.aggregate_at(t) > self.level else 0.0


_FUNCTIONAL_RE = re.compile(r"^aggregate-above:(?P<level>[0-9.eE+-]+)$")
DEFAULT_FUNCTIONALS = ("one", "count", "aggregate", "no-claims", "aggregate-above:10")


def parse_functional(name: str) -> PathFunctional:
    """Names: one, count, aggregate, no-claims, aggregate-above:<level>."""
    simple = {"one": One(), "count": Count(), "aggregate": Aggregate(), "no-claims": NoClaims()}
    if name in simple:
        return simple[name]
    match = _FUNCTIONAL_RE.match(name)
    if match:
        try:
            return AggregateAbove(float(match.group("level")))
        except ValueError:
            pass
    raise ScenarioParseError(f"unknown functional {name!r}")


# --- Batteries ---
@dataclass(frozen=True)
class FunctionalBattery:
    functionals: Tuple[PathFunctional, ...]
    t: float

    def __call__(self, path: Path) -> np.ndarray:
        return np.array([f(path, self.t) for f in self.functionals])


@dataclass(frozen=True)
class WeightedBattery:
    """f(path, t) * exp(sign * log M_t): sign +1 reweights P-paths to Q, -1 goes back."""

    functionals: Tuple[PathFunctional, ...]
    t: float
    change: MeasureChange
    include_xi: bool
    rate_fn: Optional[RealFn] = None
    sign: float = 1.0

    def __call__(self, path: Path) -> np.ndarray:
        weight = math.exp(self.sign * log_density_M(path, self.t, self.change, self.include_xi, self.rate_fn))
        return np.array([f(path, self.t) * weight for f in self.functionals])


@dataclass(frozen=True)
class IncrementBattery:
    """chi_A * (Z_t - Z_s) for every (s, t) pair and every event of that pair."""

    process: PathFunctional
    pairs: Tuple[Tuple[float, float], ...]
    events: Tuple[Tuple[EventSpec, ...], ...]

    def __call__(self, path: Path) -> np.ndarray:
        row = []
        for (s, t), events in zip(self.pairs, self.events):
            increment = self.process(path, t) - self.process(path, s)
            row.extend(increment if event.holds(path) else 0.0 for event in events)
        return np.array(row)


@dataclass(frozen=True)
class LogDensityBattery:
    change: MeasureChange
    horizons: Tuple[float, ...]
    include_xi: bool
    rate_fn: Optional[RealFn] = None

    def __call__(self, path: Path) -> np.ndarray:
        return np.array([log_density_M(path, T, self.change, self.include_xi, self.rate_fn) for T in self.horizons])


@dataclass(frozen=True)
class StateAt:
    """S_s at fixed times, used by pilot runs."""

    times: Tuple[float, ...]

    def __call__(self, path: Path) -> np.ndarray:
        return np.array([path.aggregate_at(s) for s in self.times])


def functional_names(functionals: Sequence[PathFunctional]) -> list[str]:
    return [f.name for f in functionals]
