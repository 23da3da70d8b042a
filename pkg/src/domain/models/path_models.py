import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.utils.display_utils import format_number
from src.utils.exceptions import OutOfHorizonError
from .common_models import EventKind, MeasureKind


@dataclass(frozen=True, slots=True, eq=False)
class Path:
    """
    One trajectory: the realized theta, event times T_1 < T_2 < ... <= horizon and
    the claim sizes paid at those times. N_t and S_t are right-continuous views.
    """

    theta: float
    event_times: np.ndarray
    claims: np.ndarray
    horizon: float
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.event_times, dtype=float)
        claims = np.asarray(self.claims, dtype=float)
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta!r}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon!r}")
        if times.shape != claims.shape or times.ndim != 1:
            raise ValueError("event_times and claims must be one-dimensional and of equal length")
        if times.size:
            if np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > self.horizon:
                raise ValueError("event times must be strictly increasing within (0, horizon]")
            if np.any(claims <= 0):
                raise ValueError("claims must be positive")
        object.__setattr__(self, "event_times", times)
        object.__setattr__(self, "claims", claims)
        object.__setattr__(self, "cumulative", np.cumsum(claims))

    def __len__(self) -> int:
        return int(self.event_times.size)

    def _check(self, t: float):
        if t > self.horizon:
            raise OutOfHorizonError(t, self.horizon)

    def count_at(self, t: float) -> int:
        """N_t; an event exactly at t is counted."""
        self._check(t)
        return int(np.searchsorted(self.event_times, t, side="right"))

    def aggregate_at(self, t: float) -> float:
        """S_t, the sum of the first N_t claims."""
        n = self.count_at(t)
        return float(self.cumulative[n - 1]) if n else 0.0

    def claims_until(self, t: float) -> np.ndarray:
        return self.claims[: self.count_at(t)]

    def same_as(self, other: "Path") -> bool:
        return (
            self.theta == other.theta
            and self.horizon == other.horizon
            and np.array_equal(self.event_times, other.event_times)
            and np.array_equal(self.claims, other.claims)
        )


class MeasureTag(BaseModel):
    """Which of P, Q, P_theta, Q_theta a path is simulated under."""

    model_config = ConfigDict(frozen=True)

    kind: MeasureKind
    theta: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _theta_for_conditionals(self):
        if self.is_conditional and self.theta is None:
            raise ValueError(f"{self.kind.value} needs a fixed theta")
        if not self.is_conditional and self.theta is not None:
            raise ValueError(f"{self.kind.value} draws theta; do not fix one")
        return self

    @classmethod
    def base_p(cls):
        return cls(kind=MeasureKind.BASE_P)

    @classmethod
    def derived_q(cls):
        return cls(kind=MeasureKind.DERIVED_Q)

    @classmethod
    def conditional_p(cls, theta: float):
        return cls(kind=MeasureKind.CONDITIONAL_P, theta=theta)

    @classmethod
    def conditional_q(cls, theta: float):
        return cls(kind=MeasureKind.CONDITIONAL_Q, theta=theta)

    @property
    def is_conditional(self) -> bool:
        return self.kind in (MeasureKind.CONDITIONAL_P, MeasureKind.CONDITIONAL_Q)

    @property
    def is_derived(self) -> bool:
        return self.kind in (MeasureKind.DERIVED_Q, MeasureKind.CONDITIONAL_Q)

    def counterpart(self) -> "MeasureTag":
        """The same tag on the other side of the measure change."""
        swap = {
            MeasureKind.BASE_P: MeasureKind.DERIVED_Q,
            MeasureKind.DERIVED_Q: MeasureKind.BASE_P,
            MeasureKind.CONDITIONAL_P: MeasureKind.CONDITIONAL_Q,
            MeasureKind.CONDITIONAL_Q: MeasureKind.CONDITIONAL_P,
        }
        return MeasureTag(kind=swap[self.kind], theta=self.theta)

    def label(self) -> str:
        if self.is_conditional:
            return f"{self.kind.value}({format_number(self.theta)})"
        return self.kind.value


class EventSpec(BaseModel):
    """A conditioning event observable at time s: {N_s <= k}, {S_s <= q}, {lo < theta <= hi} or everything."""

    model_config = ConfigDict(frozen=True)

    kind: EventKind
    s: float = Field(0.0, ge=0)
    k: Optional[int] = Field(None, ge=0)
    q: Optional[float] = None
    lo: float = 0.0
    hi: float = math.inf

    @classmethod
    def count_at_most(cls, s: float, k: int):
        return cls(kind=EventKind.COUNT_AT_MOST, s=s, k=k)

    @classmethod
    def aggregate_at_most(cls, s: float, q: float):
        return cls(kind=EventKind.AGGREGATE_AT_MOST, s=s, q=q)

    @classmethod
    def theta_in(cls, lo: float, hi: float = math.inf):
        return cls(kind=EventKind.THETA_IN, lo=lo, hi=hi)

    @classmethod
    def whole_space(cls):
        return cls(kind=EventKind.WHOLE_SPACE)

    def holds(self, path: Path) -> bool:
        if self.kind is EventKind.COUNT_AT_MOST:
            return path.count_at(self.s) <= self.k
        if self.kind is EventKind.AGGREGATE_AT_MOST:
            return path.aggregate_at(self.s) <= self.q
        if self.kind is EventKind.THETA_IN:
            return self.lo < path.theta <= self.hi
        return True

    def label(self) -> str:
        if self.kind is EventKind.COUNT_AT_MOST:
            return f"N({format_number(self.s)})<={self.k}"
        if self.kind is EventKind.AGGREGATE_AT_MOST:
            return f"S({format_number(self.s)})<={self.q:.6g}"
        if self.kind is EventKind.THETA_IN:
            hi = "inf" if math.isinf(self.hi) else f"{self.hi:.6g}"
            return f"theta in ({self.lo:.6g},{hi}]"
        return "whole-space"
