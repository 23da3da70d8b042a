"""
Distribution catalog: claim laws, mixing laws and interarrival laws.

Conventions are rate-first throughout: ``Exponential(rate)`` has mean 1/rate and
``Gamma(rate=a, shape=b)`` has density a^b x^(b-1) e^(-a x) / Gamma(b), mean b/a.
Catalog variants use closed forms (scipy.stats / scipy.special); ``Tilted``
laws fall back to adaptive quadrature and a tabulated inverse CDF.
"""
from __future__ import annotations

import math
import re
from functools import lru_cache
from typing import Callable, ClassVar, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, InstanceOf, model_validator
from scipy import optimize, special, stats
from scipy.interpolate import PchipInterpolator

from src.domain.expression import RealFn, evaluate_constant
from src.domain.models.common_models import DistributionKind
from src.infrastructure.quadrature import integrate_guarded, integrate_interval
from src.infrastructure.rng import RngStream
from src.utils.constants import BISECTION_TOL, GRID_TAIL, NORMALIZATION_TOL, TAIL_MASS, TILT_GRID_SIZE
from src.utils.display_utils import format_number
from src.utils.exceptions import (
    DivergentIntegralError,
    DivergentMomentError,
    ExpressionSyntaxError,
    OutsideConvergenceStripError,
    TiltNormalizationError,
)


def _as_output(value, like):
    """Scalar in, float out; array in, array out."""
    if np.ndim(like) == 0:
        return float(np.asarray(value, dtype=float).reshape(-1)[0])
    return np.asarray(value, dtype=float)


class Distribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ClassVar[DistributionKind]
    discrete: ClassVar[bool] = False

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def is_catalog(self) -> bool:
        return True

    def density(self, x):
        """Density, or mass function for discrete laws; 0 outside the support."""
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def moment(self, k: int) -> float:
        raise NotImplementedError

    def _mgf(self, s: float) -> float:
        raise NotImplementedError

    def sample_many(self, stream: RngStream, size: int) -> np.ndarray:
        raise NotImplementedError

    def literal(self) -> str:
        raise NotImplementedError

    def mgf(self, s: float) -> float:
        """E[e^{sX}]; exactly 1 at s = 0."""
        if s == 0:
            return 1.0
        return self._mgf(float(s))

    def sample(self, stream: RngStream) -> float:
        return float(self.sample_many(stream, 1)[0])

    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        first = self.moment(1)
        return self.moment(2) - first * first

    def _clip(self, lo: Optional[float], hi: Optional[float]) -> tuple[float, float]:
        a, b = self.support
        return (a if lo is None else max(lo, a), b if hi is None else min(hi, b))

    def expectation(self, f: Callable[[float], float], lo: Optional[float] = None, hi: Optional[float] = None) -> float:
        """
        Integral of f against the law over lo < X <= hi (whole support by default),
        with the divergence guard on semi-infinite ranges.
        """
        a, b = self._clip(lo, hi)
        if b <= a:
            return 0.0

        def integrand(x: float) -> float:
            d = self.density(x)
            return 0.0 if d == 0.0 else f(x) * d

        truncation = self.quantile(1.0 - TAIL_MASS) if math.isinf(b) else b
        return integrate_guarded(integrand, a, b, truncation, breakpoints=[self.quantile(0.5)])

    def __str__(self) -> str:
        return self.literal()


# --- Catalog ---
@lru_cache(maxsize=256)
def _scipy_law(kind: DistributionKind, params: tuple):
    if kind is DistributionKind.EXPONENTIAL:
        return stats.expon(scale=1.0 / params[0])
    if kind is DistributionKind.GAMMA:
        rate, shape = params
        return stats.gamma(a=shape, scale=1.0 / rate)
    if kind is DistributionKind.BETA:
        return stats.beta(*params)
    if kind is DistributionKind.UNIFORM:
        lo, hi = params
        return stats.uniform(loc=lo, scale=hi - lo)
    return stats.poisson(params[0])


class _ScipyBacked(Distribution):
    def _params(self) -> tuple:
        return tuple(self.model_dump().values())

    @property
    def law(self):
        return _scipy_law(self.kind, self._params())

    def density(self, x):
        return _as_output(self.law.pdf(x), x)

    def cdf(self, x):
        return _as_output(self.law.cdf(x), x)

    def quantile(self, p):
        return _as_output(self.law.ppf(p), p)


class Exponential(_ScipyBacked):
    kind = DistributionKind.EXPONENTIAL
    rate: float = Field(..., gt=0)

    @property
    def support(self):
        return (0.0, math.inf)

    def moment(self, k: int) -> float:
        return math.factorial(k) * (1.0 / self.rate) ** k

    def _mgf(self, s: float) -> float:
        if s >= self.rate:
            raise OutsideConvergenceStripError(s, self.literal())
        return self.rate / (self.rate - s)

    def sample_many(self, stream, size):
        return stream.generator.exponential(1.0 / self.rate, size)

    def literal(self) -> str:
        return f"exp(rate={format_number(self.rate)})"


class Gamma(_ScipyBacked):
    kind = DistributionKind.GAMMA
    rate: float = Field(..., gt=0)
    shape: float = Field(..., gt=0)

    @property
    def support(self):
        return (0.0, math.inf)

    def moment(self, k: int) -> float:
        return float(special.poch(self.shape, k)) * (1.0 / self.rate) ** k

    def _mgf(self, s: float) -> float:
        if s >= self.rate:
            raise OutsideConvergenceStripError(s, self.literal())
        return (self.rate / (self.rate - s)) ** self.shape

    def sample_many(self, stream, size):
        return stream.generator.gamma(self.shape, 1.0 / self.rate, size)

    def literal(self) -> str:
        return f"gamma(rate={format_number(self.rate)}, shape={format_number(self.shape)})"


class Beta(_ScipyBacked):
    kind = DistributionKind.BETA
    a: float = Field(..., gt=0)
    b: float = Field(..., gt=0)

    @property
    def support(self):
        return (0.0, 1.0)

    def moment(self, k: int) -> float:
        return float(special.poch(self.a, k) / special.poch(self.a + self.b, k))

    def _mgf(self, s: float) -> float:
        return float(special.hyp1f1(self.a, self.a + self.b, s))

    def sample_many(self, stream, size):
        return stream.generator.beta(self.a, self.b, size)

    def literal(self) -> str:
        return f"beta(a={format_number(self.a)}, b={format_number(self.b)})"


class Uniform(_ScipyBacked):
    kind = DistributionKind.UNIFORM
    lo: float
    hi: float

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lo < self.hi:
            raise ValueError("uniform needs lo < hi")
        return self

    @property
    def support(self):
        return (self.lo, self.hi)

    def moment(self, k: int) -> float:
        return (self.hi ** (k + 1) - self.lo ** (k + 1)) / ((k + 1) * (self.hi - self.lo))

    def _mgf(self, s: float) -> float:
        width = s * (self.hi - self.lo)
        return math.exp(s * self.lo) * math.expm1(width) / width

    def sample_many(self, stream, size):
        return stream.generator.uniform(self.lo, self.hi, size)

    def literal(self) -> str:
        return f"uniform(lo={format_number(self.lo)}, hi={format_number(self.hi)})"


class Poisson(_ScipyBacked):
    kind = DistributionKind.POISSON
    discrete = True
    lam: float = Field(..., gt=0)

    @property
    def support(self):
        return (0.0, math.inf)

    def density(self, x):
        x_arr = np.asarray(x, dtype=float)
        integral = np.floor(x_arr) == x_arr
        return _as_output(np.where(integral, self.law.pmf(np.floor(x_arr)), 0.0), x)

    def moment(self, k: int) -> float:
        return 1.0 if k == 0 else float(self.law.moment(k))

    def _mgf(self, s: float) -> float:
        return math.exp(self.lam * math.expm1(s))

    def sample_many(self, stream, size):
        return stream.generator.poisson(self.lam, size).astype(float)

    def expectation(self, f, lo=None, hi=None):
        top = float(self.law.ppf(1.0 - 1e-16)) + 10.0
        lo = -1.0 if lo is None else lo
        hi = top if hi is None else min(hi, top)
        ks = [float(k) for k in range(int(math.floor(lo)) + 1, int(math.floor(hi)) + 1) if k >= 0]
        return math.fsum(f(k) * float(self.law.pmf(k)) for k in ks)

    def literal(self) -> str:
        return f"poisson(lambda={format_number(self.lam)})"


class Degenerate(Distribution):
    kind = DistributionKind.DEGENERATE
    discrete = True
    point: float = Field(..., gt=0)

    @property
    def support(self):
        return (self.point, self.point)

    def density(self, x):
        return _as_output(np.where(np.asarray(x, dtype=float) == self.point, 1.0, 0.0), x)

    def cdf(self, x):
        return _as_output(np.where(np.asarray(x, dtype=float) >= self.point, 1.0, 0.0), x)

    def quantile(self, p):
        return _as_output(np.full(np.shape(p), self.point), p)

    def moment(self, k: int) -> float:
        return self.point ** k

    def _mgf(self, s: float) -> float:
        return math.exp(s * self.point)

    def sample_many(self, stream, size):
        return np.full(size, self.point)

    def expectation(self, f, lo=None, hi=None):
        inside = (lo is None or lo < self.point) and (hi is None or self.point <= hi)
        return float(f(self.point)) if inside else 0.0

    def literal(self) -> str:
        return f"degenerate({format_number(self.point)})"


# --- Density-tilted laws ---
class Tilted(Distribution):
    """The law weight(x) * base(dx); construction checks that the weight integrates to 1."""

    kind = DistributionKind.TILTED
    base: Distribution
    weight: InstanceOf[RealFn]

    @model_validator(mode="after")
    def _normalized(self):
        norm = self.base.expectation(self.weight)
        if not abs(norm - 1.0) <= NORMALIZATION_TOL:
            raise TiltNormalizationError(norm)
        return self

    @property
    def discrete(self) -> bool:
        return self.base.discrete

    @property
    def support(self):
        return self.base.support

    @property
    def is_catalog(self) -> bool:
        return False

    def density(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        base_density = np.atleast_1d(np.asarray(self.base.density(x_arr), dtype=float))
        out = np.zeros_like(base_density)
        mask = base_density > 0
        if np.any(mask):
            out[mask] = np.asarray(self.weight(x_arr[mask])) * base_density[mask]
        return _as_output(out.reshape(np.shape(x)) if np.ndim(x) else out, x)

    def expectation(self, f, lo=None, hi=None):
        return self.base.expectation(lambda x: f(x) * self.weight(x), lo, hi)

    def _cdf_scalar(self, x: float) -> float:
        if self.discrete:
            return min(1.0, max(0.0, self.expectation(lambda _: 1.0, hi=x)))
        lo, hi = self.support
        if x <= lo:
            return 0.0
        if x >= hi:
            return 1.0
        nodes, cumulative, _ = _tilt_table(self)
        i = int(np.searchsorted(nodes, x, side="right")) - 1
        if i < 0:
            value = integrate_interval(self.density, lo, x)
        else:
            value = cumulative[i] + integrate_interval(self.density, nodes[i], x)
        return min(1.0, max(0.0, float(value)))

    def cdf(self, x):
        if np.ndim(x) == 0:
            return self._cdf_scalar(float(x))
        return np.vectorize(self._cdf_scalar, otypes=[float])(x)

    def _quantile_scalar(self, p: float) -> float:
        if self.base.kind is DistributionKind.DEGENERATE:
            return self.base.point
        if self.discrete:
            k = 0.0
            while self._cdf_scalar(k) < p:
                k += 1.0
            return k
        nodes, cumulative, _ = _tilt_table(self)
        i = int(np.clip(np.searchsorted(cumulative, p), 1, len(nodes) - 1))
        a, b = nodes[i - 1], nodes[i]
        if self._cdf_scalar(a) > p:
            a = self.support[0]
        while self._cdf_scalar(b) < p:
            b = a + 2.0 * (b - a)
        return float(optimize.brentq(lambda x: self._cdf_scalar(x) - p, a, b, xtol=BISECTION_TOL))

    def quantile(self, p):
        if np.ndim(p) == 0:
            return self._quantile_scalar(float(p))
        return np.vectorize(self._quantile_scalar, otypes=[float])(p)

    def moment(self, k: int) -> float:
        try:
            return self.expectation(lambda x: x ** k)
        except DivergentIntegralError:
            raise DivergentMomentError(k, self.literal())

    def _mgf(self, s: float) -> float:
        try:
            return self.expectation(lambda x: math.exp(s * x) if s * x < 700 else math.inf)
        except DivergentIntegralError:
            raise OutsideConvergenceStripError(s, self.literal())

    def sample_many(self, stream, size):
        u = stream.uniform(size)
        if self.base.kind is DistributionKind.DEGENERATE:
            return np.full(size, self.base.point)
        if self.discrete:
            return np.array([self._quantile_scalar(p) for p in u])
        nodes, cumulative, interpolant = _tilt_table(self)
        levels = cumulative / cumulative[-1]
        upper = np.clip(np.searchsorted(levels, u, side="right"), 1, len(nodes) - 1)
        a, b = nodes[upper - 1], nodes[upper]
        # bisection on the tabulated CDF
        for _ in range(200):
            if np.all(b - a <= BISECTION_TOL * np.maximum(1.0, np.abs(b))):
                break
            mid = 0.5 * (a + b)
            below = interpolant(mid) < u
            a = np.where(below, mid, a)
            b = np.where(below, b, mid)
        return 0.5 * (a + b)

    def literal(self) -> str:
        return f"tilted({self.base.literal()}, weight={self.weight.to_source()})"


@lru_cache(maxsize=64)
def _tilt_table(tilted: Tilted):
    """
    CDF table of a continuous tilted law on a grid equidistributed in base
    probability, covering all but 1e-12 of base mass at each end.
    """
    base = tilted.base
    lo, hi = base.support
    probabilities = np.linspace(TAIL_MASS, 1.0 - TAIL_MASS, TILT_GRID_SIZE)
    nodes = np.asarray(base.quantile(probabilities), dtype=float)
    if math.isfinite(lo):
        nodes = np.concatenate([[lo], nodes])
    if math.isfinite(hi):
        nodes = np.concatenate([nodes, [hi]])
    nodes = np.unique(nodes)
    gauss_x, gauss_w = np.polynomial.legendre.leggauss(16)
    half = 0.5 * (nodes[1:] - nodes[:-1])
    mid = 0.5 * (nodes[1:] + nodes[:-1])
    points = mid[:, None] + half[:, None] * gauss_x[None, :]
    values = np.asarray(tilted.density(points.ravel())).reshape(points.shape)
    masses = (values * gauss_w[None, :]).sum(axis=1) * half
    cumulative = np.concatenate([[0.0], np.cumsum(masses)])
    interpolant = PchipInterpolator(nodes, cumulative / cumulative[-1])
    return nodes, cumulative, interpolant


# --- Literal syntax ---
_CATALOG = {
    "exp": (Exponential, ("rate",)),
    "exponential": (Exponential, ("rate",)),
    "gamma": (Gamma, ("rate", "shape")),
    "beta": (Beta, ("a", "b")),
    "uniform": (Uniform, ("lo", "hi")),
    "poisson": (Poisson, ("lam",)),
    "degenerate": (Degenerate, ("point",)),
}
_LITERAL_RE = re.compile(r"^\s*([A-Za-z_]+)\s*\((.*)\)\s*$", re.S)


def _split_arguments(text: str) -> list[str]:
    parts, depth, current = [], 0, []
    for ch in text:
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        current.append(ch)
    if "".join(current).strip():
        parts.append("".join(current))
    return [part.strip() for part in parts]


def parse_distribution(text: str, params: Optional[dict[str, float]] = None) -> Distribution:
    """
    Reads ``exp(rate=0.2)``, ``gamma(rate=2, shape=2)``, ``beta(a=2,b=1)``,
    ``uniform(lo=0,hi=1)``, ``poisson(lambda=3)`` or ``degenerate(2.0)``.
    Argument values are constant formulas and may use scenario parameters.
    """
    match = _LITERAL_RE.match(text)
    if not match:
        raise ExpressionSyntaxError(0, f"not a distribution literal: {text!r}")
    name = match.group(1).lower()
    if name not in _CATALOG:
        raise ExpressionSyntaxError(match.start(1), f"unknown distribution {name!r}")
    cls, positional = _CATALOG[name]
    kwargs = {}
    for index, argument in enumerate(_split_arguments(match.group(2))):
        key, sep, value = argument.partition("=")
        if sep:
            key = "lam" if key.strip() == "lambda" else key.strip()
        elif index < len(positional):
            key, value = positional[index], argument
        else:
            raise ExpressionSyntaxError(match.start(2), f"too many arguments for {name}")
        kwargs[key] = evaluate_constant(value, params)
    return cls(**kwargs)


def support_grid(law: Distribution, size: int) -> np.ndarray:
    """Points spread evenly in probability over the bulk of the law, endpoints excluded."""
    if law.kind is DistributionKind.DEGENERATE:
        return np.array([law.point])
    levels = np.linspace(GRID_TAIL, 1.0 - GRID_TAIL, size)
    return np.unique(np.asarray(law.quantile(levels), dtype=float))
