"""
Adaptive quadrature on top of ``scipy.integrate.quad`` (Gauss-Kronrod with
subdivision; semi-infinite ranges use quad's smooth transform to a finite
interval) plus the truncation-doubling divergence guard.
"""
import logging
import math
import warnings
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from src.utils.constants import (
    DIVERGENCE_GROWTH,
    MAX_DOUBLINGS,
    QUAD_EPSABS,
    QUAD_EPSREL,
    QUAD_LIMIT,
)
from src.utils.exceptions import DivergentIntegralError

logger = logging.getLogger(__name__)


def integrate_interval(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    breakpoints: Optional[Sequence[float]] = None,
) -> float:
    """Integral of f over [lo, hi] at rel. tol 1e-9 / abs. tol 1e-12."""
    if hi <= lo:
        return 0.0
    kwargs = {}
    if breakpoints and math.isfinite(hi):
        inner = sorted(p for p in breakpoints if lo < p < hi)
        if inner:
            kwargs["points"] = inner
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        with np.errstate(all="ignore"):
            value, error = integrate.quad(
                f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT, **kwargs
            )
    if not math.isfinite(value):
        raise DivergentIntegralError(f"Integral over [{lo!r}, {hi!r}] is not finite.")
    if caught:
        logger.warning(f"Quadrature over [{lo!r}, {hi!r}] reported: {caught[-1].message} (error estimate {error:.3g})")
    return float(value)


def integrate_guarded(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    truncation: float,
    breakpoints: Optional[Sequence[float]] = None,
) -> float:
    """
    Integral over [lo, hi] where hi may be infinite. For infinite hi the range is
    truncated at ``truncation`` (chosen by the caller to leave 1e-12 of base mass
    beyond it) and the truncation length is doubled; the integral is declared
    divergent while a doubling still adds more than 1% of the running total.
    """
    if math.isfinite(hi):
        return integrate_interval(f, lo, hi, breakpoints)
    upper = truncation if math.isfinite(truncation) and truncation > lo else lo + 1.0
    total = integrate_interval(f, lo, upper, breakpoints)
    for _ in range(MAX_DOUBLINGS):
        next_upper = lo + 2.0 * (upper - lo)
        increment = integrate_interval(f, upper, next_upper)
        total += increment
        upper = next_upper
        if abs(increment) <= DIVERGENCE_GROWTH * max(abs(total), QUAD_EPSABS):
            return total + integrate_interval(f, upper, math.inf)
    raise DivergentIntegralError(f"Integral over [{lo!r}, inf) keeps growing after {MAX_DOUBLINGS} doublings.")
