import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from src.utils.constants import SIGMA_LEVEL
from .common_models import PremiumMethod, ProcessKind, Verdict


class MCReport(BaseModel):
    quantity: str = ""
    estimate: float
    stderr: float = Field(..., ge=0)
    n: int
    ci_low: float
    ci_high: float
    verdict: Verdict
    oracle: Optional[float] = None

    @classmethod
    def from_samples(cls, samples: np.ndarray, verdict: Verdict, oracle: Optional[float] = None, quantity: str = ""):
        samples = np.asarray(samples, dtype=float)
        n = int(samples.size)
        estimate = float(np.mean(samples))
        stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(
            quantity=quantity,
            estimate=estimate,
            stderr=stderr,
            n=n,
            ci_low=estimate - SIGMA_LEVEL * stderr,
            ci_high=estimate + SIGMA_LEVEL * stderr,
            verdict=verdict,
            oracle=oracle,
        )


class ReweightingReport(BaseModel):
    """Direct simulation on one side against likelihood-weighted simulation on the other."""

    quantity: str
    direct: MCReport
    weighted: MCReport
    difference: float
    pooled_stderr: float
    oracle: Optional[float] = None
    verdict: Verdict


class MartingaleCell(BaseModel):
    s: float
    t: float
    event: str
    estimate: float
    stderr: float
    expected: float = 0.0
    z: float
    verdict: Verdict


class MartingaleTable(BaseModel):
    process: ProcessKind
    measure: str
    cells: List[MartingaleCell]
    family_level: float
    critical_z: float
    expect: str = "martingale"
    verdict: Verdict

    @property
    def max_abs_z(self) -> float:
        return max((abs(cell.z) for cell in self.cells), default=0.0)


class DegeneracyReport(BaseModel):
    degenerate: bool
    cells: List[MartingaleCell]
    oracles: List[float]
    max_abs_z: float
    witness: Optional[str] = None
    verdict: Verdict


class SingularityRow(BaseModel):
    horizon: float
    measure: str
    n: int
    mean_log_density: float
    stderr: float
    drift: float
    drift_stderr: float
    oracle_drift: Optional[float] = None
    q05: float
    q50: float
    q95: float
    fraction_below: float
    fraction_above: float
    verdict: Verdict


class SingularityReport(BaseModel):
    rows: List[SingularityRow]
    separation: List[float]        # P mass below -5 plus Q mass above +5, per horizon
    p_mass_below: List[float]      # the P term alone
    separation_grows: bool
    verdict: Verdict


class ConditionCheck(BaseModel):
    holds: bool
    lower: float
    upper: float
    margin: float    # upper - lower


class PremiumQuote(BaseModel):
    p_base: float
    p_derived: float
    per_theta_base: str     # p(P_theta) as a formula in theta
    per_theta_derived: str  # p(Q_theta)
    expected_count_derived: float   # E_Q[N_1] = E_Q[g(Theta)]
    mean_claim_derived: float       # E_Q[X_1]
    cond13: ConditionCheck
    method: PremiumMethod

    @property
    def finite(self) -> bool:
        return math.isfinite(self.p_derived)


class ReportRow(BaseModel):
    scenario: str
    job: str
    quantity: str
    estimate: Optional[float] = None
    stderr: Optional[float] = None
    oracle: Optional[float] = None
    paper_value: Optional[float] = None
    verdict: Verdict = Verdict.INFO
    text: str = ""
    seed: Optional[int] = None
    paths: Optional[int] = None
    horizon: Optional[float] = None

    @property
    def gating(self) -> bool:
        return self.verdict != Verdict.INFO


class CountMarginalReport(BaseModel):
    """Chi-square comparison of simulated N_t against the mixed Poisson pmf."""

    t: float
    n: int
    bins: int
    statistic: float
    p_value: float
    verdict: Verdict
