import re
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator

from src.domain.functionals import DEFAULT_FUNCTIONALS
from src.utils.config import settings
from src.utils.constants import MIN_PATHS
from .common_models import JobKind, MeasureKind, OutputFormat, ProcessKind, Verdict
from .report_models import ReportRow


def find_line(source: Optional[str], key: str) -> Optional[int]:
    """First line of the scenario text that assigns ``key``, for diagnostics."""
    if not source:
        return None
    pattern = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=")
    for number, line in enumerate(source.splitlines(), start=1):
        if pattern.match(line):
            return number
    return None


class ChangePreset(str, Enum):
    ESSCHER = "esscher"
    EXPECTED_VALUE = "expected-value"

class Criterion(str, Enum):
    """Closed-form premium criteria cross-checked against the generic conditions."""
    ESSCHER = "esscher"
    EXPECTED_VALUE = "expected-value"
    MIXED_ESSCHER = "mixed-esscher"


class BaseSpec(BaseModel):
    claim: str
    mixing: str
    rate: str = "theta"

class ChangeSpec(BaseModel):
    preset: Optional[ChangePreset] = None
    c: Optional[Union[float, str]] = None
    alpha: str = "0"
    gamma: str = "0"
    xi: str = "1"
    level: int = Field(1, ge=1, le=2)

class MCSpec(BaseModel):
    paths: int = Field(settings.DEFAULT_PATHS, ge=MIN_PATHS)
    seed: int = Field(settings.DEFAULT_SEED, ge=0, lt=2 ** 64)
    horizon: float = Field(settings.DEFAULT_HORIZON, gt=0)

class OutputSpec(BaseModel):
    format: OutputFormat = OutputFormat(settings.DEFAULT_FORMAT)
    path: Optional[str] = None


class JobSpec(BaseModel):
    kind: JobKind
    name: Optional[str] = None
    under: MeasureKind = MeasureKind.DERIVED_Q
    theta: Optional[float] = Field(None, gt=0)
    thetas: List[float] = []
    functionals: List[str] = list(DEFAULT_FUNCTIONALS)
    t: float = Field(1.0, gt=0)
    reverse: bool = False
    process: ProcessKind = ProcessKind.V_CHANGE
    pairs: List[Tuple[float, float]] = [(0.5, 1.0), (1.0, 2.0)]
    expect: Literal["martingale", "drift"] = "martingale"
    constant: float = 1.0
    s: float = Field(1.0, ge=0)
    horizons: List[float] = [10.0, 50.0]
    paths: Optional[int] = Field(None, ge=MIN_PATHS)
    level: Optional[int] = Field(None, ge=1, le=2)
    criterion: Optional[Criterion] = None
    expect_cond13: Optional[bool] = None
    dump: bool = False

    @field_validator("thetas")
    @classmethod
    def _positive_thetas(cls, thetas: List[float]) -> List[float]:
        if any(not theta > 0 for theta in thetas):
            raise ValueError("thetas must be positive")
        return thetas

    @property
    def label(self) -> str:
        return self.name or self.kind.value


class ScenarioSpec(BaseModel):
    name: str
    description: str = ""
    params: Dict[str, Union[float, str]] = {}
    base: BaseSpec
    change: ChangeSpec = ChangeSpec()
    mc: MCSpec = MCSpec()
    output: OutputSpec = OutputSpec()
    run: List[JobSpec] = []
    paper_values: Dict[str, float] = {}
    source: Optional[str] = Field(None, exclude=True, repr=False)

    def line_of(self, key: str) -> Optional[int]:
        return find_line(self.source, key)


class RunOverrides(BaseModel):
    """Command-line values that replace scenario values for one run."""

    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64)
    paths: Optional[int] = Field(None, ge=MIN_PATHS)
    horizon: Optional[float] = Field(None, gt=0)
    output: Optional[str] = None
    format: Optional[OutputFormat] = None
    params: Dict[str, float] = {}
    workers: Optional[int] = Field(None, ge=1)

    def apply(self, scenario: ScenarioSpec) -> ScenarioSpec:
        mc = scenario.mc.model_copy(update={
            key: value for key, value in (("seed", self.seed), ("paths", self.paths), ("horizon", self.horizon))
            if value is not None
        })
        output = scenario.output.model_copy(update={
            key: value for key, value in (("path", self.output), ("format", self.format)) if value is not None
        })
        params = {**scenario.params, **self.params}
        run = scenario.run
        if self.paths is not None:
            # a job-level count is replaced too, but a job without one stays without
            run = [job.model_copy(update={"paths": self.paths}) if job.paths else job for job in run]
        return scenario.model_copy(update={"mc": mc, "output": output, "params": params, "run": run})


class ScenarioResult(BaseModel):
    scenario: str
    rows: List[ReportRow]
    destination: Optional[str] = None
    text: str = ""

    @property
    def passed(self) -> bool:
        """Every gating row passed; inconclusive rows count as not passing."""
        return all(row.verdict is Verdict.PASS for row in self.rows if row.gating)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1
