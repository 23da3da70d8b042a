"""
Runs a scenario: builds the base model and measure change from their text, executes
the job list in order and turns every result into report rows.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import ValidationError

from src.domain.distributions import parse_distribution
from src.domain.expression import evaluate_constant, parse
from src.domain.functionals import Aggregate, Count, parse_functional
from src.domain.models.common_models import JobKind, MeasureKind, OutputFormat, ProcessKind, Verdict
from src.domain.models.path_models import MeasureTag
from src.domain.models.report_models import MCReport, ReportRow
from src.domain.models.risk_models import AdmissibilityReport, BaseRiskModel, DerivedModel, MeasureChange
from src.domain.models.scenario_models import ChangePreset, Criterion, JobSpec, RunOverrides, ScenarioResult, ScenarioSpec
from src.infrastructure.path_store import dump_paths
from src.infrastructure.report_writer import write_report
from src.use_cases.model_use_cases import ModelUseCases
from src.use_cases.premium_use_cases import PremiumUseCases
from src.use_cases.simulation_use_cases import SimulationUseCases
from src.use_cases.verification_use_cases import VerificationUseCases
from src.utils.config import settings
from src.utils.constants import CLAIM_VARIABLE, MIXING_VARIABLE, NORMALIZATION_TOL
from src.utils.data_loader import ScenarioCatalog, scenario_catalog
from src.utils.display_utils import format_number
from src.utils.exceptions import (
    CMPPLabException,
    ExpressionError,
    InadmissibleModelError,
    ScenarioParseError,
)

logger = logging.getLogger(__name__)

CLOSED_FORM_TOL = 1e-8
PUBLISHED_RTOL = 1e-6


def _close(a: float, b: float, tol: float = CLOSED_FORM_TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(b))


def _verdict(ok: bool) -> Verdict:
    return Verdict.PASS if ok else Verdict.FAIL


@dataclass
class _Run:
    scenario: ScenarioSpec
    params: Dict[str, float]
    base: BaseRiskModel
    change: MeasureChange
    c: Optional[float] = None
    admissibility: Optional[AdmissibilityReport] = None
    derived: Optional[DerivedModel] = None
    rows: List[ReportRow] = field(default_factory=list)


class ScenarioUseCases:
    def __init__(
        self,
        model_use_cases: ModelUseCases,
        simulation_use_cases: SimulationUseCases,
        verification_use_cases: VerificationUseCases,
        premium_use_cases: PremiumUseCases,
        catalog: ScenarioCatalog = scenario_catalog,
    ):
        self.model_use_cases = model_use_cases
        self.simulation = simulation_use_cases
        self.verification = verification_use_cases
        self.premium = premium_use_cases
        self.catalog = catalog

    # --- Building ---
    @staticmethod
    def resolve_params(scenario: ScenarioSpec) -> Dict[str, float]:
        """Parameter values in declaration order; text values may use earlier parameters."""
        resolved: Dict[str, float] = {}
        for name, value in scenario.params.items():
            try:
                resolved[name] = value if isinstance(value, float) else evaluate_constant(str(value), resolved)
            except ExpressionError as e:
                raise ScenarioParseError(f"params.{name}: {e.message}", scenario.line_of(name)) from e
        return resolved

    @staticmethod
    def _built(scenario: ScenarioSpec, key: str, build):
        try:
            return build()
        except (ExpressionError, InadmissibleModelError) as e:
            raise ScenarioParseError(f"{key}: {e.message}", scenario.line_of(key.split(".")[-1])) from e
        except ValidationError as e:
            raise ScenarioParseError(f"{key}: {e.errors()[0]['msg']}", scenario.line_of(key.split(".")[-1])) from e

    def build_base(self, scenario: ScenarioSpec, params: Dict[str, float]) -> BaseRiskModel:
        spec = scenario.base
        claim = self._built(scenario, "base.claim", lambda: parse_distribution(spec.claim, params))
        mixing = self._built(scenario, "base.mixing", lambda: parse_distribution(spec.mixing, params))
        rate = self._built(scenario, "base.rate", lambda: parse(spec.rate, variable=MIXING_VARIABLE, params=params))
        return self._built(scenario, "base.claim", lambda: BaseRiskModel(claim_law=claim, mixing_law=mixing, rate_fn=rate))

    def change_constant(self, scenario: ScenarioSpec, params: Dict[str, float]) -> Optional[float]:
        value: Optional[Union[float, str]] = scenario.change.c
        if value is None:
            return params.get("c")
        if isinstance(value, float):
            return value
        return self._built(scenario, "change.c", lambda: evaluate_constant(value, params))

    def build_change(self, scenario: ScenarioSpec, params: Dict[str, float], base: BaseRiskModel) -> MeasureChange:
        spec = scenario.change
        if spec.preset is None:
            alpha = self._built(scenario, "change.alpha", lambda: parse(spec.alpha, variable=MIXING_VARIABLE, params=params))
            gamma = self._built(scenario, "change.gamma", lambda: parse(spec.gamma, variable=CLAIM_VARIABLE, params=params))
            xi = self._built(scenario, "change.xi", lambda: parse(spec.xi, variable=MIXING_VARIABLE, params=params))
            return MeasureChange(alpha=alpha, gamma=gamma, xi=xi, level=spec.level)
        c = self.change_constant(scenario, params)
        if c is None:
            raise ScenarioParseError(f"change.preset = {spec.preset.value!r} needs a value for c", scenario.line_of("preset"))
        xi = self._built(scenario, "change.xi", lambda: parse(spec.xi, variable=MIXING_VARIABLE, params=params))
        if spec.preset is ChangePreset.ESSCHER:
            return self._built(scenario, "change.c", lambda: self.premium.esscher_change(c, base, xi, spec.level))
        return self.premium.expected_value_change(c, xi, spec.level)

    def prepare(self, scenario: ScenarioSpec) -> _Run:
        params = self.resolve_params(scenario)
        base = self.build_base(scenario, params)
        change = self.build_change(scenario, params, base)
        c = self.change_constant(scenario, params)
        return _Run(scenario=scenario, params=params, base=base, change=change, c=c)

    # --- Running ---
    def load(self, identifier: Union[str, ScenarioSpec], overrides: Optional[RunOverrides] = None) -> ScenarioSpec:
        scenario = identifier if isinstance(identifier, ScenarioSpec) else self.catalog.load(identifier)
        return (overrides or RunOverrides()).apply(scenario)

    def destination(self, scenario: ScenarioSpec) -> str:
        if scenario.output.path:
            return scenario.output.path
        extension = "csv" if scenario.output.format is OutputFormat.CSV else "jsonl"
        return str(Path(settings.OUTPUT_DIR) / f"{scenario.name}.{extension}")

    def run_scenario(self, identifier: Union[str, ScenarioSpec], overrides: Optional[RunOverrides] = None, write: bool = True) -> ScenarioResult:
        """Executes every job in order and writes the report; the result knows the exit code."""
        overrides = overrides or RunOverrides()
        scenario = self.load(identifier, overrides)
        if overrides.workers:
            self.simulation.workers = overrides.workers
        run = self.prepare(scenario)
        logger.info(f"Running scenario '{scenario.name}' with {len(scenario.run)} jobs (seed {scenario.mc.seed}, {scenario.mc.paths} paths)")

        handlers = {
            JobKind.SIMULATE: self._simulate,
            JobKind.VALIDATE: self._validate,
            JobKind.DERIVE_Q: self._derive_q,
            JobKind.VERIFY_REWEIGHTING: self._reweighting,
            JobKind.VERIFY_MARTINGALE: self._martingale,
            JobKind.DEGENERACY: self._degeneracy,
            JobKind.SINGULARITY: self._singularity,
            JobKind.PREMIUM: self._premium,
        }
        for job in scenario.run:
            try:
                handlers[job.kind](run, job)
            except CMPPLabException as e:
                if isinstance(e, ScenarioParseError):
                    raise
                logger.error(f"Job '{job.label}' failed: {e.message}")
                run.rows.append(self._row(run, job, "error", verdict=Verdict.FAIL, text=e.message))

        destination = self.destination(scenario) if write else None
        text = write_report(run.rows, scenario.output.format, destination)
        result = ScenarioResult(scenario=scenario.name, rows=run.rows, destination=destination, text=text)
        failing = [row for row in run.rows if row.gating and row.verdict is not Verdict.PASS]
        logger.info(f"Scenario '{scenario.name}': {len(run.rows)} rows, {len(failing)} not passing")
        return result

    def premium_only(self, identifier: Union[str, ScenarioSpec], overrides: Optional[RunOverrides] = None, thetas: Optional[List[float]] = None) -> ScenarioResult:
        """Validation plus the premium job of a scenario, without simulation."""
        scenario = self.load(identifier, overrides)
        run = self.prepare(scenario)
        premium_jobs = [job for job in scenario.run if job.kind is JobKind.PREMIUM] or [JobSpec(kind=JobKind.PREMIUM)]
        job = premium_jobs[0].model_copy(update={"paths": None})
        if thetas:
            job = job.model_copy(update={"thetas": thetas})
        self._validate(run, JobSpec(kind=JobKind.VALIDATE))
        self._premium(run, job)
        return ScenarioResult(scenario=scenario.name, rows=run.rows)

    # --- Helpers ---
    def _row(self, run: _Run, job: JobSpec, quantity: str, estimate: Optional[float] = None, stderr: Optional[float] = None,
             oracle: Optional[float] = None, verdict: Verdict = Verdict.INFO, text: str = "",
             paths: Optional[int] = None, horizon: Optional[float] = None) -> ReportRow:
        published = run.scenario.paper_values.get(quantity)
        if published is not None:
            reference = oracle if oracle is not None else estimate
            if reference is not None and not abs(reference - published) <= PUBLISHED_RTOL * max(1.0, abs(published)):
                logger.warning(f"{run.scenario.name}: {quantity} = {reference:.10g} differs from the published value {format_number(published)}")
        return ReportRow(
            scenario=run.scenario.name, job=job.label, quantity=quantity, estimate=estimate, stderr=stderr,
            oracle=oracle, paper_value=published, verdict=verdict, text=text, seed=run.scenario.mc.seed,
            paths=paths, horizon=horizon,
        )

    def _mc_row(self, run: _Run, job: JobSpec, report: MCReport, quantity: str, horizon: float) -> ReportRow:
        return self._row(run, job, quantity, report.estimate, report.stderr, report.oracle, report.verdict, paths=report.n, horizon=horizon)

    def _paths(self, run: _Run, job: JobSpec) -> int:
        return job.paths or run.scenario.mc.paths

    @staticmethod
    def _tag(job: JobSpec) -> MeasureTag:
        derived = job.under in (MeasureKind.DERIVED_Q, MeasureKind.CONDITIONAL_Q)
        conditional = job.theta is not None or job.under in (MeasureKind.CONDITIONAL_P, MeasureKind.CONDITIONAL_Q)
        if conditional and job.theta is None:
            raise ScenarioParseError(f"job '{job.label}' runs under {job.under.value} and needs theta")
        if conditional:
            return MeasureTag.conditional_q(job.theta) if derived else MeasureTag.conditional_p(job.theta)
        return MeasureTag.derived_q() if derived else MeasureTag.base_p()

    def _ensure_derived(self, run: _Run, level: Optional[int] = None) -> Optional[DerivedModel]:
        if run.derived is None:
            run.admissibility, run.derived = self.model_use_cases.validated_q_model(run.base, run.change, level)
        return run.derived

    def _not_validated(self, run: _Run, job: JobSpec):
        run.rows.append(self._row(run, job, "measure change", verdict=Verdict.FAIL, text="measure change failed validation"))

    # --- Jobs ---
    def _validate(self, run: _Run, job: JobSpec):
        report = self.model_use_cases.validate_change(run.base, run.change, job.level)
        run.admissibility = report
        for name, value in (("gamma_norm", report.gamma_norm), ("xi_norm", report.xi_norm)):
            ok = math.isfinite(value) and abs(value - 1.0) <= NORMALIZATION_TOL
            run.rows.append(self._row(run, job, name, value, oracle=1.0, verdict=_verdict(ok)))
        run.rows.append(self._row(run, job, "xi_positive", verdict=_verdict(report.xi_positive), text=str(report.xi_positive).lower()))
        for l in (1, 2):
            run.rows.append(self._row(run, job, f"E_P[X^{l} e^gamma(X)]", report.claim_gates[l]))
            run.rows.append(self._row(run, job, f"E_P[xi(Theta) g(Theta)^{l}]", report.mixing_gates[l]))
        text = f"level {report.level} of {report.level_requested}"
        if report.divergent:
            text += "; divergent: " + ", ".join(report.divergent)
        run.rows.append(self._row(run, job, "admissibility", float(report.level), oracle=float(report.level_requested), verdict=report.verdict, text=text))
        if report.passed:
            run.derived = self.model_use_cases.derive_q_model(run.base, run.change, job.level)

    def _derive_q(self, run: _Run, job: JobSpec):
        derived = self._ensure_derived(run, job.level)
        if derived is None:
            return self._not_validated(run, job)
        run.rows.append(self._row(run, job, "g(theta)", text=derived.g.to_source()))
        run.rows.append(self._row(run, job, "q_claim", text=str(derived.q_claim)))
        run.rows.append(self._row(run, job, "q_mixing", text=str(derived.q_mixing)))
        run.rows.append(self._row(run, job, "E_Q[X_1]", derived.q_claim.moment(1)))
        run.rows.append(self._row(run, job, "E_Q[N_1]", derived.q_mixing.expectation(derived.g)))

    def _simulate(self, run: _Run, job: JobSpec):
        tag = self._tag(job)
        derived = self._ensure_derived(run) if tag.is_derived else run.derived
        if tag.is_derived and derived is None:
            return self._not_validated(run, job)
        n, seed, horizon = self._paths(run, job), run.scenario.mc.seed, run.scenario.mc.horizon
        for functional, quantity in ((Count(), f"E[N_t] {tag.label()}"), (Aggregate(), f"E[S_t] {tag.label()}")):
            report = self.verification.mc_estimate(functional, run.base, derived, tag, horizon, n, seed)
            run.rows.append(self._mc_row(run, job, report, quantity, horizon))
        marginal = self.verification.check_count_marginal(run.base, derived, tag, horizon, n, seed)
        run.rows.append(self._row(
            run, job, f"N_t marginal {tag.label()}", marginal.statistic, verdict=marginal.verdict,
            text=f"chi2 p-value {marginal.p_value:.6g} over {marginal.bins} cells", paths=n, horizon=horizon,
        ))
        if job.dump:
            paths = self.simulation.simulate_paths(run.base, derived, tag, horizon, n, seed)
            target = Path(self.destination(run.scenario)).with_name(f"{run.scenario.name}-{job.label}-paths.jsonl")
            count = dump_paths(paths, str(target))
            run.rows.append(self._row(run, job, "paths dumped", float(count), text=str(target), paths=n, horizon=horizon))

    def _reweighting(self, run: _Run, job: JobSpec):
        if self._ensure_derived(run) is None:
            return self._not_validated(run, job)
        try:
            functionals = [parse_functional(name) for name in job.functionals]
        except ScenarioParseError as e:
            raise ScenarioParseError(e.message, run.scenario.line_of("functionals")) from e
        n, seed = self._paths(run, job), run.scenario.mc.seed
        thetas = [job.theta] if job.theta is not None else [None, *job.thetas]
        for theta in thetas:
            reports = self.verification.check_reweighting_battery(functionals, job.t, run.base, run.change, theta, n, seed, job.reverse)
            suffix = "" if theta is None else f" | theta={format_number(theta)}"
            for report in reports:
                direct = report.direct
                run.rows.append(self._row(
                    run, job, f"{report.quantity} direct{suffix}", direct.estimate, direct.stderr, direct.oracle,
                    text=report.weighted.quantity, paths=n, horizon=job.t,
                ))
                run.rows.append(self._row(
                    run, job, f"{report.quantity} reweighted difference{suffix}", report.difference, report.pooled_stderr, 0.0,
                    report.verdict, text=f"weighted estimate {report.weighted.estimate:.10g}", paths=n, horizon=job.t,
                ))

    def _martingale(self, run: _Run, job: JobSpec):
        tag = self._tag(job)
        uses_change = job.process in (ProcessKind.V_CHANGE, ProcessKind.DENSITY)
        if (tag.is_derived or uses_change) and self._ensure_derived(run) is None:
            return self._not_validated(run, job)
        n, seed = self._paths(run, job), run.scenario.mc.seed
        table = self.verification.check_martingale(
            job.process, run.base, run.change if uses_change or tag.is_derived else None, tag, job.pairs,
            None, n, seed, job.expect, job.constant,
        )
        for cell in table.cells:
            run.rows.append(self._row(
                run, job, f"{job.process.value} [{format_number(cell.s)}, {format_number(cell.t)}] {cell.event}",
                cell.estimate, cell.stderr, cell.expected, text=f"z={cell.z:.4f}; {cell.verdict.value} at 3 sigma",
                paths=n, horizon=cell.t,
            ))
        run.rows.append(self._row(
            run, job, f"{job.process.value} max |z| {table.measure}", table.max_abs_z, oracle=table.critical_z,
            verdict=table.verdict, text=f"{len(table.cells)} cells, family level {table.family_level}, expect {table.expect}",
            paths=n,
        ))

    def _degeneracy(self, run: _Run, job: JobSpec):
        if self._ensure_derived(run) is None:
            return self._not_validated(run, job)
        n, seed = self._paths(run, job), run.scenario.mc.seed
        t = job.t if job.t > job.s else job.s + 1.0
        report = self.verification.degeneracy_test(run.base, run.change, n, seed, job.s, t)
        for cell, oracle in zip(report.cells, report.oracles):
            run.rows.append(self._row(
                run, job, f"centered S [{format_number(cell.s)}, {format_number(cell.t)}] {cell.event}",
                cell.estimate, cell.stderr, oracle, text=f"z={cell.z:.4f}", paths=n, horizon=cell.t,
            ))
        run.rows.append(self._row(
            run, job, "degeneracy", report.max_abs_z, verdict=report.verdict,
            text=f"degenerate={str(report.degenerate).lower()}; witness={report.witness or '-'}", paths=n, horizon=t,
        ))

    def _singularity(self, run: _Run, job: JobSpec):
        if self._ensure_derived(run) is None:
            return self._not_validated(run, job)
        n, seed = self._paths(run, job), run.scenario.mc.seed
        report = self.verification.singularity_probe(run.base, run.change, job.theta, job.horizons, n, seed)
        for row in report.rows:
            run.rows.append(self._row(
                run, job, f"log-density drift {row.measure} T={format_number(row.horizon)}", row.drift, row.drift_stderr,
                row.oracle_drift, row.verdict, paths=n, horizon=row.horizon,
                text=(
                    f"mean {row.mean_log_density:.6g}; q05 {row.q05:.6g}; q50 {row.q50:.6g}; q95 {row.q95:.6g}; "
                    f"below -5 {row.fraction_below:.4f}; above +5 {row.fraction_above:.4f}"
                ),
            ))
        run.rows.append(self._row(
            run, job, "separation grows", verdict=report.verdict, paths=n,
            text=(
                f"{str(report.separation_grows).lower()}; P below -5 + Q above +5: "
                + ", ".join(f"{value:.4f}" for value in report.separation)
                + "; P below -5: " + ", ".join(f"{value:.4f}" for value in report.p_mass_below)
            ),
        ))

    def _premium(self, run: _Run, job: JobSpec):
        derived = self._ensure_derived(run, job.level)
        if derived is None:
            return self._not_validated(run, job)
        base, change = run.base, run.change
        quote = self.premium.premium_density(base, derived)
        run.rows.append(self._row(run, job, "p(P)", quote.p_base, text=quote.method.value))
        run.rows.append(self._row(run, job, "p(Q)", quote.p_derived, text=quote.method.value))
        run.rows.append(self._row(run, job, "p(P_theta)", text=quote.per_theta_base))
        run.rows.append(self._row(run, job, "p(Q_theta)", text=quote.per_theta_derived))
        run.rows.append(self._row(run, job, "E_Q[N_1]", quote.expected_count_derived))
        run.rows.append(self._row(run, job, "E_Q[X_1]", quote.mean_claim_derived))
        horizon = run.scenario.mc.horizon
        run.rows.append(self._row(run, job, "premium schedule p_0", self.premium.premium_schedule(quote, 0.0, horizon), horizon=horizon))

        cond13 = self.premium.check_condition_13(quote)
        verdict = Verdict.INFO if job.expect_cond13 is None else _verdict(cond13.holds == job.expect_cond13)
        run.rows.append(self._row(
            run, job, "condition 13", cond13.margin, verdict=verdict,
            text=f"{'holds' if cond13.holds else 'fails'}: p(P) {cond13.lower:.10g} < p(Q) {cond13.upper:.10g}",
        ))
        if quote.finite:
            _, per_theta = self.premium.per_theta_premiums(base, change)
            integrated = derived.q_mixing.expectation(per_theta)
            run.rows.append(self._row(
                run, job, "integrated p(Q_theta)", integrated, oracle=quote.p_derived,
                verdict=_verdict(_close(integrated, quote.p_derived)),
            ))

        for theta in job.thetas:
            cond14 = self.premium.check_condition_14(theta, base, change)
            label = f"theta={format_number(theta)}"
            run.rows.append(self._row(
                run, job, f"condition 14 {label}", cond14.margin,
                text=f"{'holds' if cond14.holds else 'fails'}: p(P_theta) {cond14.lower:.10g} < p(Q_theta) {cond14.upper:.10g}",
            ))
            self._criterion_rows(run, job, theta, cond14.holds, cond14.lower, cond14.upper)
        if job.criterion is Criterion.MIXED_ESSCHER:
            self._mixed_esscher_rows(run, job, quote.p_derived, cond13.holds)

        if job.paths:
            report = self.premium.mc_premium_density(base, derived, job.paths, run.scenario.mc.seed, quote)
            run.rows.append(self._mc_row(run, job, report, "p(Q) simulated", 1.0))

    def _criterion_rows(self, run: _Run, job: JobSpec, theta: float, holds: bool, p_theta: float, q_theta: float):
        label = f"theta={format_number(theta)}"
        c = run.c
        if job.criterion is None or c is None:
            return
        if job.criterion is Criterion.ESSCHER:
            criterion = self.premium.esscher_criterion(run.base, c)
            run.rows.append(self._row(
                run, job, f"esscher criterion {label}", criterion.margin, verdict=_verdict(criterion.holds == holds),
                text=f"E_P[X]E_P[e^cX] {criterion.lower:.10g} < E_P[X e^cX] {criterion.upper:.10g}",
            ))
        elif job.criterion is Criterion.EXPECTED_VALUE:
            ratio = q_theta / p_theta
            run.rows.append(self._row(
                run, job, f"loading factor {label}", ratio, oracle=math.exp(c),
                verdict=_verdict(_close(ratio, math.exp(c)) and holds == (c > 0)),
            ))
        elif job.criterion is Criterion.MIXED_ESSCHER:
            quadratic = self.premium.mixed_esscher_quadratic(theta, c)
            run.rows.append(self._row(
                run, job, f"quadratic criterion {label}", verdict=_verdict(quadratic == holds),
                text=f"quadratic {'holds' if quadratic else 'fails'}",
            ))

    def _mixed_esscher_rows(self, run: _Run, job: JobSpec, p_derived: float, cond13_holds: bool):
        c = run.c
        if c is None:
            return
        closed = self.premium.j_integral(c)
        quadrature = self.premium.j_integral_quadrature(c)
        run.rows.append(self._row(run, job, "J(c)", closed, oracle=quadrature, verdict=_verdict(_close(closed, quadrature))))
        expected = 2.0 * (c + 1) ** 2 * closed
        run.rows.append(self._row(run, job, "p(Q) closed form", expected, oracle=p_derived, verdict=_verdict(_close(expected, p_derived))))
        criterion = self.premium.mixed_esscher_condition_13(c)
        run.rows.append(self._row(
            run, job, "condition 13 criterion", criterion.margin, verdict=_verdict(criterion.holds == cond13_holds),
            text=f"J(c) {criterion.upper:.10g} > (2/3)(c+1)^-3 {criterion.lower:.10g}",
        ))
