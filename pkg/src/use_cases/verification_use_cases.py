"""
Monte Carlo checks of the measure-change identities: reweighting (Q expectations
recovered from P-paths weighted by the density), martingale tests in integral
form over a finite family of conditioning events, the degeneracy dichotomy of
the unconditionally centered surplus and the finite-horizon singularity trend.
"""
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from src.domain.functionals import (
    Aggregate,
    Count,
    FunctionalBattery,
    IncrementBattery,
    LogDensityBattery,
    NoClaims,
    One,
    PathFunctional,
    StateAt,
    WeightedBattery,
)
from src.domain.models.common_models import EventKind, ProcessKind, SurplusKind, Verdict
from src.domain.models.path_models import EventSpec, MeasureTag
from src.domain.models.report_models import (
    CountMarginalReport,
    DegeneracyReport,
    MartingaleCell,
    MartingaleTable,
    MCReport,
    ReweightingReport,
    SingularityReport,
    SingularityRow,
)
from src.domain.models.risk_models import BaseRiskModel, DerivedModel, MeasureChange
from src.domain.processes import CenteredAggregate, ConstantProcess, DensityProcess, RawAggregate
from src.use_cases.model_use_cases import ModelUseCases
from src.use_cases.simulation_use_cases import SimulationUseCases, mixed_count_pmf, side_of
from src.utils.constants import (
    DETECTION_SIGMA,
    FAMILY_DEGENERACY,
    FAMILY_DIRECT,
    FAMILY_ESTIMATE,
    FAMILY_LEVEL,
    FAMILY_MARTINGALE,
    FAMILY_PILOT,
    FAMILY_SINGULAR_P,
    FAMILY_SINGULAR_Q,
    FAMILY_WEIGHTED,
    LOG_DENSITY_BAND,
    MARGINAL_LEVEL,
    MIN_PATHS,
    PILOT_PATHS,
    SIGMA_LEVEL,
    WALD_SIGMA_LEVEL,
)
from src.utils.exceptions import BadIntervalError, InsufficientPathsError, InvalidEventError

logger = logging.getLogger(__name__)

ROUNDOFF = 1e-12


def within(difference: float, stderr: float, sigmas: float, scale: float = 1.0) -> bool:
    """|difference| <= sigmas * stderr, with a roundoff floor for zero-variance estimates."""
    return abs(difference) <= sigmas * stderr + ROUNDOFF * max(1.0, abs(scale))


def z_score(difference: float, stderr: float, scale: float = 1.0) -> float:
    if stderr > 0:
        return difference / stderr
    return 0.0 if within(difference, 0.0, 0.0, scale) else math.copysign(math.inf, difference)


def marginal_verdict(p_value: float) -> Verdict:
    return Verdict.PASS if p_value > MARGINAL_LEVEL else Verdict.FAIL


def bonferroni_z(cells: int, level: float = FAMILY_LEVEL) -> float:
    """Two-sided per-cell critical value keeping the family-wise error at ``level``."""
    return float(stats.norm.ppf(1.0 - level / (2.0 * max(cells, 1))))


class VerificationUseCases:
    def __init__(self, model_use_cases: ModelUseCases, simulation_use_cases: SimulationUseCases):
        self.model_use_cases = model_use_cases
        self.simulation = simulation_use_cases

    @staticmethod
    def _require_paths(n: int):
        if n < MIN_PATHS:
            raise InsufficientPathsError(n, MIN_PATHS)

    # --- Oracles ---
    @staticmethod
    def _over_theta(tag: MeasureTag, mixing, fn: Callable[[float], float]) -> float:
        return fn(tag.theta) if tag.is_conditional else mixing.expectation(fn)

    def functional_oracle(self, functional: PathFunctional, base, derived, tag: MeasureTag, t: float) -> Optional[float]:
        """Quadrature value of E[f(path, t)] under the tag, for functionals with a known law."""
        mixing, claim_law, intensity = side_of(base, derived, tag)
        if isinstance(functional, One):
            return 1.0
        if isinstance(functional, Count):
            return self._over_theta(tag, mixing, lambda th: t * intensity(th))
        if isinstance(functional, Aggregate):
            return self._over_theta(tag, mixing, lambda th: t * intensity(th)) * claim_law.moment(1)
        if isinstance(functional, NoClaims):
            return self._over_theta(tag, mixing, lambda th: math.exp(-t * intensity(th)))
        return None

    def log_density_drift(self, base: BaseRiskModel, derived: DerivedModel, change: MeasureChange, tag: MeasureTag, horizon: float) -> float:
        """
        E[log M_T] / T under the tag: per theta the rate r(theta) alpha(theta) +
        r(theta) E[gamma(X)] - h(theta)(e^alpha(theta) - 1), with r and the claim law
        of the simulating side; unconditionally E[ln xi(Theta)] / T is added.
        """
        mixing, claim_law, intensity = side_of(base, derived, tag)
        mean_gamma = claim_law.expectation(change.gamma)

        def drift(theta: float) -> float:
            alpha = change.alpha(theta)
            r = intensity(theta)
            return r * alpha + r * mean_gamma - base.rate_fn(theta) * math.expm1(alpha)

        if tag.is_conditional:
            return drift(tag.theta)
        return mixing.expectation(lambda th: math.log(change.xi(th))) / horizon + mixing.expectation(drift)

    def conditional_drift(self, base: BaseRiskModel, change: MeasureChange, theta: float, derived_side: bool = False) -> float:
        derived = self.model_use_cases.derive_q_model(base, change)
        tag = MeasureTag.conditional_q(theta) if derived_side else MeasureTag.conditional_p(theta)
        return self.log_density_drift(base, derived, change, tag, 1.0)

    # --- Estimates ---
    def mc_estimate(
        self,
        functional: PathFunctional,
        base: BaseRiskModel,
        derived: Optional[DerivedModel],
        tag: MeasureTag,
        t: float,
        n: int,
        seed: int,
        oracle: Optional[float] = None,
    ) -> MCReport:
        """Sample mean of f(path, t) over n fresh paths; judged against the oracle when one is known."""
        self._require_paths(n)
        if oracle is None:
            oracle = self.functional_oracle(functional, base, derived, tag, t)
        samples = self.simulation.evaluate_paths(FunctionalBattery((functional,), t), base, derived, tag, t, n, seed, FAMILY_ESTIMATE)[:, 0]
        report = MCReport.from_samples(samples, Verdict.INCONCLUSIVE, oracle, quantity=getattr(functional, "name", ""))
        if oracle is not None:
            verdict = Verdict.PASS if within(report.estimate - oracle, report.stderr, SIGMA_LEVEL, oracle) else Verdict.FAIL
            report = report.model_copy(update={"verdict": verdict})
        return report

    def check_reweighting_battery(
        self,
        functionals: Sequence[PathFunctional],
        t: float,
        base: BaseRiskModel,
        change: MeasureChange,
        theta: Optional[float] = None,
        n: int = 10_000,
        seed: int = 0,
        reverse: bool = False,
    ) -> List[ReweightingReport]:
        """
        Side 1 simulates under Q (Q_theta when theta is given); side 2 simulates under
        P (P_theta) and weights each path by M_t. With ``reverse`` the roles swap and
        the weight is 1/M_t. Both sides use disjoint stream families.
        """
        self._require_paths(n)
        derived = self.model_use_cases.derive_q_model(base, change)
        direct_tag = MeasureTag.derived_q() if theta is None else MeasureTag.conditional_q(theta)
        weighted_tag = direct_tag.counterpart()
        sign = 1.0
        if reverse:
            direct_tag, weighted_tag, sign = weighted_tag, direct_tag, -1.0
        functionals = tuple(functionals)

        direct = self.simulation.evaluate_paths(
            FunctionalBattery(functionals, t), base, derived, direct_tag, t, n, seed, FAMILY_DIRECT
        )
        weighted = self.simulation.evaluate_paths(
            WeightedBattery(functionals, t, change, theta is None, base.rate_fn, sign),
            base, derived, weighted_tag, t, n, seed, FAMILY_WEIGHTED,
        )
        reports = []
        for j, functional in enumerate(functionals):
            oracle = self.functional_oracle(functional, base, derived, direct_tag, t)
            name = getattr(functional, "name", f"f{j}")
            left = MCReport.from_samples(direct[:, j], Verdict.INFO, oracle, quantity=f"{name} direct {direct_tag.label()}")
            right = MCReport.from_samples(weighted[:, j], Verdict.INFO, oracle, quantity=f"{name} weighted {weighted_tag.label()}")
            difference = left.estimate - right.estimate
            pooled = math.hypot(left.stderr, right.stderr)
            verdict = Verdict.PASS if within(difference, pooled, SIGMA_LEVEL, left.estimate) else Verdict.FAIL
            reports.append(ReweightingReport(
                quantity=name, direct=left, weighted=right, difference=difference,
                pooled_stderr=pooled, oracle=oracle, verdict=verdict,
            ))
            logger.info(f"Reweighting {name} at t={t}: {left.estimate:.6g} vs {right.estimate:.6g} (pooled stderr {pooled:.3g}) -> {verdict.value}")
        return reports

    def check_reweighting(self, functional: PathFunctional, t: float, base, change, theta=None, n: int = 10_000, seed: int = 0, reverse: bool = False) -> ReweightingReport:
        return self.check_reweighting_battery((functional,), t, base, change, theta, n, seed, reverse)[0]

    # --- Martingale tests ---
    def default_events(self, base, derived, tag: MeasureTag, s: float, seed: int) -> Tuple[EventSpec, ...]:
        """{N_s <= 0, 1, 3}, {S_s <= median, 90th percentile} from a pilot run, theta below/above its median, everything."""
        events = [EventSpec.count_at_most(s, k) for k in (0, 1, 3)]
        pilot = self.simulation.evaluate_paths(StateAt((s,)), base, derived, tag, s, PILOT_PATHS, seed, FAMILY_PILOT)[:, 0]
        median, upper = np.quantile(pilot, [0.5, 0.9])
        events += [EventSpec.aggregate_at_most(s, float(median)), EventSpec.aggregate_at_most(s, float(upper))]
        mixing = side_of(base, derived, tag)[0]
        split = tag.theta if tag.is_conditional else float(mixing.quantile(0.5))
        events += [EventSpec.theta_in(0.0, split), EventSpec.theta_in(split), EventSpec.whole_space()]
        return tuple(events)

    def build_process(self, kind: ProcessKind, base: BaseRiskModel, change: Optional[MeasureChange], tag: MeasureTag, constant: float = 1.0):
        if kind is ProcessKind.V_CHANGE:
            return self.simulation.surplus_process(SurplusKind.V_CHANGE, base, change)
        if kind is ProcessKind.Y_BASE:
            return self.simulation.surplus_process(SurplusKind.Y_BASE, base)
        if kind is ProcessKind.RAW_AGGREGATE:
            return RawAggregate()
        if kind is ProcessKind.DENSITY:
            return DensityProcess(change, include_xi=not tag.is_conditional, rate_fn=base.rate_fn)
        return ConstantProcess(constant)

    def check_martingale(
        self,
        kind: ProcessKind,
        base: BaseRiskModel,
        change: Optional[MeasureChange],
        tag: MeasureTag,
        pairs: Sequence[Tuple[float, float]],
        events: Optional[Sequence[EventSpec]] = None,
        n: int = 10_000,
        seed: int = 0,
        expect: str = "martingale",
        constant: float = 1.0,
    ) -> MartingaleTable:
        """
        Estimates E[chi_A (Z_t - Z_s)] for every pair and event. With ``expect="martingale"``
        every cell should be 0 and the table passes when no cell exceeds the Bonferroni
        critical value at family level 0.01. With ``expect="drift"`` (raw aggregate) the
        whole-space cells should match the Wald drift (t - s) E[r(Theta)] E[X] and differ
        significantly from 0; other cells are informational.
        """
        self._require_paths(n)
        pairs = tuple((float(s), float(t)) for s, t in pairs)
        for s, t in pairs:
            if not 0 <= s < t:
                raise BadIntervalError(s, t)
        derived = None
        if change is not None and not change.is_identity() or tag.is_derived:
            derived = self.model_use_cases.derive_q_model(base, change or MeasureChange.identity())
        horizon = max(t for _, t in pairs)

        per_pair = []
        for s, _ in pairs:
            if events is None:
                per_pair.append(self.default_events(base, derived, tag, s, seed))
                continue
            for event in events:
                if event.kind in (EventKind.COUNT_AT_MOST, EventKind.AGGREGATE_AT_MOST) and event.s > s:
                    raise InvalidEventError(event.label(), s)
            per_pair.append(tuple(events))

        process = self.build_process(kind, base, change, tag, constant)
        battery = IncrementBattery(process, pairs, tuple(per_pair))
        samples = self.simulation.evaluate_paths(battery, base, derived, tag, horizon, n, seed, FAMILY_MARTINGALE)

        drift_rate = None
        if expect == "drift":
            mixing, claim_law, intensity = side_of(base, derived, tag)
            drift_rate = self._over_theta(tag, mixing, intensity) * claim_law.moment(1)

        critical = bonferroni_z(samples.shape[1])
        cells, column = [], 0
        for (s, t), pair_events in zip(pairs, per_pair):
            for event in pair_events:
                report = MCReport.from_samples(samples[:, column], Verdict.INFO)
                column += 1
                if drift_rate is not None and event.kind is not EventKind.WHOLE_SPACE:
                    z = z_score(report.estimate, report.stderr, report.estimate)
                    cells.append(MartingaleCell(s=s, t=t, event=event.label(), estimate=report.estimate, stderr=report.stderr, z=z, verdict=Verdict.INFO))
                    continue
                expected = (t - s) * drift_rate if drift_rate is not None else 0.0
                z = z_score(report.estimate - expected, report.stderr, expected)
                cells.append(MartingaleCell(
                    s=s, t=t, event=event.label(), estimate=report.estimate, stderr=report.stderr,
                    expected=expected, z=z, verdict=Verdict.PASS if abs(z) <= SIGMA_LEVEL else Verdict.FAIL,
                ))

        gating = [cell for cell in cells if cell.verdict is not Verdict.INFO]
        passed = all(abs(cell.z) <= critical for cell in gating)
        if drift_rate is not None:
            # the drift must also be visible against the martingale hypothesis
            passed = passed and all(abs(z_score(cell.estimate, cell.stderr, cell.estimate)) > critical for cell in gating)
        table = MartingaleTable(
            process=kind, measure=tag.label(), cells=cells, family_level=FAMILY_LEVEL,
            critical_z=critical, expect=expect, verdict=Verdict.PASS if passed else Verdict.FAIL,
        )
        logger.info(f"Martingale table {kind.value} under {tag.label()}: {len(cells)} cells, max |z| {table.max_abs_z:.3g}, critical {critical:.3g} -> {table.verdict.value}")
        return table

    def degeneracy_test(self, base: BaseRiskModel, change: MeasureChange, n: int, seed: int, s: float = 1.0, t: float = 2.0) -> DegeneracyReport:
        """
        Tests V = S_t - E_Q[S_t] (centered without theta) for the Q-martingale property
        on theta below/above its Q-median and the whole space. It is a martingale
        exactly when g(Theta) is degenerate; otherwise the cell for A has mean
        (t - s) E_Q[X] (E_Q[chi_A g(Theta)] - Q(A) E_Q[g(Theta)]).
        """
        self._require_paths(n)
        if not 0 <= s < t:
            raise BadIntervalError(s, t)
        derived = self.model_use_cases.derive_q_model(base, change)
        mixing, g = derived.q_mixing, derived.g
        mean_claim = derived.q_claim.moment(1)
        mean_g = mixing.expectation(g)
        spread = mixing.expectation(lambda th: (g(th) - mean_g) ** 2)
        degenerate = spread <= ROUNDOFF * max(1.0, mean_g * mean_g)

        split = float(mixing.quantile(0.5))
        events = (EventSpec.theta_in(0.0, split), EventSpec.theta_in(split), EventSpec.whole_space())
        oracles = []
        for event in events:
            if event.kind is EventKind.WHOLE_SPACE:
                oracles.append(0.0)
                continue
            mass = mixing.expectation(lambda th: 1.0, event.lo, event.hi)
            partial = mixing.expectation(g, event.lo, event.hi)
            oracles.append((t - s) * mean_claim * (partial - mass * mean_g))

        process = CenteredAggregate(drift=mean_g * mean_claim)
        battery = IncrementBattery(process, ((s, t),), (events,))
        samples = self.simulation.evaluate_paths(battery, base, derived, MeasureTag.derived_q(), t, n, seed, FAMILY_DEGENERACY)

        cells = []
        for j, event in enumerate(events):
            report = MCReport.from_samples(samples[:, j], Verdict.INFO)
            z = z_score(report.estimate, report.stderr, report.estimate)
            cells.append(MartingaleCell(
                s=s, t=t, event=event.label(), estimate=report.estimate, stderr=report.stderr,
                z=z, verdict=Verdict.PASS if abs(z) <= SIGMA_LEVEL else Verdict.FAIL,
            ))
        probes = cells[:2]
        strongest = max(probes, key=lambda cell: abs(cell.z))
        max_z = abs(strongest.z)

        if degenerate:
            verdict = Verdict.PASS if all(abs(cell.z) <= SIGMA_LEVEL for cell in cells) else Verdict.FAIL
        elif max_z >= DETECTION_SIGMA:
            consistent = all(
                within(cell.estimate - oracle, cell.stderr, WALD_SIGMA_LEVEL, oracle)
                for cell, oracle in zip(probes, oracles)
            )
            verdict = Verdict.PASS if consistent else Verdict.FAIL
        elif max_z > SIGMA_LEVEL:
            verdict = Verdict.INCONCLUSIVE
        else:
            verdict = Verdict.FAIL
        logger.info(f"Degeneracy test: degenerate={degenerate}, max |z| {max_z:.3g} on {strongest.event} -> {verdict.value}")
        return DegeneracyReport(
            degenerate=degenerate, cells=cells, oracles=oracles, max_abs_z=max_z,
            witness=None if degenerate else strongest.event, verdict=verdict,
        )

    def singularity_probe(
        self,
        base: BaseRiskModel,
        change: MeasureChange,
        theta: Optional[float] = None,
        horizons: Sequence[float] = (10.0, 50.0),
        n: int = 10_000,
        seed: int = 0,
    ) -> SingularityReport:
        """
        Distribution of log M_T (log of the conditional density when theta is fixed)
        under both sides for each horizon: per-unit-time drift against its quadrature
        oracle, quantiles and the mass beyond -5 / +5. The separation at each horizon is
        the sum P(log M_T < -5) + Q(log M_T > +5), which tends to 2 as the measures become
        mutually singular; the P term is reported on its own beside it. Separation must
        grow strictly with T.
        """
        self._require_paths(n)
        derived = self.model_use_cases.derive_q_model(base, change)
        horizons = tuple(sorted(float(T) for T in horizons))
        p_tag = MeasureTag.base_p() if theta is None else MeasureTag.conditional_p(theta)
        battery = LogDensityBattery(change, horizons, theta is None, base.rate_fn)

        rows = []
        for tag, family in ((p_tag, FAMILY_SINGULAR_P), (p_tag.counterpart(), FAMILY_SINGULAR_Q)):
            logs = self.simulation.evaluate_paths(battery, base, derived, tag, horizons[-1], n, seed, family)
            for j, T in enumerate(horizons):
                column = logs[:, j]
                report = MCReport.from_samples(column, Verdict.INFO)
                oracle = self.log_density_drift(base, derived, change, tag, T)
                drift, drift_stderr = report.estimate / T, report.stderr / T
                verdict = Verdict.PASS if within(drift - oracle, drift_stderr, SIGMA_LEVEL, oracle) else Verdict.FAIL
                q05, q50, q95 = np.quantile(column, [0.05, 0.5, 0.95])
                rows.append(SingularityRow(
                    horizon=T, measure=tag.label(), n=n, mean_log_density=report.estimate, stderr=report.stderr,
                    drift=drift, drift_stderr=drift_stderr, oracle_drift=oracle,
                    q05=float(q05), q50=float(q50), q95=float(q95),
                    fraction_below=float(np.mean(column < -LOG_DENSITY_BAND)),
                    fraction_above=float(np.mean(column > LOG_DENSITY_BAND)),
                    verdict=verdict,
                ))

        p_rows, q_rows = rows[: len(horizons)], rows[len(horizons):]
        separation = [p.fraction_below + q.fraction_above for p, q in zip(p_rows, q_rows)]
        grows = len(separation) > 1 and all(b > a for a, b in zip(separation, separation[1:]))
        passed = all(row.verdict is Verdict.PASS for row in rows) and (grows or change.is_identity())
        return SingularityReport(
            rows=rows,
            separation=separation,
            p_mass_below=[p.fraction_below for p in p_rows],
            separation_grows=grows,
            verdict=Verdict.PASS if passed else Verdict.FAIL,
        )

    def check_count_marginal(self, base: BaseRiskModel, derived: Optional[DerivedModel], tag: MeasureTag, t: float, n: int, seed: int) -> CountMarginalReport:
        """
        Chi-square test of simulated N_t against the mixed Poisson pmf (plain Poisson
        under a conditional tag). Bins hold at least five expected paths; the upper tail
        is pooled into the last bin.
        """
        self._require_paths(n)
        mixing, _, intensity = side_of(base, derived, tag)
        counts = self.simulation.evaluate_paths(FunctionalBattery((Count(),), t), base, derived, tag, t, n, seed, FAMILY_ESTIMATE)[:, 0]

        def pmf(k: int) -> float:
            if tag.is_conditional:
                return float(stats.poisson.pmf(k, t * intensity(tag.theta)))
            return mixed_count_pmf(base, t, k, mixing, intensity)

        top = int(counts.max())
        probabilities = np.array([pmf(k) for k in range(top + 1)])
        probabilities[-1] += max(1.0 - probabilities.sum(), 0.0)  # last cell is {N_t >= top}
        observed = np.bincount(counts.astype(int), minlength=top + 1)

        cells_expected, cells_observed = [], []
        pending_expected, pending_observed = 0.0, 0
        for e, o in zip(n * probabilities, observed):
            pending_expected += e
            pending_observed += int(o)
            if pending_expected >= 5:
                cells_expected.append(pending_expected)
                cells_observed.append(pending_observed)
                pending_expected, pending_observed = 0.0, 0
        if cells_expected:
            cells_expected[-1] += pending_expected
            cells_observed[-1] += pending_observed
        if len(cells_expected) < 2:
            return CountMarginalReport(t=t, n=n, bins=len(cells_expected), statistic=0.0, p_value=1.0, verdict=Verdict.PASS)
        expected = np.array(cells_expected)
        observed = np.array(cells_observed)
        statistic, p_value = stats.chisquare(observed, n * expected / expected.sum())
        verdict = marginal_verdict(p_value)
        logger.info(f"N_{t} marginal under {tag.label()}: chi2={statistic:.4g} on {observed.size - 1} dof, p={p_value:.3g} -> {verdict.value}")
        return CountMarginalReport(t=t, n=n, bins=int(observed.size), statistic=float(statistic), p_value=float(p_value), verdict=verdict)
