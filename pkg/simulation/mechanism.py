"""
Mechanism benchmark: equalizing coverage versus equalizing set size

On a synthetic task whose groups differ in difficulty, marginal, Mondrian and
avg-k predictors are calibrated, audited and shown to simulated participants.
The report carries the set-level gaps, the disparate impact per treatment and
a list of mechanism checks. Each check reads a context dict and passes or
fails; failures are logged, never raised.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from conformal import (
    DEFAULT_MIN_GROUP_N,
    ScoreConfig,
    ScoreKind,
    calibrate_avgk,
    calibrate_marginal,
    calibrate_mondrian,
    predict_batch,
)
from data import LabeledDataset, SplitSpec, StratifyBy, split
from errors import SimulationError
from fairness import (
    FairnessReport,
    KeyFactorTable,
    build_treatment_report,
    disparate_impact,
    key_factor_table,
)
from tuning import tune_avgk
from .human_model import (
    HumanModel,
    Treatment,
    TrialResponse,
    expected_group_accuracy,
    expected_group_adoption,
    simulate_responses,
)
from .synthetic_task import SyntheticTaskSpec, calibrated_concentration, generate_task

logger = logging.getLogger(__name__)

BENCHMARK_SPLIT = (0.1, 0.45, 0.45)
COVERAGE_EQUALIZED_TOLERANCE = 0.02
DEFAULT_PARTICIPANTS = 400
DEFAULT_TRIALS = 40
SWEEP_MIN_GAP = 0.15
SWEEP_SKILL = 0.3
SWEEP_RELIANCE = 0.9

# treatment shown to participants -> calibration method
TREATMENT_METHODS = {
    Treatment.AVGK: "avgk",
    Treatment.MARGINAL: "marginal",
    Treatment.CONDITIONAL: "mondrian",
}


@dataclass(frozen=True)
class MechanismCheck:
    name: str
    description: str
    predicate: Callable[[Dict], bool]

    def evaluate(self, context: Dict) -> bool:
        passed = bool(self.predicate(context))
        if not passed:
            logger.warning("mechanism check failed: %s (%s)", self.name, self.description)
        return passed


MECHANISM_CHECKS = [
    MechanismCheck(
        "mondrian_coverage_equalized",
        f"Delta coverage of Mondrian sets <= {COVERAGE_EQUALIZED_TOLERANCE}",
        lambda c: c["delta_cov"]["conditional"] <= COVERAGE_EQUALIZED_TOLERANCE,
    ),
    MechanismCheck(
        "marginal_coverage_gap_larger",
        "Delta coverage of marginal sets exceeds that of Mondrian sets",
        lambda c: c["delta_cov"]["marginal"] > c["delta_cov"]["conditional"],
    ),
    MechanismCheck(
        "mondrian_size_gap_larger",
        "Delta size of Mondrian sets exceeds that of marginal sets",
        lambda c: c["delta_size"]["conditional"] > c["delta_size"]["marginal"],
    ),
    MechanismCheck(
        "mondrian_disparate_impact_larger",
        "expected disparate impact of Mondrian sets exceeds that of marginal sets",
        lambda c: c["expected_delta_t"]["conditional"] > c["expected_delta_t"]["marginal"],
    ),
]


@dataclass
class MechanismReport:
    task: SyntheticTaskSpec
    human_model: HumanModel
    alpha: float
    avgk_k: float
    reports: Dict[str, FairnessReport]
    expected_delta_t: Dict[str, float]
    flags: Dict[str, bool]
    key_factors: KeyFactorTable
    n_responses: int = 0
    responses: List[TrialResponse] = field(default_factory=list, repr=False)
    dataset: Optional[LabeledDataset] = field(default=None, repr=False)

    @property
    def all_passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> Dict:
        return {
            "task": self.task.to_dict(),
            "human_model": self.human_model.to_dict(),
            "alpha": self.alpha,
            "avgk_k": self.avgk_k,
            "methods": {t.value: method for t, method in TREATMENT_METHODS.items()},
            "delta_cov": {t: r.delta_cov for t, r in self.reports.items()},
            "delta_size": {t: r.delta_size for t, r in self.reports.items()},
            "delta_t": {t: r.delta_accuracy_improvement for t, r in self.reports.items()},
            "expected_delta_t": dict(self.expected_delta_t),
            "flags": dict(self.flags),
            "n_responses": self.n_responses,
            "reports": {t: r.to_dict() for t, r in self.reports.items()},
            "key_factors": self.key_factors.to_dict(),
        }


@dataclass
class SweepReport:
    configs: List[Tuple[SyntheticTaskSpec, HumanModel]]
    alpha: float
    key_factors: KeyFactorTable
    flags: Dict[str, Optional[bool]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "alpha": self.alpha,
            "configs": [{"task": t.to_dict(), "human_model": h.to_dict()} for t, h in self.configs],
            "flags": dict(self.flags),
            "key_factors": self.key_factors.to_dict(),
        }


def treatment_sets(
    spec: SyntheticTaskSpec,
    alpha: float,
    score_cfg: Optional[ScoreConfig] = None,
    min_group_n: int = DEFAULT_MIN_GROUP_N,
    jobs: int = 1,
) -> Tuple[LabeledDataset, Dict[Treatment, List], float]:
    """
    Generate the task, split it (calval, cal, test) stratified by group and
    predict test sets for every aided treatment. Returns the test split, the
    sets per treatment and the tuned avg-k budget.
    """
    if spec.n_g < 2:
        raise SimulationError(f"the benchmark needs at least two groups, got {spec.n_g}")
    cfg = score_cfg or ScoreConfig(kind=ScoreKind.LAC)
    ds = generate_task(spec)
    calval, cal, test = split(ds, SplitSpec(BENCHMARK_SPLIT, StratifyBy.GROUP, spec.seed))

    k = tune_avgk(cal, calval, 1.0 - alpha)
    predictors = {
        Treatment.MARGINAL: calibrate_marginal(cal, cfg, alpha, seed=spec.seed),
        Treatment.CONDITIONAL: calibrate_mondrian(cal, cfg, alpha, min_group_n=min_group_n, seed=spec.seed),
        Treatment.AVGK: calibrate_avgk(cal, k, seed=spec.seed),
    }
    sets = {t: predict_batch(test, pred, jobs=jobs) for t, pred in predictors.items()}
    return test, sets, k


def expected_treatment_report(
    sets: Sequence,
    ds: LabeledDataset,
    hm: HumanModel,
    treatment: str,
) -> FairnessReport:
    """Treatment report whose accuracy, adoption and improvements are closed-form expectations"""
    report = build_treatment_report(sets, ds.n_g, treatment=treatment, ds=ds)
    accuracy = expected_group_accuracy(sets, hm, ds.n_g)
    adoption = expected_group_adoption(sets, hm, ds.n_g, ds.m)
    report.per_group = [replace(g, accuracy=accuracy[g.group], adoption=adoption[g.group])
                        for g in report.per_group]
    report.improvements = {g: accuracy[g] - hm.skill_for(g) for g in range(ds.n_g)}
    report.delta_accuracy_improvement, report.improvement_pair = disparate_impact(report.improvements)
    return report


def run_mechanism_benchmark(
    spec: SyntheticTaskSpec,
    hm: HumanModel,
    alpha: float = 0.1,
    score_cfg: Optional[ScoreConfig] = None,
    participants: int = DEFAULT_PARTICIPANTS,
    trials_per_participant: int = DEFAULT_TRIALS,
    simulate: bool = True,
    min_group_n: int = DEFAULT_MIN_GROUP_N,
    jobs: int = 1,
) -> MechanismReport:
    """
    With `simulate`, per-treatment reports come from simulated responses and
    the expected improvements are attached under `expected_improvements`;
    without it the reports carry the closed-form expectations only. The
    disparate-impact check always uses the expectations.
    """
    if len(hm.skill) != spec.n_g:
        raise SimulationError(f"human model has {len(hm.skill)} skills for {spec.n_g} groups")

    test, sets, k = treatment_sets(spec, alpha, score_cfg, min_group_n, jobs)
    expected = {t.value: expected_treatment_report(s, test, hm, t.value) for t, s in sets.items()}

    responses: List[TrialResponse] = []
    if simulate:
        arms: Dict[Treatment, Optional[List]] = {Treatment.CONTROL: None, **sets}
        responses = simulate_responses(arms, test, hm, participants, trials_per_participant)
        control = [r for r in responses if r.treatment == Treatment.CONTROL]
        reports = {}
        for t, s in sets.items():
            treated = [r for r in responses if r.treatment == t]
            report = build_treatment_report(s, test.n_g, treatment=t.value,
                                            responses=treated, control=control, ds=test)
            report.extra["expected_improvements"] = {
                str(g): v for g, v in sorted(expected[t.value].improvements.items())
            }
            reports[t.value] = report
    else:
        reports = expected

    expected_delta_t = {tag: r.delta_accuracy_improvement for tag, r in expected.items()}
    context = {
        "delta_cov": {tag: r.delta_cov for tag, r in reports.items()},
        "delta_size": {tag: r.delta_size for tag, r in reports.items()},
        "expected_delta_t": expected_delta_t,
    }
    flags = {check.name: check.evaluate(context) for check in MECHANISM_CHECKS}

    table = key_factor_table([(tag, reports[tag]) for tag in sorted(reports)])
    logger.info("mechanism benchmark seed=%d: flags=%s", spec.seed, flags)
    return MechanismReport(
        task=spec, human_model=hm, alpha=alpha, avgk_k=k, reports=reports,
        expected_delta_t=expected_delta_t, flags=flags, key_factors=table,
        n_responses=len(responses), responses=responses, dataset=test,
    )


def default_sweep_configs(n_configs: int = 20, seed: int = 0, n: int = 6000) -> List[Tuple[SyntheticTaskSpec, HumanModel]]:
    """
    Task and participant configurations spread over the accuracy gap between
    groups. Confidence tracks accuracy in each group, so global thresholds
    yield group size gaps as well; participants are identical across groups
    and configurations. The easy group stays below the default target
    coverage so that no group is covered by top-1 sets alone.
    """
    rng = np.random.default_rng([seed, 3])
    configs = []
    for i in range(n_configs):
        easy = round(float(rng.uniform(0.7, 0.85)), 4)
        hard = round(float(rng.uniform(0.42, easy - SWEEP_MIN_GAP)), 4)
        spec = SyntheticTaskSpec(
            group_accuracy=(easy, hard),
            group_concentration=calibrated_concentration((easy, hard)),
            n=n, seed=seed * 1000 + i,
        )
        hm = HumanModel(skill=(SWEEP_SKILL, SWEEP_SKILL), reliance=SWEEP_RELIANCE, seed=seed * 1000 + i)
        configs.append((spec, hm))
    return configs


def run_mechanism_sweep(
    configs: Sequence[Tuple[SyntheticTaskSpec, HumanModel]],
    alpha: float = 0.1,
    score_cfg: Optional[ScoreConfig] = None,
    min_group_n: int = DEFAULT_MIN_GROUP_N,
    jobs: int = 1,
) -> SweepReport:
    """
    Key-factor table over every (configuration, treatment) pair, built from
    expected reports. The size-over-coverage flag compares the magnitudes of
    the Spearman correlations of the size and coverage differences with the
    disparate impact; differences are signed (most minus least improved).
    """
    if not configs:
        raise SimulationError("the sweep needs at least one configuration")
    rows = []
    for i, (spec, hm) in enumerate(configs):
        test, sets, _ = treatment_sets(spec, alpha, score_cfg, min_group_n, jobs)
        for t, s in sets.items():
            tag = f"cfg{i:02d}-{t.value}"
            rows.append((tag, expected_treatment_report(s, test, hm, tag)))

    table = key_factor_table(rows)
    size_rho, cov_rho = table.spearman["size_diff"], table.spearman["cov_diff"]
    flags: Dict[str, Optional[bool]] = {
        "size_correlates_more_than_coverage": (
            None if size_rho is None or cov_rho is None else abs(size_rho) > abs(cov_rho)
        ),
    }
    logger.info("mechanism sweep over %d configs: spearman=%s", len(configs), table.spearman)
    return SweepReport(configs=list(configs), alpha=alpha, key_factors=table, flags=flags)
