"""
Treatment reports joining prediction sets with human responses, and their text rendering
"""

import logging
from typing import List, Optional, Sequence

from data import LabeledDataset
from errors import AuditError
from .metrics import (
    FairnessReport,
    GroupMetrics,
    accuracy_improvements,
    audit_sets,
    disparate_impact,
    group_accuracy,
    group_adoption,
    spread,
)

logger = logging.getLogger(__name__)


def build_treatment_report(
    sets: Sequence,
    n_g: int,
    treatment: Optional[str] = None,
    responses: Optional[Sequence] = None,
    control: Optional[Sequence] = None,
    ds: Optional[LabeledDataset] = None,
) -> FairnessReport:
    """
    Full report for one treatment: set-level metrics, plus human accuracy and
    adoption when responses are given, plus improvements over control and the
    disparate impact when control responses are given too. With `ds` the
    model's own top-1 accuracy per group and its gap are included.
    """
    report = audit_sets(sets, n_g)
    report.treatment = treatment

    accuracy = group_accuracy(responses, n_g) if responses else {}
    adoption = group_adoption(responses, n_g) if responses else {}
    top1 = {g: ds.top1_accuracy(g) for g in range(n_g)} if ds is not None else {}

    report.per_group = [
        GroupMetrics(
            group=m.group,
            n=m.n,
            coverage=m.coverage,
            avg_size=m.avg_size,
            singleton_freq=m.singleton_freq,
            accuracy=accuracy.get(m.group),
            adoption=adoption.get(m.group),
            top1_accuracy=top1.get(m.group),
        )
        for m in report.per_group
    ]

    if top1:
        report.delta_top1, _ = spread(top1)

    if control is not None:
        if not responses:
            raise AuditError(f"treatment {treatment!r} has control responses but no treated responses")
        report.improvements = accuracy_improvements(responses, control, n_g)
        report.delta_accuracy_improvement, report.improvement_pair = disparate_impact(report.improvements)
        logger.info("treatment %s: disparate impact %.4f between groups %s",
                    treatment, report.delta_accuracy_improvement, report.improvement_pair)
    return report


def _fmt(value: Optional[float], pattern: str = "{:.4f}") -> str:
    return "-" if value is None else pattern.format(value)


def format_report(report: FairnessReport, group_names: Optional[Sequence[str]] = None) -> str:
    """Human-readable summary table"""
    def name(g: int) -> str:
        return group_names[g] if group_names is not None else str(g)

    lines: List[str] = []
    lines.append("=" * 60)
    title = "Fairness report" if report.treatment is None else f"Fairness report: {report.treatment}"
    lines.append(title)
    lines.append("=" * 60)

    header = f"{'group':<12}{'n':>7}{'cov':>9}{'size':>8}{'single':>9}{'acc':>8}{'adopt':>8}{'delta':>9}"
    lines.append(header)
    lines.append("-" * 60)
    for m in report.per_group:
        improvement = report.improvements.get(m.group) if report.improvements else None
        lines.append(
            f"{name(m.group):<12}{m.n:>7}{m.coverage:>9.4f}{m.avg_size:>8.3f}{m.singleton_freq:>9.4f}"
            f"{_fmt(m.accuracy):>8}{_fmt(m.adoption):>8}{_fmt(improvement, '{:+.4f}'):>9}"
        )

    lines.append("-" * 60)
    hi, lo = report.extremal_pair
    lines.append(f"Delta coverage:  {report.delta_cov:.4f}  ({name(hi)} vs {name(lo)})")
    lines.append(f"Delta size:      {report.delta_size:.4f}")
    lines.append(f"Delta singleton: {report.delta_singleton:.4f}")
    if report.delta_top1 is not None:
        lines.append(f"Delta top-1:     {report.delta_top1:.4f}")
    if report.delta_accuracy_improvement is not None:
        most, least = report.improvement_pair
        lines.append(
            f"Disparate impact: {report.delta_accuracy_improvement:.4f}  "
            f"(most improved {name(most)}, least improved {name(least)})"
        )
    lines.append("=" * 60)
    return "\n".join(lines)
