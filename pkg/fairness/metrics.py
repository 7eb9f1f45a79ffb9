"""
Per-group metrics of prediction sets and human responses, and between-group gaps

Responses are any objects with `group`, `correct` and `chosen_in_set`
attributes (see simulation.TrialResponse).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from errors import AuditError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupMetrics:
    group: int
    n: int
    coverage: float
    avg_size: float
    singleton_freq: float
    accuracy: Optional[float] = None
    adoption: Optional[float] = None
    top1_accuracy: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "group": self.group,
            "n": self.n,
            "coverage": self.coverage,
            "avg_size": self.avg_size,
            "singleton_freq": self.singleton_freq,
            "accuracy": self.accuracy,
            "adoption": self.adoption,
            "top1_accuracy": self.top1_accuracy,
        }


@dataclass
class FairnessReport:
    """
    Set-level gaps are always present; improvement fields are filled in when
    human responses for a treatment and a control arm are available.
    """
    per_group: List[GroupMetrics]
    delta_cov: float
    delta_size: float
    delta_singleton: float
    extremal_pair: Tuple[int, int]
    treatment: Optional[str] = None
    improvements: Optional[Dict[int, float]] = None
    delta_accuracy_improvement: Optional[float] = None
    improvement_pair: Optional[Tuple[int, int]] = None
    delta_top1: Optional[float] = None
    extra: Dict = field(default_factory=dict)

    def group(self, g: int) -> GroupMetrics:
        for metrics in self.per_group:
            if metrics.group == g:
                return metrics
        raise AuditError(f"report has no group {g}")

    def to_dict(self) -> Dict:
        return {
            "treatment": self.treatment,
            "per_group": [m.to_dict() for m in self.per_group],
            "delta_cov": self.delta_cov,
            "delta_size": self.delta_size,
            "delta_singleton": self.delta_singleton,
            "extremal_pair": list(self.extremal_pair),
            "improvements": (
                {str(g): v for g, v in sorted(self.improvements.items())}
                if self.improvements is not None else None
            ),
            "delta_accuracy_improvement": self.delta_accuracy_improvement,
            "improvement_pair": list(self.improvement_pair) if self.improvement_pair else None,
            "delta_top1": self.delta_top1,
            **self.extra,
        }


def spread(values: Mapping[Hashable, float]) -> Tuple[float, Tuple[Hashable, Hashable]]:
    """
    max - min of the values and the (max, min) pair.

    The max side is the lowest key attaining the maximum; the min side is the
    lowest other key attaining the minimum.
    """
    if len(values) < 2:
        raise AuditError(f"need at least two groups, got {len(values)}")
    keys = sorted(values)
    top = max(values[k] for k in keys)
    hi = next(k for k in keys if values[k] == top)
    rest = [k for k in keys if k != hi]
    bottom = min(values[k] for k in rest)
    lo = next(k for k in rest if values[k] == bottom)
    return float(top - bottom), (hi, lo)


def audit_sets(sets: Sequence, n_g: int) -> FairnessReport:
    """Per-group coverage, average size and singleton frequency with their gaps"""
    groups = np.array([s.group for s in sets], dtype=np.int64)
    if len(groups) and (groups.min() < 0 or groups.max() >= n_g):
        raise AuditError(f"set groups must lie in [0, {n_g})")
    sizes = np.array([s.size for s in sets], dtype=np.float64)
    covered = np.array([s.covered for s in sets], dtype=bool)

    per_group = []
    for g in range(n_g):
        mask = groups == g
        n = int(mask.sum())
        if n == 0:
            raise AuditError(f"group {g} has no prediction sets")
        per_group.append(GroupMetrics(
            group=g,
            n=n,
            coverage=float(covered[mask].mean()),
            avg_size=float(sizes[mask].mean()),
            singleton_freq=float(np.mean(sizes[mask] == 1)),
        ))

    return _report_from_groups(per_group)


def _report_from_groups(per_group: List[GroupMetrics], treatment: Optional[str] = None) -> FairnessReport:
    delta_cov, pair = spread({m.group: m.coverage for m in per_group})
    delta_size, _ = spread({m.group: m.avg_size for m in per_group})
    delta_singleton, _ = spread({m.group: m.singleton_freq for m in per_group})
    return FairnessReport(
        per_group=per_group,
        delta_cov=delta_cov,
        delta_size=delta_size,
        delta_singleton=delta_singleton,
        extremal_pair=pair,
        treatment=treatment,
    )


def group_accuracy(responses: Sequence, n_g: int) -> Dict[int, float]:
    """Mean correctness per group; every group must have responses"""
    totals = np.zeros(n_g)
    counts = np.zeros(n_g, dtype=np.int64)
    for r in responses:
        if not 0 <= r.group < n_g:
            raise AuditError(f"response group {r.group} outside [0, {n_g})")
        totals[r.group] += bool(r.correct)
        counts[r.group] += 1
    missing = [g for g in range(n_g) if counts[g] == 0]
    if missing:
        raise AuditError(f"no responses for groups {missing}")
    return {g: float(totals[g] / counts[g]) for g in range(n_g)}


def group_adoption(responses: Sequence, n_g: int) -> Dict[int, Optional[float]]:
    """Fraction of answers chosen from the shown set, per group; None without set answers"""
    chosen = np.zeros(n_g)
    counts = np.zeros(n_g, dtype=np.int64)
    for r in responses:
        if r.chosen_in_set is None:
            continue
        chosen[r.group] += bool(r.chosen_in_set)
        counts[r.group] += 1
    return {g: (float(chosen[g] / counts[g]) if counts[g] else None) for g in range(n_g)}


def accuracy_improvements(treated: Sequence, control: Sequence, n_g: int) -> Dict[int, float]:
    """Per-group accuracy change of the treated arm over the control arm"""
    if not treated or not control:
        raise AuditError("both the treated and the control arm need responses")
    treated_acc = group_accuracy(treated, n_g)
    control_acc = group_accuracy(control, n_g)
    return {g: treated_acc[g] - control_acc[g] for g in range(n_g)}


def disparate_impact(improvements: Mapping[Hashable, float]) -> Tuple[float, Tuple[Hashable, Hashable]]:
    """
    Largest pairwise gap in accuracy improvement and its (most, least improved) pair
    """
    return spread(improvements)
