"""
Design matrices for the treatment x group logistic model

logit P(correct) ~ treat * group + diff, dummy coded against the reference
treatment and the reference group. Columns, in order: intercept, treatment
dummies, group dummies, every treatment x group product, then diff.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DesignError
from simulation import Treatment

logger = logging.getLogger(__name__)

INTERCEPT = "intercept"
DIFF = "diff"


def treatment_term(treatment: str) -> str:
    return f"treat[{treatment}]"


def group_term(group: int) -> str:
    return f"group[{group}]"


def interaction_term(treatment: str, group: int) -> str:
    return f"{treatment_term(treatment)}:{group_term(group)}"


@dataclass(frozen=True)
class DesignSpec:
    reference_treatment: str = Treatment.CONTROL.value
    reference_group: int = 0
    include_diff: bool = True

    def __post_init__(self):
        if isinstance(self.reference_treatment, Treatment):
            object.__setattr__(self, "reference_treatment", self.reference_treatment.value)

    def to_dict(self) -> Dict:
        return {
            "reference_treatment": self.reference_treatment,
            "reference_group": self.reference_group,
            "include_diff": self.include_diff,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'DesignSpec':
        defaults = cls()
        return cls(
            reference_treatment=str(data.get("reference_treatment", defaults.reference_treatment)),
            reference_group=int(data.get("reference_group", defaults.reference_group)),
            include_diff=bool(data.get("include_diff", defaults.include_diff)),
        )


@dataclass
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    clusters: np.ndarray
    terms: List[str]
    treatments: List[str]
    groups: List[int]
    spec: DesignSpec

    @property
    def shape(self) -> Tuple[int, int]:
        return self.X.shape

    def row_for(self, treatment: str, group: int, diff: float = 0.0) -> np.ndarray:
        """Design row of a single (treatment, group, diff) cell"""
        return design_row(self.terms, self.spec, treatment, group, diff)


def _levels(responses: Sequence, spec: DesignSpec) -> Tuple[List[str], List[int]]:
    present = {r.treatment.value if isinstance(r.treatment, Treatment) else str(r.treatment) for r in responses}
    order = [t.value for t in Treatment]
    treatments = sorted(present, key=lambda t: (order.index(t) if t in order else len(order), t))
    groups = sorted({int(r.group) for r in responses})

    if len(treatments) < 2:
        raise DesignError(f"need at least two treatments, got {treatments}")
    if len(groups) < 2:
        raise DesignError(f"need at least two groups, got {groups}")
    if spec.reference_treatment not in treatments:
        raise DesignError("reference treatment absent from the responses", term=spec.reference_treatment)
    if spec.reference_group not in groups:
        raise DesignError("reference group absent from the responses", term=group_term(spec.reference_group))

    # reference levels first
    treatments.remove(spec.reference_treatment)
    groups.remove(spec.reference_group)
    return [spec.reference_treatment] + treatments, [spec.reference_group] + groups


def design_terms(treatments: Sequence[str], groups: Sequence[int], include_diff: bool) -> List[str]:
    """Term names for levels listed reference first"""
    terms = [INTERCEPT]
    terms += [treatment_term(t) for t in treatments[1:]]
    terms += [group_term(g) for g in groups[1:]]
    terms += [interaction_term(t, g) for t in treatments[1:] for g in groups[1:]]
    if include_diff:
        terms.append(DIFF)
    return terms


def design_row(terms: Sequence[str], spec: DesignSpec, treatment: str, group: int, diff: float = 0.0) -> np.ndarray:
    row = np.zeros(len(terms))
    index = {term: i for i, term in enumerate(terms)}
    row[index[INTERCEPT]] = 1.0
    if treatment != spec.reference_treatment:
        row[index[treatment_term(treatment)]] = 1.0
    if group != spec.reference_group:
        row[index[group_term(group)]] = 1.0
    if treatment != spec.reference_treatment and group != spec.reference_group:
        row[index[interaction_term(treatment, group)]] = 1.0
    if DIFF in index:
        row[index[DIFF]] = diff
    return row


def term_levels(terms: Sequence[str]) -> Tuple[List[str], List[int]]:
    """Non-reference treatment and group levels named by a term list"""
    treatments = [t[len("treat["):-1] for t in terms if t.startswith("treat[") and ":" not in t]
    groups = [int(t[len("group["):-1]) for t in terms if t.startswith("group[")]
    return treatments, groups


def build_design(responses: Sequence, spec: Optional[DesignSpec] = None) -> DesignMatrix:
    """Dummy-coded design with participant clusters; constant columns are rejected"""
    spec = spec or DesignSpec()
    if not responses:
        raise DesignError("no responses")
    treatments, groups = _levels(responses, spec)
    terms = design_terms(treatments, groups, spec.include_diff)

    treat = np.array([r.treatment.value if isinstance(r.treatment, Treatment) else str(r.treatment)
                      for r in responses])
    group = np.array([int(r.group) for r in responses])
    columns = [np.ones(len(responses))]
    columns += [(treat == t).astype(np.float64) for t in treatments[1:]]
    columns += [(group == g).astype(np.float64) for g in groups[1:]]
    columns += [((treat == t) & (group == g)).astype(np.float64) for t in treatments[1:] for g in groups[1:]]
    if spec.include_diff:
        columns.append(np.array([float(r.diff) for r in responses]))
    X = np.column_stack(columns)

    for j, term in enumerate(terms[1:], start=1):
        if np.ptp(X[:, j]) == 0:
            raise DesignError("constant design column", term=term)

    y = np.array([1.0 if r.correct else 0.0 for r in responses])
    clusters = np.array([int(r.participant_id) for r in responses])
    logger.debug("design: %d rows x %d terms, %d clusters", X.shape[0], X.shape[1], len(np.unique(clusters)))
    return DesignMatrix(X=X, y=y, clusters=clusters, terms=terms,
                        treatments=treatments, groups=groups, spec=spec)
