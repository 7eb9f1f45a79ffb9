"""
Binary search for the avg-k budget k that reaches a target calval coverage
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from conformal import Method, SetPredictor, avgk_threshold, membership_matrix
from data import LabeledDataset
from errors import TuningError

logger = logging.getLogger(__name__)

K_PRECISION = 1e-5
MONOTONE_CHECKS = 5


@dataclass
class AvgKSearchResult:
    k: float
    q_k: float
    coverage: float
    target_coverage: float
    history: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "q_k": "-inf" if math.isinf(self.q_k) else self.q_k,
            "coverage": self.coverage,
            "target_coverage": self.target_coverage,
            "history": [[k, c] for k, c in self.history],
        }


class _CoverageCurve:
    """Calval coverage of the avg-k rule calibrated on cal, as a function of k"""

    def __init__(self, cal: LabeledDataset, calval: LabeledDataset, force_nonempty: bool):
        self.m = cal.m
        self.n_g = max(cal.n_g, calval.n_g)
        self.n_cal = len(cal)
        self.flat = np.sort(cal.probs_matrix().ravel())
        self.calval = calval
        self.force_nonempty = force_nonempty

    def threshold(self, k: float) -> float:
        return avgk_threshold(self.flat, k, self.m)

    def coverage(self, k: float) -> float:
        pred = SetPredictor(method=Method.AVGK, m=self.m, n_g=self.n_g, n_cal=self.n_cal,
                            k=float(k), q_k=self.threshold(k), force_nonempty=self.force_nonempty)
        members = membership_matrix(self.calval.probs_matrix(), self.calval.groups(),
                                    self.calval.example_ids(), pred)
        return float(np.mean(members[np.arange(len(self.calval)), self.calval.labels()]))


def search_avgk(
    cal: LabeledDataset,
    calval: LabeledDataset,
    target_coverage: float,
    precision: float = K_PRECISION,
    force_nonempty: bool = False,
) -> AvgKSearchResult:
    """
    Smallest k in (0, m], to `precision`, whose calval coverage reaches the target.

    Coverage is assumed non-decreasing in k; the assumption is checked at a few
    k values first and a violation aborts the search.
    """
    if len(cal) == 0 or len(calval) == 0:
        raise TuningError("cal and calval splits must be nonempty")
    if cal.m != calval.m:
        raise TuningError(f"cal has m={cal.m}, calval has m={calval.m}")

    curve = _CoverageCurve(cal, calval, force_nonempty)
    m = cal.m

    best = curve.coverage(m)
    if best < target_coverage:
        raise TuningError(
            f"target coverage {target_coverage:.4f} unreachable: coverage at k=m={m} is {best:.4f}"
        )

    check_ks = [m * (i + 1) / MONOTONE_CHECKS for i in range(MONOTONE_CHECKS)]
    checks = [(k, curve.coverage(k)) for k in check_ks]
    for (_, c1), (_, c2) in zip(checks, checks[1:]):
        if c2 < c1:
            raise TuningError(f"coverage is not monotone in k: {checks}")

    history: List[Tuple[float, float]] = []
    lo, hi = 0.0, float(m)
    hi_coverage = best
    while hi - lo > precision:
        mid = (lo + hi) / 2.0
        coverage = curve.coverage(mid)
        history.append((mid, coverage))
        if coverage >= target_coverage:
            hi, hi_coverage = mid, coverage
        else:
            lo = mid

    logger.info("avg-k search: k=%.5f coverage=%.4f after %d steps", hi, hi_coverage, len(history))
    return AvgKSearchResult(k=hi, q_k=curve.threshold(hi), coverage=hi_coverage,
                            target_coverage=target_coverage, history=history)


def tune_avgk(
    cal: LabeledDataset,
    calval: LabeledDataset,
    target_coverage: float,
    force_nonempty: bool = False,
) -> float:
    return search_avgk(cal, calval, target_coverage, force_nonempty=force_nonempty).k
