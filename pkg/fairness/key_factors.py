"""
Key-factor table: for each treatment, coverage / adoption / size / singleton
differences between its most- and least-improved groups, and the Spearman
correlation of each factor with the disparate impact across treatments.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from errors import AuditError
from .metrics import FairnessReport, disparate_impact

logger = logging.getLogger(__name__)

FACTOR_COLUMNS = ["cov_diff", "adoption_diff", "size_diff", "singleton_diff"]
TABLE_COLUMNS = ["treatment", "delta_t", "most_improved", "least_improved"] + FACTOR_COLUMNS


@dataclass
class KeyFactorTable:
    rows: pd.DataFrame
    spearman: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "rows": self.rows.astype(object).where(self.rows.notna(), None).to_dict(orient="records"),
            "spearman": dict(self.spearman),
        }

    def to_csv(self, path: str):
        self.rows.to_csv(path, index=False, encoding='utf-8', lineterminator='\n')


def _rank_correlation(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    """Spearman rho, or None when undefined (constant column or fewer than 2 points)"""
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    rho = spearmanr(x, y)[0]
    if rho is None or np.isnan(rho):
        return None
    return float(rho)


def factor_differences(report: FairnessReport) -> Tuple[float, Tuple[int, int], Dict[str, float]]:
    """Disparate impact, its (most, least improved) pair and the factor gaps on that pair"""
    if report.improvements is None:
        raise AuditError(f"report for treatment {report.treatment!r} has no accuracy improvements")
    delta_t, (most, least) = disparate_impact(report.improvements)
    best, worst = report.group(most), report.group(least)

    def diff(a, b):
        return float("nan") if a is None or b is None else float(a - b)

    return delta_t, (most, least), {
        "cov_diff": diff(best.coverage, worst.coverage),
        "adoption_diff": diff(best.adoption, worst.adoption),
        "size_diff": diff(best.avg_size, worst.avg_size),
        "singleton_diff": diff(best.singleton_freq, worst.singleton_freq),
    }


def key_factor_table(reports: Sequence[Tuple[str, FairnessReport]]) -> KeyFactorTable:
    rows: List[Dict] = []
    for tag, report in reports:
        delta_t, (most, least), diffs = factor_differences(report)
        rows.append({"treatment": tag, "delta_t": delta_t,
                     "most_improved": most, "least_improved": least, **diffs})

    frame = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    delta = frame["delta_t"].to_numpy(dtype=np.float64)
    spearman = {
        column: _rank_correlation(frame[column].to_numpy(dtype=np.float64), delta)
        for column in FACTOR_COLUMNS
    }
    undefined = [c for c, v in spearman.items() if v is None]
    if undefined and len(frame) >= 2:
        logger.warning("Spearman correlation undefined for %s", undefined)
    return KeyFactorTable(rows=frame, spearman=spearman)
