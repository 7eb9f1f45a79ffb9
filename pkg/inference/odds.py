"""
Odds ratios of each treatment against the reference treatment, per group,
and the maximum ratio of odds ratios within a treatment
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Hashable, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit
from scipy.stats import norm

from errors import DesignError, FitError
from fairness import spread
from .design import DesignSpec, design_row, interaction_term, term_levels, treatment_term
from .logistic import FitResult

logger = logging.getLogger(__name__)

CI_LEVEL = 0.95
SIGNIFICANCE_LEVELS = (0.05, 0.10)


@dataclass(frozen=True)
class OddsRatio:
    treatment: str
    group: int
    odds_ratio: float
    log_or: float
    se: float
    ci_low: float
    ci_high: float
    z: Optional[float]
    p_value: float
    p_treated: float
    p_reference: float

    @property
    def significant_5(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVELS[0]

    @property
    def significant_10(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVELS[1]

    @property
    def stars(self) -> str:
        return "**" if self.significant_5 else ("*" if self.significant_10 else "")

    def to_dict(self) -> Dict:
        return {
            "treatment": self.treatment,
            "group": self.group,
            "odds_ratio": self.odds_ratio,
            "log_or": self.log_or,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "z": self.z,
            "p_value": self.p_value,
            "significant_5": self.significant_5,
            "significant_10": self.significant_10,
            "p_treated": self.p_treated,
            "p_reference": self.p_reference,
        }


def model_probability(fit: FitResult, spec: DesignSpec, treatment: str, group: int, diff: float = 0.0) -> float:
    """p_{t,a}: inverse logit of the linear predictor at the given cell and diff"""
    row = design_row(fit.terms, spec, treatment, group, diff)
    return float(expit(row @ fit.beta))


def _contrast(fit: FitResult, spec: DesignSpec, treatment: str, group: int) -> np.ndarray:
    c = np.zeros(len(fit.terms))
    c[fit.index(treatment_term(treatment))] = 1.0
    if group != spec.reference_group:
        c[fit.index(interaction_term(treatment, group))] = 1.0
    return c


def odds_ratios(
    fit: FitResult,
    spec: Optional[DesignSpec] = None,
    at_diff: float = 0.0,
) -> Dict[Tuple[str, int], OddsRatio]:
    """
    OR_{t,a} = exp(beta_t + beta_{t x a}) with a delta-method confidence
    interval and a two-sided Wald test on the log scale. diff enters the
    model additively, so at_diff only moves the reported cell probabilities.
    """
    spec = spec or DesignSpec()
    if not fit.converged:
        raise FitError("odds ratios need a converged fit")
    treatments, groups = term_levels(fit.terms)
    treatments = [spec.reference_treatment] + treatments
    groups = [spec.reference_group] + groups
    z_crit = norm.ppf(0.5 + CI_LEVEL / 2.0)

    out: Dict[Tuple[str, int], OddsRatio] = {}
    for t in treatments:
        for g in groups:
            p_t = model_probability(fit, spec, t, g, at_diff)
            p_ref = model_probability(fit, spec, spec.reference_treatment, g, at_diff)
            if t == spec.reference_treatment:
                out[(t, g)] = OddsRatio(t, g, 1.0, 0.0, 0.0, 1.0, 1.0, None, 1.0, p_t, p_ref)
                continue
            c = _contrast(fit, spec, t, g)
            log_or = float(c @ fit.beta)
            se = float(math.sqrt(max(c @ fit.covariance @ c, 0.0)))
            z = log_or / se if se > 0 else None
            p_value = float(2.0 * norm.sf(abs(z))) if z is not None else 1.0
            out[(t, g)] = OddsRatio(
                treatment=t, group=g, odds_ratio=math.exp(log_or), log_or=log_or, se=se,
                ci_low=math.exp(log_or - z_crit * se), ci_high=math.exp(log_or + z_crit * se),
                z=z, p_value=p_value, p_treated=p_t, p_reference=p_ref,
            )
    return out


def _or_value(value: Union[OddsRatio, float]) -> float:
    return value.odds_ratio if isinstance(value, OddsRatio) else float(value)


def max_ror(ors: Mapping[Tuple[str, Hashable], Union[OddsRatio, float]]) -> Dict[str, Tuple[float, Tuple[Hashable, Hashable]]]:
    """
    maxROR_t = max_a OR_{t,a} / min_b OR_{t,b} with its (max, min) group pair,
    lowest group first on ties
    """
    by_treatment: Dict[str, Dict[Hashable, float]] = {}
    for (t, g), value in ors.items():
        by_treatment.setdefault(t, {})[g] = _or_value(value)

    out = {}
    for t, values in by_treatment.items():
        if len(values) < 2:
            raise DesignError(f"treatment {t} needs at least two groups for a ratio of odds ratios")
        _, (hi, lo) = spread(values)
        out[t] = (values[hi] / values[lo], (hi, lo))
    return out


def or_table(ors: Mapping[Tuple[str, int], Union[OddsRatio, float]], reference: Optional[str] = None) -> pd.DataFrame:
    """Groups as rows and treatments as columns, with a final maxROR row"""
    rors = max_ror(ors)
    treatments = [t for t in dict.fromkeys(t for t, _ in ors) if t != reference]
    groups = sorted({g for _, g in ors})
    frame = pd.DataFrame(
        [[_or_value(ors[(t, g)]) for t in treatments] for g in groups],
        index=[str(g) for g in groups], columns=treatments,
    )
    frame.loc["maxROR"] = [rors[t][0] for t in treatments]
    frame.index.name = "group"
    return frame


def inference_summary(fit: FitResult, ors: Mapping[Tuple[str, int], OddsRatio], spec: DesignSpec) -> Dict:
    """JSON-ready summary: coefficients, robust SEs, ORs and the maxROR table"""
    rors = max_ror(ors)
    table = or_table(ors, reference=spec.reference_treatment)
    return {
        "design": spec.to_dict(),
        "fit": fit.to_dict(),
        "odds_ratios": [o.to_dict() for o in ors.values()],
        "max_ror": {t: {"max_ror": v, "pair": list(pair)} for t, (v, pair) in rors.items()},
        "or_table": {
            column: {row: float(value) for row, value in table[column].items()}
            for column in table.columns
        },
    }
