"""
Inference Module - clustered logistic regression and odds ratios per treatment and group
"""

from .design import (
    DesignSpec,
    DesignMatrix,
    build_design,
    design_row,
    design_terms,
    term_levels
)
from .logistic import FitResult, fit_logistic, log_likelihood, sandwich_covariance
from .odds import (
    OddsRatio,
    odds_ratios,
    max_ror,
    or_table,
    model_probability,
    inference_summary
)

__all__ = [
    'DesignSpec',
    'DesignMatrix',
    'build_design',
    'design_row',
    'design_terms',
    'term_levels',
    'FitResult',
    'fit_logistic',
    'log_likelihood',
    'sandwich_covariance',
    'OddsRatio',
    'odds_ratios',
    'max_ror',
    'or_table',
    'model_probability',
    'inference_summary'
]
