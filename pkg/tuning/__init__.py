"""
Tuning Module - score hyperparameter search and avg-k budget search
"""

from .score_search import (
    TuneSpec,
    TrialResult,
    TuningReport,
    sample_configs,
    evaluate_config,
    select_winner,
    search_score_config,
    tune_score
)
from .avgk_search import AvgKSearchResult, search_avgk, tune_avgk

__all__ = [
    'TuneSpec',
    'TrialResult',
    'TuningReport',
    'sample_configs',
    'evaluate_config',
    'select_winner',
    'search_score_config',
    'tune_score',
    'AvgKSearchResult',
    'search_avgk',
    'tune_avgk'
]
