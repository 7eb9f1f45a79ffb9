"""
Data Module for the Conformal Fairness Toolkit
"""

from .records import (
    ProbRecord,
    LabeledDataset,
    SplitSpec,
    StratifyBy,
    simplex_violations
)
from .storage import load_dataset, save_dataset, load_names, save_names
from .splitting import split, allocate_counts

__all__ = [
    'ProbRecord',
    'LabeledDataset',
    'SplitSpec',
    'StratifyBy',
    'simplex_violations',
    'load_dataset',
    'save_dataset',
    'load_names',
    'save_names',
    'split',
    'allocate_counts'
]
