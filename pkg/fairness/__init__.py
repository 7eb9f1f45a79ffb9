"""
Fairness Module - group metrics, disparate impact and key-factor tables
"""

from .metrics import (
    GroupMetrics,
    FairnessReport,
    spread,
    audit_sets,
    group_accuracy,
    group_adoption,
    accuracy_improvements,
    disparate_impact
)
from .key_factors import KeyFactorTable, FACTOR_COLUMNS, factor_differences, key_factor_table
from .reporting import build_treatment_report, format_report

__all__ = [
    'GroupMetrics',
    'FairnessReport',
    'spread',
    'audit_sets',
    'group_accuracy',
    'group_adoption',
    'accuracy_improvements',
    'disparate_impact',
    'KeyFactorTable',
    'FACTOR_COLUMNS',
    'factor_differences',
    'key_factor_table',
    'build_treatment_report',
    'format_report'
]
