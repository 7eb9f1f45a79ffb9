"""
Simulation Module - synthetic biased tasks, simulated participants and the mechanism benchmark
"""

from .synthetic_task import SyntheticTaskSpec, calibrated_concentration, generate_task
from .human_model import (
    Treatment,
    HumanModel,
    TrialResponse,
    N_TRIAL_SEEDS,
    RESPONSE_COLUMNS,
    simulate_responses,
    expected_group_accuracy,
    expected_group_adoption,
    expected_improvements,
    responses_to_frame,
    frame_to_responses,
    write_responses_csv,
    read_responses_csv
)
from .mechanism import (
    MechanismCheck,
    MechanismReport,
    SweepReport,
    MECHANISM_CHECKS,
    treatment_sets,
    expected_treatment_report,
    run_mechanism_benchmark,
    default_sweep_configs,
    run_mechanism_sweep
)

__all__ = [
    'SyntheticTaskSpec',
    'generate_task',
    'calibrated_concentration',
    'Treatment',
    'HumanModel',
    'TrialResponse',
    'N_TRIAL_SEEDS',
    'RESPONSE_COLUMNS',
    'simulate_responses',
    'expected_group_accuracy',
    'expected_group_adoption',
    'expected_improvements',
    'responses_to_frame',
    'frame_to_responses',
    'write_responses_csv',
    'read_responses_csv',
    'MechanismCheck',
    'MechanismReport',
    'SweepReport',
    'MECHANISM_CHECKS',
    'treatment_sets',
    'expected_treatment_report',
    'run_mechanism_benchmark',
    'default_sweep_configs',
    'run_mechanism_sweep'
]
