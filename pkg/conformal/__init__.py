"""
Conformal Module - score functions, calibration and set prediction
"""

from .scores import (
    ScoreKind,
    UMode,
    ScoreConfig,
    ScoredLabel,
    apply_temperature,
    ranks_and_mass_above,
    score_matrix,
    label_scores,
    score,
    scored_labels
)
from .random_streams import CALIBRATE_EVENT, PREDICT_EVENT, keyed_uniform, uniform_stream, uniform_matrix
from .calibration import (
    Method,
    SetPredictor,
    DEFAULT_MIN_GROUP_N,
    conformal_quantile,
    true_label_scores,
    calibrate_marginal,
    calibrate_mondrian,
    calibrate_avgk,
    avgk_threshold,
    empirical_coverage,
    save_predictor,
    load_predictor
)
from .set_prediction import (
    PredictionSet,
    membership_matrix,
    predict_set,
    predict_batch,
    set_size_summary,
    sets_to_frame,
    write_sets_csv,
    read_sets_csv,
    mean_size
)

__all__ = [
    'ScoreKind',
    'UMode',
    'ScoreConfig',
    'ScoredLabel',
    'apply_temperature',
    'ranks_and_mass_above',
    'score_matrix',
    'label_scores',
    'score',
    'scored_labels',
    'CALIBRATE_EVENT',
    'PREDICT_EVENT',
    'keyed_uniform',
    'uniform_stream',
    'uniform_matrix',
    'Method',
    'SetPredictor',
    'DEFAULT_MIN_GROUP_N',
    'conformal_quantile',
    'true_label_scores',
    'calibrate_marginal',
    'calibrate_mondrian',
    'calibrate_avgk',
    'avgk_threshold',
    'empirical_coverage',
    'save_predictor',
    'load_predictor',
    'PredictionSet',
    'membership_matrix',
    'predict_set',
    'predict_batch',
    'set_size_summary',
    'sets_to_frame',
    'write_sets_csv',
    'read_sets_csv',
    'mean_size'
]
