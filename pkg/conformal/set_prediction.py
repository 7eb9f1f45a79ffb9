"""
Prediction sets for test records from a calibrated SetPredictor
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from data import LabeledDataset, ProbRecord
from errors import DatasetParseError, PredictionError
from .calibration import Method, SetPredictor
from .random_streams import PREDICT_EVENT, uniform_matrix, uniform_stream
from .scores import label_scores

logger = logging.getLogger(__name__)

TIE_EVENT = "tie"
SET_COLUMNS = ["example_id", "group", "label", "set_size", "covered", "members"]
MEMBER_SEPARATOR = "|"


@dataclass(frozen=True)
class PredictionSet:
    """Members are sorted class indices; covered records whether the label is a member"""
    example_id: str
    members: Tuple[int, ...]
    covered: bool
    group: int
    label: int

    @property
    def size(self) -> int:
        return len(self.members)

    def to_dict(self) -> Dict:
        return {
            "example_id": self.example_id,
            "group": self.group,
            "label": self.label,
            "set_size": self.size,
            "covered": self.covered,
            "members": list(self.members),
        }


def membership_matrix(
    probs: np.ndarray,
    groups: np.ndarray,
    example_ids: Sequence[str],
    pred: SetPredictor,
) -> np.ndarray:
    """(n, m) boolean membership of every label for every record"""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    n = probs.shape[0]
    if n == 0:
        return np.zeros((0, pred.m), dtype=bool)

    if pred.method == Method.AVGK:
        members = probs > pred.q_k
        if pred.randomize_ties:
            ties = probs == pred.q_k
            if ties.any():
                draws = uniform_matrix(pred.seed, example_ids, TIE_EVENT, pred.m)
                members |= ties & (draws < 0.5)
    else:
        cfg = pred.score_cfg
        if cfg.uses_seeded_u:
            u = uniform_stream(pred.seed, example_ids, PREDICT_EVENT)
        else:
            u = np.ones(n, dtype=np.float64)
        scores = label_scores(probs, cfg, u)
        if pred.method == Method.MARGINAL:
            thresholds = np.full(n, pred.q_hat, dtype=np.float64)
        else:
            thresholds = np.array([pred.q_hat_by_group[int(g)] for g in groups], dtype=np.float64)
        members = scores <= thresholds[:, None]

    if pred.force_nonempty:
        empty = ~members.any(axis=1)
        if empty.any():
            logger.debug("%d empty sets replaced by the top-1 label", int(empty.sum()))
            members[np.flatnonzero(empty), np.argmax(probs[empty], axis=1)] = True
    return members


def _check_records(ds: LabeledDataset, pred: SetPredictor):
    if ds.m != pred.m:
        raise PredictionError(f"dataset has m={ds.m} classes, predictor expects m={pred.m}")
    if pred.method == Method.MONDRIAN:
        for r in ds:
            if r.group not in pred.q_hat_by_group:
                raise PredictionError(f"no Mondrian threshold for group {r.group}", example_id=r.example_id)


def _to_sets(ds: LabeledDataset, members: np.ndarray) -> List[PredictionSet]:
    sets = []
    for i, r in enumerate(ds):
        row = tuple(int(j) for j in np.flatnonzero(members[i]))
        sets.append(PredictionSet(
            example_id=r.example_id,
            members=row,
            covered=r.label in row,
            group=r.group,
            label=r.label,
        ))
    return sets


def _predict_chunk(ds: LabeledDataset, pred: SetPredictor) -> List[PredictionSet]:
    members = membership_matrix(ds.probs_matrix(), ds.groups(), ds.example_ids(), pred)
    return _to_sets(ds, members)


def predict_set(rec: ProbRecord, pred: SetPredictor) -> PredictionSet:
    if rec.m != pred.m:
        raise PredictionError(f"record has m={rec.m} classes, predictor expects m={pred.m}", rec.example_id)
    ds = LabeledDataset([rec], m=pred.m, n_g=max(pred.n_g, rec.group + 1))
    _check_records(ds, pred)
    return _predict_chunk(ds, pred)[0]


def predict_batch(ds: LabeledDataset, pred: SetPredictor, jobs: int = 1, chunk_size: int = 2048) -> List[PredictionSet]:
    """
    Order-preserving set prediction for every record.

    With jobs > 1 the records are split into chunks evaluated on a thread pool;
    uniforms are keyed per record so the result does not depend on chunking.
    """
    _check_records(ds, pred)
    if len(ds) == 0:
        return []
    if jobs <= 1 or len(ds) <= chunk_size:
        return _predict_chunk(ds, pred)

    chunks = [ds.subset(range(start, min(start + chunk_size, len(ds))))
              for start in range(0, len(ds), chunk_size)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = pool.map(lambda chunk: _predict_chunk(chunk, pred), chunks)
        return [s for part in results for s in part]


def set_size_summary(sets: Sequence[PredictionSet]) -> Dict[str, float]:
    """Average size, singleton and empty rates and coverage of a batch"""
    if not sets:
        return {"n": 0, "avg_size": float("nan"), "singleton_rate": float("nan"),
                "empty_rate": float("nan"), "coverage": float("nan")}
    sizes = np.array([s.size for s in sets])
    return {
        "n": len(sets),
        "avg_size": float(sizes.mean()),
        "singleton_rate": float(np.mean(sizes == 1)),
        "empty_rate": float(np.mean(sizes == 0)),
        "coverage": float(np.mean([s.covered for s in sets])),
    }


def sets_to_frame(sets: Sequence[PredictionSet]) -> pd.DataFrame:
    rows = [
        [s.example_id, s.group, s.label, s.size, int(s.covered),
         MEMBER_SEPARATOR.join(str(j) for j in s.members)]
        for s in sets
    ]
    return pd.DataFrame(rows, columns=SET_COLUMNS)


def write_sets_csv(sets: Sequence[PredictionSet], path: str):
    """Write `example_id,group,label,set_size,covered,members` with |-joined members"""
    sets_to_frame(sets).to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    logger.info("wrote %d prediction sets to %s", len(sets), path)


def read_sets_csv(path: str) -> List[PredictionSet]:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DatasetParseError(f"malformed prediction-set file: {e}", path=path)
    if list(frame.columns) != SET_COLUMNS:
        raise DatasetParseError(f"header must be {','.join(SET_COLUMNS)}", line=1, path=path)

    sets = []
    for idx, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            members = tuple(int(j) for j in row.members.split(MEMBER_SEPARATOR)) if row.members else ()
            item = PredictionSet(
                example_id=row.example_id,
                members=members,
                covered=row.covered.strip().lower() in ("1", "true"),
                group=int(row.group),
                label=int(row.label),
            )
            declared_size = int(row.set_size)
        except (AttributeError, ValueError) as e:
            raise DatasetParseError(f"bad prediction-set row: {e}", line=idx, path=path)
        if item.size != declared_size:
            raise DatasetParseError("set_size does not match members", line=idx, path=path)
        sets.append(item)
    return sets


def mean_size(sets: Sequence[PredictionSet], group: Optional[int] = None) -> float:
    chosen = [s for s in sets if group is None or s.group == group]
    if not chosen:
        return float("nan")
    return float(np.mean([s.size for s in chosen]))
