"""
Calibration: conformal quantiles (marginal and Mondrian) and avg-k thresholds
"""

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np

from data import LabeledDataset
from errors import CalibrationError, ConfigError, InsufficientGroupError
from .random_streams import CALIBRATE_EVENT, uniform_stream
from .scores import ScoreConfig, label_scores

logger = logging.getLogger(__name__)

# Guards ceil() against float noise such as 4 * 0.75 = 3.0000000000000004
QUANTILE_EPS = 1e-9
DEFAULT_MIN_GROUP_N = 30


class Method(Enum):
    MARGINAL = "marginal"
    MONDRIAN = "mondrian"
    AVGK = "avgk"


def _encode_threshold(value: Optional[float]):
    if value is None:
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _decode_threshold(value) -> Optional[float]:
    if value is None:
        return None
    return float(value)


@dataclass(frozen=True)
class SetPredictor:
    """
    Calibrated set predictor. Only the fields of the declared method are set:
    marginal uses q_hat, mondrian uses q_hat_by_group, avgk uses k and q_k.
    """
    method: Method
    m: int
    n_g: int
    n_cal: int
    seed: int = 0
    score_cfg: Optional[ScoreConfig] = None
    alpha: Optional[float] = None
    q_hat: Optional[float] = None
    q_hat_by_group: Optional[Dict[int, float]] = None
    k: Optional[float] = None
    q_k: Optional[float] = None
    force_nonempty: bool = True
    randomize_ties: bool = False

    def __post_init__(self):
        if not isinstance(self.method, Method):
            object.__setattr__(self, "method", Method(self.method))

        if self.method == Method.AVGK:
            if self.k is None or self.q_k is None:
                raise CalibrationError("avgk predictor needs k and q_k")
            stray = [name for name in ("score_cfg", "alpha", "q_hat", "q_hat_by_group")
                     if getattr(self, name) is not None]
        else:
            if self.score_cfg is None or self.alpha is None:
                raise CalibrationError(f"{self.method.value} predictor needs score_cfg and alpha")
            if self.method == Method.MARGINAL:
                if self.q_hat is None:
                    raise CalibrationError("marginal predictor needs q_hat")
                stray = [name for name in ("q_hat_by_group", "k", "q_k") if getattr(self, name) is not None]
            else:
                if self.q_hat_by_group is None:
                    raise CalibrationError("mondrian predictor needs q_hat_by_group")
                missing = [g for g in range(self.n_g) if g not in self.q_hat_by_group]
                if missing:
                    raise CalibrationError(f"mondrian predictor has no threshold for groups {missing}")
                stray = [name for name in ("q_hat", "k", "q_k") if getattr(self, name) is not None]
        if stray:
            raise CalibrationError(f"{self.method.value} predictor must not set {stray}")

    def threshold_for(self, group: int) -> float:
        """Score threshold applied to a record of the given group"""
        if self.method == Method.MARGINAL:
            return self.q_hat
        if self.method == Method.MONDRIAN:
            if group not in self.q_hat_by_group:
                raise CalibrationError(f"no Mondrian threshold for group {group}")
            return self.q_hat_by_group[group]
        raise CalibrationError("avgk predictors threshold probabilities, not scores")

    def to_dict(self) -> Dict:
        data = {
            "method": self.method.value,
            "m": self.m,
            "n_g": self.n_g,
            "n_cal": self.n_cal,
            "seed": self.seed,
            "force_nonempty": self.force_nonempty,
            "randomize_ties": self.randomize_ties,
        }
        if self.method == Method.AVGK:
            data["k"] = self.k
            data["q_k"] = _encode_threshold(self.q_k)
        else:
            data["score_cfg"] = self.score_cfg.to_dict()
            data["alpha"] = self.alpha
            if self.method == Method.MARGINAL:
                data["q_hat"] = _encode_threshold(self.q_hat)
            else:
                data["q_hat_by_group"] = {
                    str(g): _encode_threshold(q) for g, q in sorted(self.q_hat_by_group.items())
                }
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'SetPredictor':
        try:
            method = Method(data["method"])
            by_group = data.get("q_hat_by_group")
            return cls(
                method=method,
                m=int(data["m"]),
                n_g=int(data["n_g"]),
                n_cal=int(data["n_cal"]),
                seed=int(data.get("seed", 0)),
                score_cfg=ScoreConfig.from_dict(data["score_cfg"]) if data.get("score_cfg") else None,
                alpha=data.get("alpha"),
                q_hat=_decode_threshold(data.get("q_hat")),
                q_hat_by_group=(
                    {int(g): _decode_threshold(q) for g, q in by_group.items()} if by_group is not None else None
                ),
                k=data.get("k"),
                q_k=_decode_threshold(data.get("q_k")),
                force_nonempty=bool(data.get("force_nonempty", True)),
                randomize_ties=bool(data.get("randomize_ties", False)),
            )
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"invalid predictor artifact: {e}")


def save_predictor(pred: SetPredictor, path: str, metadata: Optional[Dict] = None):
    """Write the predictor as a JSON artifact; metadata keys are stored alongside"""
    data = dict(metadata or {})
    data["predictor"] = pred.to_dict()
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True)
    logger.info("saved %s predictor to %s", pred.method.value, path)


def load_predictor(path: str) -> SetPredictor:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e.msg}")
    return SetPredictor.from_dict(data.get("predictor", data))


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise CalibrationError(f"alpha must lie in (0, 1), got {alpha}")


def conformal_quantile(scores: Sequence[float], alpha: float) -> float:
    """
    The r-th smallest score with r = ceil((n + 1)(1 - alpha)), or +inf when r > n
    """
    _check_alpha(alpha)
    values = np.sort(np.asarray(scores, dtype=np.float64))
    n = len(values)
    if n == 0:
        raise CalibrationError("cannot compute a conformal quantile of no scores")
    r = math.ceil((n + 1) * (1.0 - alpha) - QUANTILE_EPS)
    if r > n:
        return math.inf
    return float(values[max(r, 1) - 1])


def calibration_u(ds: LabeledDataset, cfg: ScoreConfig, seed: int, event: str = CALIBRATE_EVENT):
    """Per-record u values: seeded uniforms when the config randomises, otherwise 1"""
    if cfg.uses_seeded_u:
        return uniform_stream(seed, ds.example_ids(), event)
    return np.ones(len(ds), dtype=np.float64)


def true_label_scores(ds: LabeledDataset, cfg: ScoreConfig, seed: int = 0) -> np.ndarray:
    """Score of each record's true label only"""
    if len(ds) == 0:
        return np.zeros(0, dtype=np.float64)
    scores = label_scores(ds.probs_matrix(), cfg, calibration_u(ds, cfg, seed))
    return scores[np.arange(len(ds)), ds.labels()]


def calibrate_marginal(
    cal: LabeledDataset,
    cfg: ScoreConfig,
    alpha: float,
    seed: int = 0,
    force_nonempty: bool = True,
) -> SetPredictor:
    if len(cal) == 0:
        raise CalibrationError("calibration set is empty")
    q_hat = conformal_quantile(true_label_scores(cal, cfg, seed), alpha)
    logger.info("marginal calibration: score=%s alpha=%.4f n=%d q_hat=%s", cfg.kind.value, alpha, len(cal), q_hat)
    return SetPredictor(
        method=Method.MARGINAL, m=cal.m, n_g=cal.n_g, n_cal=len(cal), seed=seed,
        score_cfg=cfg, alpha=alpha, q_hat=q_hat, force_nonempty=force_nonempty,
    )


def calibrate_mondrian(
    cal: LabeledDataset,
    cfg: ScoreConfig,
    alpha: float,
    min_group_n: int = DEFAULT_MIN_GROUP_N,
    seed: int = 0,
    force_nonempty: bool = True,
) -> SetPredictor:
    """Independent conformal quantile per group, same score config for all groups"""
    _check_alpha(alpha)
    counts = cal.group_counts()
    for g in range(cal.n_g):
        if counts[g] < min_group_n:
            raise InsufficientGroupError(
                g, int(counts[g]), min_group_n,
                group_name=cal.group_names[g] if cal.group_names else None,
            )

    scores = true_label_scores(cal, cfg, seed)
    groups = cal.groups()
    thresholds = {g: conformal_quantile(scores[groups == g], alpha) for g in range(cal.n_g)}
    logger.info("mondrian calibration: score=%s alpha=%.4f thresholds=%s", cfg.kind.value, alpha, thresholds)
    return SetPredictor(
        method=Method.MONDRIAN, m=cal.m, n_g=cal.n_g, n_cal=len(cal), seed=seed,
        score_cfg=cfg, alpha=alpha, q_hat_by_group=thresholds, force_nonempty=force_nonempty,
    )


def avgk_threshold(flat_probs: np.ndarray, k: float, m: int) -> float:
    """
    The ceil(p |Y|)-th smallest value of Y with p = 1 - k/m, or -inf when that index is 0
    """
    values = np.sort(np.asarray(flat_probs, dtype=np.float64).ravel())
    p = 1.0 - k / m
    idx = math.ceil(p * len(values) - QUANTILE_EPS)
    if idx <= 0:
        return -math.inf
    return float(values[min(idx, len(values)) - 1])


def calibrate_avgk(
    cal: LabeledDataset,
    k: float,
    seed: int = 0,
    randomize_ties: bool = False,
    force_nonempty: bool = False,
) -> SetPredictor:
    """
    Global probability threshold admitting k labels per record on average over cal.
    Sets may be empty by default; forcing them nonempty raises the average size above k.
    """
    if not 0.0 < k <= cal.m:
        raise CalibrationError(f"k must lie in (0, {cal.m}], got {k}")
    if len(cal) == 0:
        raise CalibrationError("calibration set is empty")
    q_k = avgk_threshold(cal.probs_matrix(), k, cal.m)
    logger.info("avg-k calibration: k=%.5f n=%d q_k=%s", k, len(cal), q_k)
    return SetPredictor(
        method=Method.AVGK, m=cal.m, n_g=cal.n_g, n_cal=len(cal), seed=seed,
        k=float(k), q_k=q_k, randomize_ties=randomize_ties, force_nonempty=force_nonempty,
    )


def empirical_coverage(sets: Sequence, labels: Sequence[int]) -> float:
    """Fraction of sets containing their label"""
    if len(sets) != len(labels):
        raise CalibrationError(f"{len(sets)} sets but {len(labels)} labels")
    if len(sets) == 0:
        raise CalibrationError("coverage of an empty batch is undefined")
    hits = sum(1 for s, y in zip(sets, labels) if int(y) in s.members)
    return hits / len(sets)
