"""
Conformal score functions s(x, y) over classifier probabilities

Lower scores mean more plausible labels. Supported kinds:
    lac   1 - p_y
    aps   rho_x(y) + u * p_y
    raps  rho_x(y) + u * p_y + lambda * (o_x(y) - k_reg)+
    saps  u * p_y for the top-ranked label, else max(p) + lambda * (o_x(y) - 2 + u)

rho_x(y) is the mass of labels with strictly larger probability and o_x(y)
the 1-based rank of y, ties broken by ascending class index.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from errors import LabelIndexError, ScoreError

logger = logging.getLogger(__name__)

# Zero probabilities are clamped before taking logs for temperature scaling
LOG_CLAMP = 1e-12


class ScoreKind(Enum):
    LAC = "lac"
    APS = "aps"
    RAPS = "raps"
    SAPS = "saps"


class UMode(Enum):
    """Where the randomisation variable u comes from"""
    SEEDED = "seeded"
    FIXED_ONE = "fixed_one"


@dataclass(frozen=True)
class ScoreConfig:
    """
    Score function configuration: kind plus temperature, regularisation
    weight lam, regularisation rank k_reg and randomisation mode.
    """
    kind: ScoreKind = ScoreKind.LAC
    temperature: float = 1.0
    lam: float = 0.0
    k_reg: int = 1
    randomized: bool = False
    u_mode: UMode = UMode.FIXED_ONE

    def __post_init__(self):
        if not isinstance(self.kind, ScoreKind):
            object.__setattr__(self, "kind", ScoreKind(self.kind))
        if not isinstance(self.u_mode, UMode):
            object.__setattr__(self, "u_mode", UMode(self.u_mode))
        if not self.temperature > 0:
            raise ScoreError(f"temperature must be positive, got {self.temperature}")
        if self.lam < 0:
            raise ScoreError(f"lambda must be non-negative, got {self.lam}")
        if self.kind == ScoreKind.RAPS and self.k_reg < 1:
            raise ScoreError(f"k_reg must be at least 1 for raps, got {self.k_reg}")

    @property
    def uses_seeded_u(self) -> bool:
        """True when u is drawn from the seeded stream rather than fixed at 1"""
        return self.randomized and self.u_mode == UMode.SEEDED

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value,
            "temperature": self.temperature,
            "lam": self.lam,
            "k_reg": self.k_reg,
            "randomized": self.randomized,
            "u_mode": self.u_mode.value,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'ScoreConfig':
        return cls(
            kind=ScoreKind(data.get("kind", ScoreKind.LAC.value)),
            temperature=float(data.get("temperature", 1.0)),
            lam=float(data.get("lam", data.get("lambda", 0.0))),
            k_reg=int(data.get("k_reg", 1)),
            randomized=bool(data.get("randomized", False)),
            u_mode=UMode(data.get("u_mode", UMode.FIXED_ONE.value)),
        )


@dataclass(frozen=True)
class ScoredLabel:
    """Score of one candidate label together with its rank and mass above"""
    label: int
    score: float
    rank: int
    mass_above: float


def apply_temperature(probs: np.ndarray, temperature: float) -> np.ndarray:
    """
    softmax(log(p) / T) row-wise.

    Zero entries are clamped to 1e-12 before the log. T = 1 returns the
    input unchanged so that nearly-normalised rows are not silently rescaled.
    """
    if not temperature > 0:
        raise ScoreError(f"temperature must be positive, got {temperature}")
    probs = np.asarray(probs, dtype=np.float64)
    if temperature == 1.0:
        return probs.copy()
    logits = np.log(np.maximum(probs, LOG_CLAMP)) / temperature
    return softmax(logits, axis=-1)


def ranks_and_mass_above(probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ranks o_x(y) (1-based, ties by ascending class index) and masses rho_x(y)
    (sum of strictly larger probabilities) for an (n, m) matrix.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    n, m = probs.shape
    order = np.argsort(-probs, axis=1, kind='stable')
    rows = np.arange(n)[:, None]

    ranks = np.empty((n, m), dtype=np.int64)
    ranks[rows, order] = np.arange(1, m + 1)[None, :]

    sorted_probs = probs[rows, order]
    exclusive = np.cumsum(sorted_probs, axis=1) - sorted_probs
    # Tied labels share the mass accumulated before their tie block starts
    new_block = np.ones((n, m), dtype=bool)
    new_block[:, 1:] = sorted_probs[:, 1:] != sorted_probs[:, :-1]
    block_start = np.maximum.accumulate(np.where(new_block, np.arange(m)[None, :], 0), axis=1)
    mass_sorted = exclusive[rows, block_start]
    mass_sorted[:, 0] = 0.0

    mass = np.empty((n, m), dtype=np.float64)
    mass[rows, order] = mass_sorted
    return ranks, mass


def score_matrix(probs: np.ndarray, cfg: ScoreConfig, u: Union[float, np.ndarray] = 1.0) -> np.ndarray:
    """
    Scores of every label for every row of an already temperature-scaled
    (n, m) probability matrix. `u` is a scalar or one value per row.
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    n, m = probs.shape
    u = np.broadcast_to(np.asarray(u, dtype=np.float64), (n,))[:, None]

    if cfg.kind == ScoreKind.LAC:
        return 1.0 - probs

    ranks, mass = ranks_and_mass_above(probs)

    if cfg.kind == ScoreKind.APS:
        return mass + u * probs
    if cfg.kind == ScoreKind.RAPS:
        return mass + u * probs + cfg.lam * np.maximum(ranks - cfg.k_reg, 0)
    if cfg.kind == ScoreKind.SAPS:
        top = probs.max(axis=1, keepdims=True)
        return np.where(ranks == 1, u * probs, top + cfg.lam * (ranks - 2 + u))

    raise ScoreError(f"unsupported score kind {cfg.kind}")


def label_scores(raw_probs: np.ndarray, cfg: ScoreConfig, u: Union[float, np.ndarray] = 1.0) -> np.ndarray:
    """Temperature-scale raw probabilities, then score every label"""
    return score_matrix(apply_temperature(raw_probs, cfg.temperature), cfg, u)


def score(probs: Sequence[float], y: int, cfg: ScoreConfig, u: float = 1.0) -> float:
    """Score of label y for one temperature-scaled probability vector"""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= y < probs.shape[-1]:
        raise LabelIndexError(f"label {y} outside [0, {probs.shape[-1]})")
    if not 0.0 <= u <= 1.0:
        raise ScoreError(f"u must lie in [0, 1], got {u}")
    return float(score_matrix(probs[None, :], cfg, u)[0, y])


def scored_labels(probs: Sequence[float], cfg: ScoreConfig, u: float = 1.0) -> List[ScoredLabel]:
    """All labels of one vector with score, rank and mass above"""
    probs = np.asarray(probs, dtype=np.float64)[None, :]
    ranks, mass = ranks_and_mass_above(probs)
    scores = score_matrix(probs, cfg, u)
    return [
        ScoredLabel(label=j, score=float(scores[0, j]), rank=int(ranks[0, j]), mass_above=float(mass[0, j]))
        for j in range(probs.shape[1])
    ]
