"""
Seeded random search over score hyperparameters (T, lambda, k_reg)

Each trial calibrates on the cal split and measures average set size and
coverage on the calval split. The winner is the smallest average size among
trials whose coverage reaches the target minus a small tolerance.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from conformal import (
    DEFAULT_MIN_GROUP_N,
    Method,
    ScoreConfig,
    ScoreKind,
    UMode,
    calibrate_marginal,
    calibrate_mondrian,
    predict_batch,
    set_size_summary,
)
from data import LabeledDataset
from errors import TuningError

logger = logging.getLogger(__name__)

COVERAGE_TOLERANCE = 0.005
DEFAULT_BUDGET = 50


@dataclass(frozen=True)
class TuneSpec:
    """
    Search space and budget. k_reg_range upper bound None means m.
    """
    target_coverage: float = 0.9
    temperature_range: Tuple[float, float] = (0.05, 5.0)
    lam_range: Tuple[float, float] = (1e-3, 20.0)
    k_reg_range: Tuple[int, Optional[int]] = (1, None)
    budget: int = DEFAULT_BUDGET
    seed: int = 0
    objective: str = "min_avg_size"
    coverage_tolerance: float = COVERAGE_TOLERANCE
    randomized: bool = False

    def __post_init__(self):
        if self.budget < 1:
            raise TuningError(f"budget must be at least 1, got {self.budget}")
        if not 0.0 < self.target_coverage < 1.0:
            raise TuningError(f"target coverage must lie in (0, 1), got {self.target_coverage}")
        if self.objective != "min_avg_size":
            raise TuningError(f"unsupported objective '{self.objective}'")
        t_lo, t_hi = self.temperature_range
        if not 0 < t_lo <= t_hi:
            raise TuningError(f"empty temperature range {self.temperature_range}")
        l_lo, l_hi = self.lam_range
        if not 0 <= l_lo <= l_hi:
            raise TuningError(f"empty lambda range {self.lam_range}")
        k_lo, k_hi = self.k_reg_range
        if k_lo < 1 or (k_hi is not None and k_hi < k_lo):
            raise TuningError(f"empty k_reg range {self.k_reg_range}")

    def to_dict(self) -> Dict:
        return {
            "target_coverage": self.target_coverage,
            "temperature_range": list(self.temperature_range),
            "lam_range": list(self.lam_range),
            "k_reg_range": list(self.k_reg_range),
            "budget": self.budget,
            "seed": self.seed,
            "objective": self.objective,
            "coverage_tolerance": self.coverage_tolerance,
            "randomized": self.randomized,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'TuneSpec':
        k_range = data.get("k_reg_range", (1, None))
        return cls(
            target_coverage=float(data.get("target_coverage", 0.9)),
            temperature_range=tuple(float(v) for v in data.get("temperature_range", (0.05, 5.0))),
            lam_range=tuple(float(v) for v in data.get("lam_range", (1e-3, 20.0))),
            k_reg_range=(int(k_range[0]), None if k_range[1] is None else int(k_range[1])),
            budget=int(data.get("budget", DEFAULT_BUDGET)),
            seed=int(data.get("seed", 0)),
            objective=data.get("objective", "min_avg_size"),
            coverage_tolerance=float(data.get("coverage_tolerance", COVERAGE_TOLERANCE)),
            randomized=bool(data.get("randomized", False)),
        )


@dataclass(frozen=True)
class TrialResult:
    index: int
    cfg: ScoreConfig
    avg_size: float
    coverage: float
    qualified: bool

    def to_dict(self) -> Dict:
        return {
            "index": self.index,
            "config": self.cfg.to_dict(),
            "avg_size": self.avg_size,
            "coverage": self.coverage,
            "qualified": self.qualified,
        }


@dataclass
class TuningReport:
    """Every evaluated trial plus the selected one"""
    kind: ScoreKind
    method: Method
    alpha: float
    spec: TuneSpec
    trials: List[TrialResult] = field(default_factory=list)
    winner_index: int = 0
    fallback: bool = False

    @property
    def winner(self) -> TrialResult:
        return self.trials[self.winner_index]

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value,
            "method": self.method.value,
            "alpha": self.alpha,
            "spec": self.spec.to_dict(),
            "trials": [t.to_dict() for t in self.trials],
            "winner": self.winner.to_dict(),
            "fallback": self.fallback,
        }


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if lo == hi:
        return lo
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def sample_configs(kind: ScoreKind, spec: TuneSpec, m: int) -> List[ScoreConfig]:
    """
    `budget` configurations; the first one is the low end of the space with T = 1
    when 1 lies in the temperature range.
    """
    rng = np.random.default_rng(spec.seed)
    t_lo, t_hi = spec.temperature_range
    l_lo, l_hi = spec.lam_range
    k_lo = spec.k_reg_range[0]
    k_hi = m if spec.k_reg_range[1] is None else min(spec.k_reg_range[1], m)
    if k_hi < k_lo:
        raise TuningError(f"k_reg range {spec.k_reg_range} is empty for m={m}")
    u_mode = UMode.SEEDED if spec.randomized else UMode.FIXED_ONE

    tunes_lam = kind in (ScoreKind.RAPS, ScoreKind.SAPS)
    tunes_k = kind == ScoreKind.RAPS

    configs = [ScoreConfig(
        kind=kind,
        temperature=min(max(1.0, t_lo), t_hi),
        lam=l_lo if tunes_lam else 0.0,
        k_reg=k_lo if tunes_k else 1,
        randomized=spec.randomized,
        u_mode=u_mode,
    )]
    while len(configs) < spec.budget:
        temperature = _log_uniform(rng, t_lo, t_hi)
        if l_lo > 0:
            lam = _log_uniform(rng, l_lo, l_hi)
        else:
            lam = float(rng.uniform(l_lo, l_hi))
        k_reg = int(rng.integers(k_lo, k_hi + 1))
        configs.append(ScoreConfig(
            kind=kind,
            temperature=temperature,
            lam=lam if tunes_lam else 0.0,
            k_reg=k_reg if tunes_k else 1,
            randomized=spec.randomized,
            u_mode=u_mode,
        ))
    return configs


def evaluate_config(
    cfg: ScoreConfig,
    cal: LabeledDataset,
    calval: LabeledDataset,
    method: Method,
    alpha: float,
    seed: int = 0,
    min_group_n: int = DEFAULT_MIN_GROUP_N,
) -> Tuple[float, float]:
    """(average set size, coverage) on calval after calibrating on cal"""
    if method == Method.MARGINAL:
        pred = calibrate_marginal(cal, cfg, alpha, seed=seed)
    elif method == Method.MONDRIAN:
        pred = calibrate_mondrian(cal, cfg, alpha, min_group_n=min_group_n, seed=seed)
    else:
        raise TuningError("score search covers marginal and mondrian predictors only")
    summary = set_size_summary(predict_batch(calval, pred))
    return summary["avg_size"], summary["coverage"]


def select_winner(trials: List[TrialResult]) -> Tuple[int, bool]:
    """
    Index of the winning trial and whether the coverage fallback was used.
    Ties go to the earliest trial.
    """
    qualified = [t for t in trials if t.qualified]
    if qualified:
        best = min(qualified, key=lambda t: (t.avg_size, t.index))
        return best.index, False
    best = max(trials, key=lambda t: (t.coverage, -t.index))
    return best.index, True


def _check_inputs(cal: LabeledDataset, calval: LabeledDataset):
    if len(cal) == 0 or len(calval) == 0:
        raise TuningError("cal and calval splits must be nonempty")
    overlap = set(cal.example_ids()) & set(calval.example_ids())
    if overlap:
        raise TuningError(f"cal and calval share {len(overlap)} example ids, e.g. {sorted(overlap)[:3]}")


def search_score_config(
    cal: LabeledDataset,
    calval: LabeledDataset,
    kind,
    method,
    alpha: float,
    spec: TuneSpec,
    jobs: int = 1,
    min_group_n: int = DEFAULT_MIN_GROUP_N,
) -> TuningReport:
    kind = kind if isinstance(kind, ScoreKind) else ScoreKind(kind)
    method = method if isinstance(method, Method) else Method(method)
    _check_inputs(cal, calval)

    configs = sample_configs(kind, spec, cal.m)
    floor = spec.target_coverage - spec.coverage_tolerance

    def run(item):
        index, cfg = item
        avg_size, coverage = evaluate_config(cfg, cal, calval, method, alpha, spec.seed, min_group_n)
        logger.debug("trial %d: %s avg_size=%.4f coverage=%.4f", index, cfg.to_dict(), avg_size, coverage)
        return TrialResult(index, cfg, avg_size, coverage, coverage >= floor)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(run, enumerate(configs)))
    else:
        trials = [run(item) for item in enumerate(configs)]

    winner_index, fallback = select_winner(trials)
    report = TuningReport(kind=kind, method=method, alpha=alpha, spec=spec,
                          trials=trials, winner_index=winner_index, fallback=fallback)
    if fallback:
        logger.warning("no trial reached coverage %.4f; using the highest-coverage trial", floor)
    logger.info(
        "tuned %s/%s over %d trials: avg_size=%.4f coverage=%.4f",
        kind.value, method.value, len(trials), report.winner.avg_size, report.winner.coverage
    )
    return report


def tune_score(
    cal: LabeledDataset,
    calval: LabeledDataset,
    kind,
    method,
    alpha: float,
    spec: TuneSpec,
    jobs: int = 1,
    min_group_n: int = DEFAULT_MIN_GROUP_N,
) -> ScoreConfig:
    """Winning ScoreConfig of search_score_config"""
    return search_score_config(cal, calval, kind, method, alpha, spec, jobs, min_group_n).winner.cfg
