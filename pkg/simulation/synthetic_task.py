"""
Synthetic biased classifiers: groups of differing difficulty

Each record draws a group, a uniform true label and whether the model is right
(with the group's accuracy). The probability vector is a Dirichlet draw
concentrated on the predicted class, with a secondary bump on a runner-up
class; for wrong predictions the runner-up is usually the true label.

By default every group shares one concentration, so the confidence profile is
the same everywhere and only accuracy differs. Per-group concentrations let
each group's confidence track its own accuracy.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from data import LabeledDataset
from errors import SimulationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticTaskSpec:
    m: int = 10
    n_g: int = 2
    group_weights: Tuple[float, ...] = (0.2, 0.8)
    group_accuracy: Tuple[float, ...] = (0.85, 0.55)
    concentration: float = 30.0
    group_concentration: Optional[Tuple[float, ...]] = None
    runner_up_weight: float = 10.0
    runner_up_fidelity: float = 0.85
    n: int = 20000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "group_weights", tuple(float(w) for w in self.group_weights))
        object.__setattr__(self, "group_accuracy", tuple(float(a) for a in self.group_accuracy))
        if self.group_concentration is not None:
            object.__setattr__(self, "group_concentration", tuple(float(c) for c in self.group_concentration))
        if self.m < 2:
            raise SimulationError(f"need at least two classes, got m={self.m}")
        if len(self.group_weights) != self.n_g or len(self.group_accuracy) != self.n_g:
            raise SimulationError(f"group_weights and group_accuracy need {self.n_g} entries")
        if any(w < 0 for w in self.group_weights) or abs(sum(self.group_weights) - 1.0) > 1e-9:
            raise SimulationError(f"group weights must lie on the simplex, got {self.group_weights}")
        if any(not 0.0 < a <= 1.0 for a in self.group_accuracy):
            raise SimulationError(f"group accuracies must lie in (0, 1], got {self.group_accuracy}")
        if self.concentration <= 0 or self.runner_up_weight <= 0:
            raise SimulationError("concentration and runner_up_weight must be positive")
        if self.group_concentration is not None and (
            len(self.group_concentration) != self.n_g or any(c <= 0 for c in self.group_concentration)
        ):
            raise SimulationError(f"group_concentration needs {self.n_g} positive entries")
        if not 0.0 <= self.runner_up_fidelity <= 1.0:
            raise SimulationError(f"runner_up_fidelity must lie in [0, 1], got {self.runner_up_fidelity}")
        if self.n < 1:
            raise SimulationError(f"n must be positive, got {self.n}")

    def to_dict(self) -> Dict:
        return {
            "m": self.m,
            "n_g": self.n_g,
            "group_weights": list(self.group_weights),
            "group_accuracy": list(self.group_accuracy),
            "concentration": self.concentration,
            "group_concentration": None if self.group_concentration is None else list(self.group_concentration),
            "runner_up_weight": self.runner_up_weight,
            "runner_up_fidelity": self.runner_up_fidelity,
            "n": self.n,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SyntheticTaskSpec':
        defaults = cls()
        weights = data.get("group_weights", defaults.group_weights)
        accuracy = data.get("group_accuracy", defaults.group_accuracy)
        group_concentration = data.get("group_concentration")
        return cls(
            m=int(data.get("m", defaults.m)),
            n_g=int(data.get("n_g", len(weights))),
            group_weights=tuple(weights),
            group_accuracy=tuple(accuracy),
            concentration=float(data.get("concentration", defaults.concentration)),
            group_concentration=None if group_concentration is None else tuple(group_concentration),
            runner_up_weight=float(data.get("runner_up_weight", defaults.runner_up_weight)),
            runner_up_fidelity=float(data.get("runner_up_fidelity", defaults.runner_up_fidelity)),
            n=int(data.get("n", defaults.n)),
            seed=int(data.get("seed", defaults.seed)),
        )


def calibrated_concentration(accuracy: Sequence[float], m: int = 10, runner_up_weight: float = 10.0) -> Tuple[float, ...]:
    """
    Per-group concentrations whose expected top probability equals the group accuracy
    (before the argmax swap), given the runner-up weight and unit weight elsewhere
    """
    rest = runner_up_weight + m - 2
    if any(not 0.0 < a < 1.0 for a in accuracy):
        raise SimulationError(f"accuracies must lie in (0, 1), got {tuple(accuracy)}")
    return tuple(round(a * rest / (1.0 - a), 4) for a in accuracy)


def _skip_two(draw: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Map draws in [0, m-2) onto [0, m) minus the two distinct classes a and b"""
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    out = draw + (draw >= lo)
    return out + (out >= hi)


def generate_task(spec: SyntheticTaskSpec) -> LabeledDataset:
    """Deterministic synthetic dataset; top-1 accuracy per group follows group_accuracy"""
    rng = np.random.default_rng(spec.seed)
    n, m = spec.n, spec.m
    accuracy = np.asarray(spec.group_accuracy)

    groups = rng.choice(spec.n_g, size=n, p=np.asarray(spec.group_weights))
    labels = rng.integers(0, m, size=n)
    correct = rng.uniform(size=n) < accuracy[groups]
    wrong = (labels + rng.integers(1, m, size=n)) % m
    center = np.where(correct, labels, wrong)

    # runner-up: another class for right predictions, usually the truth for wrong ones
    other = (center + rng.integers(1, m, size=n)) % m
    faithful = rng.uniform(size=n) < spec.runner_up_fidelity
    if m > 2:
        stray = _skip_two(rng.integers(0, m - 2, size=n), center, labels)
    else:
        stray = labels
    wrong_runner = np.where(faithful, labels, stray)
    runner = np.where(correct, other, wrong_runner)

    rows = np.arange(n)
    alpha = np.ones((n, m))
    alpha[rows, runner] = spec.runner_up_weight
    if spec.group_concentration is None:
        alpha[rows, center] = spec.concentration
    else:
        alpha[rows, center] = np.asarray(spec.group_concentration)[groups]
    draws = rng.standard_gamma(alpha)
    probs = draws / draws.sum(axis=1, keepdims=True)

    # the predicted class must be the argmax
    top = np.argmax(probs, axis=1)
    top_vals = probs[rows, top].copy()
    probs[rows, top] = probs[rows, center]
    probs[rows, center] = top_vals

    logger.info(
        "generated synthetic task: n=%d m=%d accuracy=%s seed=%d",
        n, m, spec.group_accuracy, spec.seed
    )
    return LabeledDataset.from_arrays(
        [f"syn{spec.seed}-{i}" for i in range(n)], probs, labels, groups, n_g=spec.n_g
    )
