"""
Probability records, labeled datasets and split specifications
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DatasetValidationError, SplitError

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-6


class StratifyBy(Enum):
    """Strata used by deterministic splitting"""
    CLASS = "class"
    GROUP = "group"
    CLASS_AND_GROUP = "class-and-group"
    NONE = "none"


@dataclass(frozen=True)
class ProbRecord:
    """
    One example: classifier probabilities over m classes, true label and group
    """
    example_id: str
    probs: Tuple[float, ...]
    label: int
    group: int

    @property
    def m(self) -> int:
        return len(self.probs)

    def to_dict(self) -> Dict:
        return {
            "example_id": self.example_id,
            "group": self.group,
            "label": self.label,
            "probs": list(self.probs),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'ProbRecord':
        return cls(
            example_id=str(data["example_id"]),
            probs=tuple(float(p) for p in data["probs"]),
            label=int(data["label"]),
            group=int(data["group"]),
        )


def simplex_violations(probs: np.ndarray, tol: float = SIMPLEX_TOLERANCE) -> np.ndarray:
    """Boolean mask of rows that are off the probability simplex"""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None, :]
    negative = (probs < 0).any(axis=1)
    off_sum = np.abs(probs.sum(axis=1) - 1.0) > tol
    not_finite = ~np.isfinite(probs).all(axis=1)
    return negative | off_sum | not_finite


class LabeledDataset:
    """
    Immutable collection of ProbRecords sharing one class count.

    Probabilities are accepted as given: rows are checked against the simplex
    (tolerance 1e-6) but never renormalised.
    """

    def __init__(
        self,
        records: Sequence[ProbRecord],
        m: Optional[int] = None,
        n_g: Optional[int] = None,
        class_names: Optional[Sequence[str]] = None,
        group_names: Optional[Sequence[str]] = None,
    ):
        self._records: Tuple[ProbRecord, ...] = tuple(records)

        if m is None:
            if not self._records:
                raise DatasetValidationError("class count m is required for an empty dataset")
            m = self._records[0].m
        if n_g is None:
            n_g = (max(r.group for r in self._records) + 1) if self._records else 1

        self.m = int(m)
        self.n_g = int(n_g)
        self.class_names: Optional[Tuple[str, ...]] = tuple(class_names) if class_names is not None else None
        self.group_names: Optional[Tuple[str, ...]] = tuple(group_names) if group_names is not None else None

        self._probs: Optional[np.ndarray] = None
        self._labels: Optional[np.ndarray] = None
        self._groups: Optional[np.ndarray] = None

        self._validate()

    def _validate(self):
        if self.m < 1:
            raise DatasetValidationError(f"class count must be positive, got {self.m}")
        if self.n_g < 1:
            raise DatasetValidationError(f"group count must be positive, got {self.n_g}")

        wrong_width = [r.example_id for r in self._records if r.m != self.m]
        if wrong_width:
            raise DatasetValidationError(f"records without exactly m={self.m} probabilities", wrong_width)

        bad_label = [r.example_id for r in self._records if not 0 <= r.label < self.m]
        if bad_label:
            raise DatasetValidationError(f"labels outside [0, {self.m})", bad_label)

        bad_group = [r.example_id for r in self._records if not 0 <= r.group < self.n_g]
        if bad_group:
            raise DatasetValidationError(f"groups outside [0, {self.n_g})", bad_group)

        if self._records:
            off = simplex_violations(self.probs_matrix())
            if off.any():
                ids = [self._records[i].example_id for i in np.flatnonzero(off)]
                raise DatasetValidationError("probability rows off the simplex", ids)

        if self.group_names is not None and len(self.group_names) < self.n_g:
            raise DatasetValidationError(
                f"{len(self.group_names)} group names supplied for {self.n_g} groups"
            )
        if self.class_names is not None and len(self.class_names) < self.m:
            raise DatasetValidationError(
                f"{len(self.class_names)} class names supplied for {self.m} classes"
            )

        seen = set()
        duplicates = []
        for r in self._records:
            if r.example_id in seen:
                duplicates.append(r.example_id)
            seen.add(r.example_id)
        if duplicates:
            raise DatasetValidationError("duplicate example ids", duplicates)

    @classmethod
    def from_arrays(
        cls,
        example_ids: Sequence[str],
        probs: np.ndarray,
        labels: Sequence[int],
        groups: Sequence[int],
        n_g: Optional[int] = None,
        class_names: Optional[Sequence[str]] = None,
        group_names: Optional[Sequence[str]] = None,
    ) -> 'LabeledDataset':
        """Build a dataset from column arrays"""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 2:
            raise DatasetValidationError(f"probs must be 2-dimensional, got shape {probs.shape}")
        records = [
            ProbRecord(
                example_id=str(example_ids[i]),
                probs=tuple(probs[i].tolist()),
                label=int(labels[i]),
                group=int(groups[i]),
            )
            for i in range(probs.shape[0])
        ]
        return cls(records, m=probs.shape[1], n_g=n_g,
                   class_names=class_names, group_names=group_names)

    @property
    def records(self) -> Tuple[ProbRecord, ...]:
        return self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, index: int) -> ProbRecord:
        return self._records[index]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.m == other.m
            and self.n_g == other.n_g
            and self._records == other._records
        )

    def __repr__(self) -> str:
        return f"LabeledDataset(n={len(self)}, m={self.m}, n_g={self.n_g})"

    def probs_matrix(self) -> np.ndarray:
        """Read-only (n, m) probability matrix"""
        if self._probs is None:
            if self._records:
                matrix = np.array([r.probs for r in self._records], dtype=np.float64)
            else:
                matrix = np.zeros((0, self.m), dtype=np.float64)
            matrix.setflags(write=False)
            self._probs = matrix
        return self._probs

    def labels(self) -> np.ndarray:
        if self._labels is None:
            labels = np.array([r.label for r in self._records], dtype=np.int64)
            labels.setflags(write=False)
            self._labels = labels
        return self._labels

    def groups(self) -> np.ndarray:
        if self._groups is None:
            groups = np.array([r.group for r in self._records], dtype=np.int64)
            groups.setflags(write=False)
            self._groups = groups
        return self._groups

    def example_ids(self) -> List[str]:
        return [r.example_id for r in self._records]

    def group_counts(self) -> np.ndarray:
        """Number of records per group index"""
        return np.bincount(self.groups(), minlength=self.n_g)

    def top1_accuracy(self, group: Optional[int] = None) -> float:
        """Fraction of records whose argmax probability is the true label"""
        probs = self.probs_matrix()
        labels = self.labels()
        if group is not None:
            mask = self.groups() == group
            probs, labels = probs[mask], labels[mask]
        if len(labels) == 0:
            return float("nan")
        return float(np.mean(np.argmax(probs, axis=1) == labels))

    def subset(self, indices: Sequence[int]) -> 'LabeledDataset':
        """Dataset with the records at the given positions, in the given order"""
        return LabeledDataset(
            [self._records[i] for i in indices],
            m=self.m,
            n_g=self.n_g,
            class_names=self.class_names,
            group_names=self.group_names,
        )

    def group_name(self, group: int) -> str:
        if self.group_names is not None:
            return self.group_names[group]
        return str(group)


@dataclass(frozen=True)
class SplitSpec:
    """
    Fractions for the (calval, cal, test) splits plus stratification and seed
    """
    fractions: Tuple[float, float, float] = (0.2, 0.6, 0.2)
    stratify_by: StratifyBy = StratifyBy.NONE
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3:
            raise SplitError(f"expected three fractions (calval, cal, test), got {len(self.fractions)}")
        if any(f < 0 for f in self.fractions):
            raise SplitError(f"fractions must be non-negative, got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise SplitError(f"fractions must sum to 1, got {sum(self.fractions)}")
        if self.seed < 0:
            raise SplitError(f"seed must be unsigned, got {self.seed}")
        if not isinstance(self.stratify_by, StratifyBy):
            object.__setattr__(self, "stratify_by", StratifyBy(self.stratify_by))

    def to_dict(self) -> Dict:
        return {
            "fractions": list(self.fractions),
            "stratify_by": self.stratify_by.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'SplitSpec':
        return cls(
            fractions=tuple(float(f) for f in data.get("fractions", (0.2, 0.6, 0.2))),
            stratify_by=StratifyBy(data.get("stratify_by", StratifyBy.NONE.value)),
            seed=int(data.get("seed", 0)),
        )
