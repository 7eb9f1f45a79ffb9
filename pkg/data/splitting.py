"""
Deterministic (optionally stratified) calval / cal / test splitting
"""

import logging
import math
from typing import Dict, List, Tuple

import numpy as np

from errors import SplitError
from .records import LabeledDataset, SplitSpec, StratifyBy

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("calval", "cal", "test")


def allocate_counts(n: int, fractions: Tuple[float, float, float]) -> List[int]:
    """
    Split n items into len(fractions) integer counts, largest remainder first.

    Every count is within one item of n * fraction; ties go to the earlier split.
    """
    targets = [n * f for f in fractions]
    counts = [int(math.floor(t + 1e-9)) for t in targets]
    remainder = n - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(targets[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def _stratum_keys(ds: LabeledDataset, stratify_by: StratifyBy) -> np.ndarray:
    labels = ds.labels()
    groups = ds.groups()
    if stratify_by == StratifyBy.CLASS:
        return labels.copy()
    if stratify_by == StratifyBy.GROUP:
        return groups.copy()
    if stratify_by == StratifyBy.CLASS_AND_GROUP:
        return labels * ds.n_g + groups
    return np.zeros(len(ds), dtype=np.int64)


def split(ds: LabeledDataset, spec: SplitSpec) -> Tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """
    Partition ds into (calval, cal, test).

    The partition is exhaustive and disjoint, identical for identical seeds,
    and each stratum contributes within one record of its target share to
    every split. Every split with a nonzero fraction gets at least one record
    of every stratum, or the split fails.
    Records keep their original relative order inside a split.
    """
    keys = _stratum_keys(ds, spec.stratify_by)
    rng = np.random.default_rng(spec.seed)
    needed = sum(1 for f in spec.fractions if f > 0)

    assignment = np.full(len(ds), -1, dtype=np.int64)
    per_stratum: Dict[int, List[int]] = {}

    for key in np.unique(keys):
        members = np.flatnonzero(keys == key)
        if len(members) < needed:
            raise SplitError(
                f"stratum {int(key)} ({spec.stratify_by.value}) has {len(members)} records, "
                f"needs at least {needed} for the nonzero fractions {spec.fractions}"
            )
        counts = allocate_counts(len(members), spec.fractions)
        starved = [SPLIT_NAMES[i] for i, (f, c) in enumerate(zip(spec.fractions, counts)) if f > 0 and c == 0]
        if starved:
            raise SplitError(
                f"stratum {int(key)} ({spec.stratify_by.value}) has {len(members)} records, "
                f"too few to give {', '.join(starved)} a record under fractions {spec.fractions}"
            )
        shuffled = members[rng.permutation(len(members))]
        start = 0
        for split_idx, count in enumerate(counts):
            assignment[shuffled[start:start + count]] = split_idx
            start += count
        per_stratum[int(key)] = counts

    logger.debug("split allocation per stratum: %s", per_stratum)

    parts = tuple(ds.subset(np.flatnonzero(assignment == i).tolist()) for i in range(3))
    logger.info(
        "split %d records into calval=%d cal=%d test=%d (stratify=%s, seed=%d)",
        len(ds), len(parts[0]), len(parts[1]), len(parts[2]), spec.stratify_by.value, spec.seed
    )
    return parts
