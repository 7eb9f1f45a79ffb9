"""
Counter-based uniform streams keyed by (seed, event, example_id)

Each draw is a pure function of its key, so results never depend on the
order in which records are processed or on how work is split across threads.
"""

import hashlib
from typing import Iterable, Optional

import numpy as np

CALIBRATE_EVENT = "calibrate"
PREDICT_EVENT = "predict"

_SCALE = float(2 ** 53)


def keyed_uniform(seed: int, event: str, key: str) -> float:
    """Uniform in [0, 1) derived from a 64-bit BLAKE2b digest of the key"""
    digest = hashlib.blake2b(f"{seed}\x1f{event}\x1f{key}".encode('utf-8'), digest_size=8).digest()
    return (int.from_bytes(digest, 'big') >> 11) / _SCALE


def uniform_stream(
    seed: int,
    example_ids: Iterable[str],
    event: str,
    label: Optional[int] = None,
) -> np.ndarray:
    """One uniform per example id; with `label` the key also includes that label"""
    suffix = "" if label is None else f"\x1e{label}"
    return np.array(
        [keyed_uniform(seed, event, f"{eid}{suffix}") for eid in example_ids],
        dtype=np.float64,
    )


def uniform_matrix(seed: int, example_ids: Iterable[str], event: str, m: int) -> np.ndarray:
    """(n, m) uniforms, one per (example id, label)"""
    ids = list(example_ids)
    out = np.empty((len(ids), m), dtype=np.float64)
    for j in range(m):
        out[:, j] = uniform_stream(seed, ids, event, label=j)
    return out
