"""
Simulated set-assisted decision-makers

Decision rule per trial, for a participant with skill u on the record's group:
  - unaided (control arm, or not relying on the set with probability 1 - r):
    correct with probability u
  - relying on the set (probability r): correct with probability
    u + (1 - u) / s when the truth is in the set of size s, else never
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from data import LabeledDataset
from errors import DatasetParseError, SimulationError

logger = logging.getLogger(__name__)

N_TRIAL_SEEDS = 10
RESPONSE_COLUMNS = ["participant_id", "trial_id", "treatment", "group", "diff", "correct", "chosen_in_set"]

# SeedSequence stream tags
_TRIAL_STREAM = 1
_PARTICIPANT_STREAM = 2


class Treatment(Enum):
    CONTROL = "control"
    AVGK = "avgk"
    MARGINAL = "marginal"
    CONDITIONAL = "conditional"


@dataclass(frozen=True)
class HumanModel:
    skill: Tuple[float, ...] = (0.65, 0.55)
    reliance: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "skill", tuple(float(s) for s in self.skill))
        if not 0.0 <= self.reliance <= 1.0:
            raise SimulationError(f"reliance must lie in [0, 1], got {self.reliance}")
        if any(not 0.0 < s < 1.0 for s in self.skill):
            raise SimulationError(f"skills must lie in (0, 1), got {self.skill}")

    def skill_for(self, group: int) -> float:
        if not 0 <= group < len(self.skill):
            raise SimulationError(f"no skill configured for group {group}")
        return self.skill[group]

    def to_dict(self) -> Dict:
        return {"skill": list(self.skill), "reliance": self.reliance, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: Dict) -> 'HumanModel':
        defaults = cls()
        return cls(
            skill=tuple(data.get("skill", defaults.skill)),
            reliance=float(data.get("reliance", defaults.reliance)),
            seed=int(data.get("seed", defaults.seed)),
        )


@dataclass(frozen=True)
class TrialResponse:
    participant_id: int
    trial_id: str
    treatment: Treatment
    group: int
    diff: int
    correct: bool
    chosen_in_set: Optional[bool] = None

    def __post_init__(self):
        if not isinstance(self.treatment, Treatment):
            object.__setattr__(self, "treatment", Treatment(self.treatment))
        if self.diff < 1:
            raise SimulationError(f"diff must be at least 1, got {self.diff} (trial {self.trial_id})")
        if self.treatment == Treatment.CONTROL and self.chosen_in_set is not None:
            raise SimulationError(f"control trial {self.trial_id} cannot record chosen_in_set")


def _trial_sample(seed: int, seed_index: int, n_records: int, trials: int) -> np.ndarray:
    rng = np.random.default_rng([seed, _TRIAL_STREAM, seed_index])
    return rng.choice(n_records, size=trials, replace=False)


def _index_sets(sets: Sequence) -> Dict[str, object]:
    return {s.example_id: s for s in sets}


def simulate_responses(
    sets_by_treatment: Mapping[Treatment, Optional[Sequence]],
    ds: LabeledDataset,
    hm: HumanModel,
    participants: int,
    trials_per_participant: int,
) -> List[TrialResponse]:
    """
    Participants are assigned round-robin to the treatments present (in
    Treatment order) and each sees the records of one of 10 fixed trial
    samples. diff is always the marginal set size of the record.
    """
    if Treatment.CONTROL not in sets_by_treatment:
        raise SimulationError("a control arm is required")
    if Treatment.MARGINAL not in sets_by_treatment or not sets_by_treatment[Treatment.MARGINAL]:
        raise SimulationError("marginal sets are required for the difficulty covariate")
    if trials_per_participant > len(ds):
        raise SimulationError(f"{trials_per_participant} trials requested from {len(ds)} records")
    if participants < 1 or trials_per_participant < 1:
        raise SimulationError("participants and trials_per_participant must be positive")

    arms = [t for t in Treatment if t in sets_by_treatment]
    indexed = {t: _index_sets(sets_by_treatment[t] or ()) for t in arms}
    marginal = indexed[Treatment.MARGINAL]
    samples = [_trial_sample(hm.seed, s, len(ds), trials_per_participant) for s in range(N_TRIAL_SEEDS)]
    m = ds.m

    responses: List[TrialResponse] = []
    for pid in range(participants):
        arm = arms[pid % len(arms)]
        sample = samples[(pid // len(arms)) % N_TRIAL_SEEDS]
        rng = np.random.default_rng([hm.seed, _PARTICIPANT_STREAM, pid])
        draws = rng.uniform(size=(len(sample), 3))

        for (rely_u, correct_u, answer_u), idx in zip(draws, sample):
            rec = ds[int(idx)]
            if rec.example_id not in marginal:
                raise SimulationError(f"no marginal set for record {rec.example_id}")
            diff = marginal[rec.example_id].size
            u = hm.skill_for(rec.group)

            if arm == Treatment.CONTROL:
                responses.append(TrialResponse(pid, rec.example_id, arm, rec.group, diff, bool(correct_u < u)))
                continue

            shown = indexed[arm].get(rec.example_id)
            if shown is None:
                raise SimulationError(f"no {arm.value} set for record {rec.example_id}")

            if rely_u < hm.reliance:
                if shown.covered:
                    correct = correct_u < u + (1.0 - u) / shown.size
                else:
                    correct = False
                chosen = shown.size > 0
            else:
                correct = correct_u < u
                if correct:
                    chosen = shown.covered
                else:
                    # wrong unaided answer: uniform over the other labels
                    wrong = int(answer_u * (m - 1))
                    answer = wrong + (wrong >= rec.label)
                    chosen = answer in shown.members
            responses.append(TrialResponse(pid, rec.example_id, arm, rec.group, diff, bool(correct), bool(chosen)))

    logger.info("simulated %d responses from %d participants over %d arms",
                len(responses), participants, len(arms))
    return responses


def expected_group_accuracy(sets: Sequence, hm: HumanModel, n_g: int) -> Dict[int, float]:
    """
    Closed-form expected accuracy per group when shown these sets:
    (1 - r) u + r E[covered (u + (1 - u) / s)]
    """
    totals = np.zeros(n_g)
    counts = np.zeros(n_g, dtype=np.int64)
    for s in sets:
        u = hm.skill_for(s.group)
        totals[s.group] += (u + (1.0 - u) / s.size) if s.covered else 0.0
        counts[s.group] += 1
    out = {}
    for g in range(n_g):
        if counts[g] == 0:
            raise SimulationError(f"no sets for group {g}")
        u = hm.skill_for(g)
        out[g] = float((1.0 - hm.reliance) * u + hm.reliance * totals[g] / counts[g])
    return out


def expected_group_adoption(sets: Sequence, hm: HumanModel, n_g: int, m: int) -> Dict[int, float]:
    """
    Closed-form expected adoption per group: a relying participant always
    answers from a nonempty set; an unaided wrong answer lands in the set
    with probability (s - covered) / (m - 1).
    """
    totals = np.zeros(n_g)
    counts = np.zeros(n_g, dtype=np.int64)
    for s in sets:
        u = hm.skill_for(s.group)
        covered = 1.0 if s.covered else 0.0
        unaided = u * covered + (1.0 - u) * (s.size - covered) / (m - 1)
        totals[s.group] += hm.reliance * (s.size > 0) + (1.0 - hm.reliance) * unaided
        counts[s.group] += 1
    if np.any(counts == 0):
        raise SimulationError(f"no sets for groups {np.flatnonzero(counts == 0).tolist()}")
    return {g: float(totals[g] / counts[g]) for g in range(n_g)}


def expected_improvements(sets: Sequence, hm: HumanModel, n_g: int) -> Dict[int, float]:
    """Expected accuracy gain over the unaided skill, per group"""
    expected = expected_group_accuracy(sets, hm, n_g)
    return {g: expected[g] - hm.skill_for(g) for g in range(n_g)}


def responses_to_frame(responses: Sequence[TrialResponse]) -> pd.DataFrame:
    rows = [
        [r.participant_id, r.trial_id, r.treatment.value, r.group, r.diff, int(r.correct),
         "" if r.chosen_in_set is None else int(r.chosen_in_set)]
        for r in responses
    ]
    return pd.DataFrame(rows, columns=RESPONSE_COLUMNS)


def frame_to_responses(frame: pd.DataFrame) -> List[TrialResponse]:
    if list(frame.columns) != RESPONSE_COLUMNS:
        raise DatasetParseError(f"response columns must be {','.join(RESPONSE_COLUMNS)}", line=1)
    out = []
    for idx, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            chosen = str(row.chosen_in_set).strip()
            out.append(TrialResponse(
                participant_id=int(row.participant_id),
                trial_id=str(row.trial_id),
                treatment=Treatment(str(row.treatment)),
                group=int(row.group),
                diff=int(row.diff),
                correct=str(row.correct).strip() in ("1", "True", "true"),
                chosen_in_set=None if chosen == "" else chosen in ("1", "True", "true"),
            ))
        except (ValueError, SimulationError) as e:
            raise DatasetParseError(f"bad response row: {e}", line=idx)
    return out


def write_responses_csv(responses: Sequence[TrialResponse], path: str):
    """`participant_id,trial_id,treatment,group,diff,correct,chosen_in_set`"""
    responses_to_frame(responses).to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    logger.info("wrote %d responses to %s", len(responses), path)


def read_responses_csv(path: str) -> List[TrialResponse]:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DatasetParseError(f"malformed response file: {e}", path=path)
    try:
        return frame_to_responses(frame)
    except DatasetParseError as e:
        raise DatasetParseError(str(e), line=e.line, path=path)
