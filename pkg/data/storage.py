"""
CSV / JSONL storage for probability datasets

CSV contract: header `example_id,group,label,p_0,...,p_{m-1}`, UTF-8, `.` decimal point.
JSONL contract: one object per line with keys example_id, group, label, probs.
Optional name sidecar: {"groups": [...], "classes": [...]}.
"""

import json
import logging
import os
import re
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from errors import DatasetParseError, DatasetValidationError
from .records import LabeledDataset, ProbRecord

logger = logging.getLogger(__name__)

FIXED_COLUMNS = ["example_id", "group", "label"]
FORMATS = ("csv", "jsonl")

_PANDAS_LINE = re.compile(r"line (\d+)")


def infer_format(path: str) -> str:
    """Pick csv/jsonl from the file extension"""
    ext = os.path.splitext(path)[1].lower()
    if ext in (".jsonl", ".ndjson"):
        return "jsonl"
    if ext == ".csv":
        return "csv"
    raise DatasetParseError(f"cannot infer dataset format from extension '{ext}'", path=path)


def load_names(path: str) -> Tuple[Optional[List[str]], Optional[List[str]]]:
    """Load the optional name sidecar; returns (class_names, group_names)"""
    with open(path, 'r', encoding='utf-8') as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetParseError(f"invalid name sidecar: {e.msg}", line=e.lineno, path=path)
    if not isinstance(data, dict):
        raise DatasetParseError("name sidecar must be a JSON object", path=path)
    classes = data.get("classes")
    groups = data.get("groups")
    return (
        [str(c) for c in classes] if classes is not None else None,
        [str(g) for g in groups] if groups is not None else None,
    )


def load_dataset(
    path: str,
    format: Optional[str] = None,
    names_path: Optional[str] = None,
    n_g: Optional[int] = None,
) -> LabeledDataset:
    """
    Load and validate a dataset. Row order is preserved.

    Raises DatasetParseError (with line number) for malformed rows and
    DatasetValidationError (listing example ids) for rows off the simplex.
    """
    fmt = format or infer_format(path)
    if fmt not in FORMATS:
        raise DatasetParseError(f"unknown dataset format '{fmt}'", path=path)
    if not os.path.exists(path):
        raise DatasetParseError("file does not exist", path=path)

    class_names, group_names = (None, None)
    if names_path is not None:
        class_names, group_names = load_names(names_path)
    if n_g is None and group_names is not None:
        n_g = len(group_names)

    if fmt == "csv":
        records, m = _read_csv(path)
    else:
        records, m = _read_jsonl(path)

    logger.info("loaded %d records (m=%s) from %s", len(records), m, path)
    if m is None:
        if class_names is None:
            raise DatasetParseError("cannot determine class count of an empty dataset", path=path)
        m = len(class_names)

    return LabeledDataset(records, m=m, n_g=n_g, class_names=class_names, group_names=group_names)


def _parse_int(text: str, column: str, line: int, path: str) -> int:
    try:
        return int(text)
    except (TypeError, ValueError):
        raise DatasetParseError(f"column '{column}' is not an integer: {text!r}", line=line, path=path)


def _parse_float(text: str, column: str, line: int, path: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise DatasetParseError(f"column '{column}' is not a number: {text!r}", line=line, path=path)


def _read_csv(path: str) -> Tuple[List[ProbRecord], Optional[int]]:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DatasetParseError("empty file, header missing", line=1, path=path)
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        raise DatasetParseError(f"malformed row: {e}", line=int(match.group(1)) if match else None, path=path)

    columns = list(frame.columns)
    if columns[:3] != FIXED_COLUMNS:
        raise DatasetParseError(
            f"header must start with {','.join(FIXED_COLUMNS)}, got {','.join(columns[:3])}",
            line=1, path=path
        )
    prob_columns = columns[3:]
    expected = [f"p_{i}" for i in range(len(prob_columns))]
    if not prob_columns or prob_columns != expected:
        raise DatasetParseError(f"probability columns must be p_0..p_{{m-1}}, got {prob_columns}", line=1, path=path)

    records = []
    for row_idx, row in enumerate(frame.itertuples(index=False, name=None)):
        line = row_idx + 2
        if any(not isinstance(v, str) for v in row):
            raise DatasetParseError(f"expected {len(columns)} fields", line=line, path=path)
        example_id = row[0]
        if example_id == "":
            raise DatasetParseError("empty example_id", line=line, path=path)
        group = _parse_int(row[1], "group", line, path)
        label = _parse_int(row[2], "label", line, path)
        probs = tuple(_parse_float(v, prob_columns[j], line, path) for j, v in enumerate(row[3:]))
        records.append(ProbRecord(example_id=example_id, probs=probs, label=label, group=group))

    return records, len(prob_columns)


def _read_jsonl(path: str) -> Tuple[List[ProbRecord], Optional[int]]:
    records = []
    m = None
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise DatasetParseError(f"invalid JSON: {e.msg}", line=line_no, path=path)
            if not isinstance(obj, dict):
                raise DatasetParseError("each line must be a JSON object", line=line_no, path=path)
            missing = [k for k in ("example_id", "group", "label", "probs") if k not in obj]
            if missing:
                raise DatasetParseError(f"missing keys {missing}", line=line_no, path=path)
            probs = obj["probs"]
            if not isinstance(probs, list) or not all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in probs):
                raise DatasetParseError("probs must be an array of numbers", line=line_no, path=path)
            if not isinstance(obj["group"], int) or not isinstance(obj["label"], int):
                raise DatasetParseError("group and label must be integers", line=line_no, path=path)
            if m is None:
                m = len(probs)
            elif len(probs) != m:
                raise DatasetParseError(f"expected {m} probabilities, got {len(probs)}", line=line_no, path=path)
            records.append(ProbRecord(
                example_id=str(obj["example_id"]),
                probs=tuple(float(p) for p in probs),
                label=obj["label"],
                group=obj["group"],
            ))
    return records, m


def save_dataset(ds: LabeledDataset, path: str, format: Optional[str] = None):
    """Write a dataset in the CSV or JSONL contract; floats use shortest round-trip repr"""
    fmt = format or infer_format(path)
    if fmt == "csv":
        header = FIXED_COLUMNS + [f"p_{i}" for i in range(ds.m)]
        rows = [
            [r.example_id, str(r.group), str(r.label)] + [repr(float(p)) for p in r.probs]
            for r in ds
        ]
        frame = pd.DataFrame(rows, columns=header, dtype=str)
        frame.to_csv(path, index=False, encoding='utf-8', lineterminator='\n')
    elif fmt == "jsonl":
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            for r in ds:
                f.write(json.dumps(r.to_dict()) + "\n")
    else:
        raise DatasetValidationError(f"unknown dataset format '{fmt}'")
    logger.info("wrote %d records to %s", len(ds), path)


def save_names(path: str, class_names: Optional[Sequence[str]], group_names: Optional[Sequence[str]]):
    data: Dict = {}
    if group_names is not None:
        data["groups"] = list(group_names)
    if class_names is not None:
        data["classes"] = list(class_names)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
