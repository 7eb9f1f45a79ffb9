"""
Shared exception hierarchy for the conformal fairness toolkit
"""

from typing import List, Optional, Sequence


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit"""

    # CLI exit code when this error reaches the top level
    exit_code = 2


class DatasetParseError(ToolkitError):
    """Malformed input row"""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}"
        if line is not None:
            location += f":{line}" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)


class DatasetValidationError(ToolkitError):
    """Records that parse but break the dataset invariants"""

    def __init__(self, message: str, example_ids: Sequence[str] = ()):
        self.example_ids: List[str] = list(example_ids)
        if self.example_ids:
            shown = ", ".join(self.example_ids[:10])
            more = f" (+{len(self.example_ids) - 10} more)" if len(self.example_ids) > 10 else ""
            message = f"{message}: {shown}{more}"
        super().__init__(message)


class SplitError(ToolkitError):
    pass


class ScoreError(ToolkitError):
    pass


class LabelIndexError(ScoreError, IndexError):
    """Candidate label outside [0, m)"""


class CalibrationError(ToolkitError):
    pass


class InsufficientGroupError(CalibrationError):
    """A group has too few calibration records for Mondrian calibration"""

    def __init__(self, group: int, count: int, minimum: int, group_name: Optional[str] = None):
        self.group = group
        self.count = count
        self.minimum = minimum
        label = f"{group} ({group_name})" if group_name else f"{group}"
        super().__init__(
            f"group {label} has {count} calibration records, fewer than min_group_n={minimum}"
        )


class PredictionError(ToolkitError):
    """Set prediction failed for one record"""

    def __init__(self, message: str, example_id: Optional[str] = None):
        self.example_id = example_id
        if example_id is not None:
            message = f"{message} (example_id={example_id})"
        super().__init__(message)


class TuningError(ToolkitError):
    pass


class AuditError(ToolkitError):
    pass


class SimulationError(ToolkitError):
    pass


class DesignError(ToolkitError):
    """Degenerate design matrix"""

    def __init__(self, message: str, term: Optional[str] = None):
        self.term = term
        if term is not None:
            message = f"{message}: {term}"
        super().__init__(message)


class FitError(ToolkitError):
    pass


class ConfigError(ToolkitError):
    pass
