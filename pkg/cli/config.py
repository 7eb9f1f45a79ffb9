"""
Run configuration

A run is described by a JSON document with nested sections; command-line
flags override its values. The effective configuration (without the
parallelism setting) is hashed and the hash is embedded in every output.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

from conformal import DEFAULT_MIN_GROUP_N, Method, ScoreConfig
from data import SplitSpec
from errors import ConfigError, ToolkitError
from simulation import HumanModel, SyntheticTaskSpec
from tuning import TuneSpec

logger = logging.getLogger(__name__)

DATASET_KEYS = ("cal", "calval", "test")
META_SUFFIX = ".meta.json"


@dataclass
class TaskConfig:
    """Either dataset paths or a synthetic task with its split"""
    cal: Optional[str] = None
    calval: Optional[str] = None
    test: Optional[str] = None
    format: Optional[str] = None
    names: Optional[str] = None
    n_g: Optional[int] = None
    synthetic: Optional[SyntheticTaskSpec] = None
    split: SplitSpec = field(default_factory=SplitSpec)

    @property
    def has_paths(self) -> bool:
        return any(getattr(self, key) for key in DATASET_KEYS)

    def to_dict(self) -> Dict:
        if self.synthetic is not None:
            return {"synthetic": self.synthetic.to_dict(), "split": self.split.to_dict()}
        return {
            "cal": self.cal, "calval": self.calval, "test": self.test,
            "format": self.format, "names": self.names, "n_g": self.n_g,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'TaskConfig':
        synthetic = data.get("synthetic")
        return cls(
            cal=data.get("cal"),
            calval=data.get("calval"),
            test=data.get("test"),
            format=data.get("format"),
            names=data.get("names"),
            n_g=data.get("n_g"),
            synthetic=SyntheticTaskSpec.from_dict(synthetic) if synthetic is not None else None,
            split=SplitSpec.from_dict(data.get("split", {})),
        )


@dataclass
class RunConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    method: Method = Method.MARGINAL
    score: ScoreConfig = field(default_factory=ScoreConfig)
    tune: TuneSpec = field(default_factory=TuneSpec)
    alpha: float = 0.1
    seed: int = 0
    output_dir: str = "runs"
    min_group_n: int = DEFAULT_MIN_GROUP_N
    k: Optional[float] = None
    force_nonempty: Optional[bool] = None
    human_model: Optional[HumanModel] = None
    participants: int = 400
    trials_per_participant: int = 40
    jobs: int = 1

    def nonempty_sets(self) -> bool:
        """Explicit setting, else the method default: only avg-k may return empty sets"""
        if self.force_nonempty is not None:
            return self.force_nonempty
        return self.method != Method.AVGK

    def validate(self):
        if self.task.has_paths and self.task.synthetic is not None:
            raise ConfigError("task needs exactly one of dataset paths or a synthetic task, got both")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.seed < 0:
            raise ConfigError(f"seed must be unsigned, got {self.seed}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be positive, got {self.jobs}")
        if self.participants < 1 or self.trials_per_participant < 1:
            raise ConfigError("participants and trials_per_participant must be positive")
        if self.force_nonempty is not None and not isinstance(self.force_nonempty, bool):
            raise ConfigError(f"calibration.force_nonempty must be a boolean, got {self.force_nonempty!r}")

    def to_dict(self) -> Dict:
        """Effective configuration; `jobs` is left out so it never changes the hash"""
        return {
            "task": self.task.to_dict(),
            "method": self.method.value,
            "score": self.score.to_dict(),
            "tune": self.tune.to_dict(),
            "alpha": self.alpha,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "calibration": {"min_group_n": self.min_group_n, "k": self.k, "force_nonempty": self.force_nonempty},
            "human_model": self.human_model.to_dict() if self.human_model is not None else None,
            "simulation": {
                "participants": self.participants,
                "trials_per_participant": self.trials_per_participant,
            },
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunConfig':
        calibration = data.get("calibration", {})
        simulation = data.get("simulation", {})
        human_model = data.get("human_model")
        defaults = cls()
        try:
            config = cls(
                task=TaskConfig.from_dict(data.get("task", {})),
                method=Method(data.get("method", defaults.method.value)),
                score=ScoreConfig.from_dict(data.get("score", {})),
                tune=TuneSpec.from_dict(data.get("tune", {})),
                alpha=float(data.get("alpha", defaults.alpha)),
                seed=int(data.get("seed", defaults.seed)),
                output_dir=str(data.get("output_dir", defaults.output_dir)),
                min_group_n=int(calibration.get("min_group_n", defaults.min_group_n)),
                k=calibration.get("k"),
                force_nonempty=calibration.get("force_nonempty"),
                human_model=HumanModel.from_dict(human_model) if human_model is not None else None,
                participants=int(simulation.get("participants", defaults.participants)),
                trials_per_participant=int(simulation.get("trials_per_participant", defaults.trials_per_participant)),
                jobs=int(data.get("jobs", defaults.jobs)),
            )
        except ToolkitError as e:
            raise ConfigError(f"invalid configuration: {e}")
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration value: {e}")
        return config


def load_config(path: Optional[str]) -> Dict:
    """Raw configuration document; an absent path gives an empty one"""
    if path is None:
        return {}
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def apply_overrides(data: Dict, overrides: Dict[str, Any]) -> Dict:
    """Flags win over file values; None means the flag was not given"""
    merged = json.loads(json.dumps(data))
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "score":
            merged.setdefault("score", {})["kind"] = value
        elif key == "k":
            merged.setdefault("calibration", {})["k"] = value
        else:
            merged[key] = value
    return merged


def resolve_config(path: Optional[str], overrides: Dict[str, Any]) -> RunConfig:
    config = RunConfig.from_dict(apply_overrides(load_config(path), overrides))
    config.validate()
    return config


def canonical_json(data: Dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'))


def config_hash(data: Dict) -> str:
    """MD5 of the canonical JSON of a configuration dict"""
    return hashlib.md5(canonical_json(data).encode('utf-8')).hexdigest()


def provenance(config: RunConfig) -> Dict:
    effective = config.to_dict()
    return {"config": effective, "config_hash": config_hash(effective), "seed": config.seed}


def write_json(path: str, payload: Dict, config: RunConfig):
    """JSON output with the provenance block; no timestamps, sorted keys"""
    data = dict(payload)
    data.update(provenance(config))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")
    logger.info("wrote %s", path)


def file_md5(path: str) -> str:
    digest = hashlib.md5()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_sidecar(path: str, config: RunConfig, rows: int):
    """Provenance for a CSV output, stored next to it"""
    write_json(path + META_SUFFIX, {"file": os.path.basename(path), "file_md5": file_md5(path), "rows": rows}, config)


def verify_output(path: str) -> Dict:
    """
    Re-derive the configuration hash embedded in an output. CSV outputs are
    checked through their sidecar, whose content checksum must also match.
    """
    meta_path = path if path.endswith(".json") else path + META_SUFFIX
    try:
        with open(meta_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"no provenance found for {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{meta_path}: invalid JSON: {e.msg}")
    if "config" not in data or "config_hash" not in data:
        raise ConfigError(f"{meta_path} carries no config hash")

    derived = config_hash(data["config"])
    result = {"path": path, "embedded": data["config_hash"], "derived": derived,
              "hash_ok": derived == data["config_hash"]}
    if meta_path != path:
        result["content_ok"] = file_md5(path) == data.get("file_md5")
    result["ok"] = result["hash_ok"] and result.get("content_ok", True)
    return result
