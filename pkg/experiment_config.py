"""
Experiment configuration: typed sections loaded from JSON presets in
configs/, command-line overrides by flat key path, and validation that names
the offending key.
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import List, Optional

from artifacts import content_hash
from errors import ConfigError, MissingArtifactError
from grid_env import VARIANTS as GRID_VARIANTS, GridSpec, build_env
from q_learner import KINDS, VARIANTS, TrainSchedule

log = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).resolve().parent / "configs"
NEGATIVE_MODES = ("random", "unreachable")


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass
class EnvConfig:
    width: int = 11
    height: int = 11
    variant: str = "four_rooms"
    walls: Optional[List[List[int]]] = None
    H_max: int = 50

    def validate(self):
        for name in ("width", "height", "H_max"):
            if not _is_int(getattr(self, name)) or getattr(self, name) < 1:
                raise ConfigError(f"env.{name}", "must be a positive integer")
        if self.width * self.height < 4:
            raise ConfigError("env.width", "grid must have at least 4 cells")
        if self.variant not in GRID_VARIANTS:
            raise ConfigError("env.variant", f"must be one of {', '.join(GRID_VARIANTS)}")
        if self.walls is not None:
            for i, cell in enumerate(self.walls):
                if not (isinstance(cell, list) and len(cell) == 2 and all(_is_int(c) for c in cell)):
                    raise ConfigError(f"env.walls[{i}]", "must be an [x, y] pair of integers")
                x, y = cell
                if not (0 <= x < self.width and 0 <= y < self.height):
                    raise ConfigError(f"env.walls[{i}]", "lies outside the grid")
        self.build()

    def grid_spec(self):
        walls = None if self.walls is None else frozenset(tuple(c) for c in self.walls)
        return GridSpec(self.width, self.height, self.variant, walls)

    def build(self):
        try:
            return build_env(self.grid_spec(), self.H_max)
        except ValueError as exc:
            raise ConfigError("env", str(exc)) from None


@dataclass
class DatasetConfig:
    n_expert: int = 100
    n_random: int = 400
    noise: float = 0.1
    seed: Optional[int] = None

    def validate(self):
        for name in ("n_expert", "n_random"):
            if not _is_int(getattr(self, name)) or getattr(self, name) < 0:
                raise ConfigError(f"dataset.{name}", "must be a non-negative integer")
        if self.n_expert + self.n_random == 0:
            raise ConfigError("dataset.n_expert", "dataset must contain at least one trajectory")
        if not _is_number(self.noise) or not 0.0 <= self.noise <= 1.0:
            raise ConfigError("dataset.noise", "must lie in [0, 1]")
        if self.seed is not None and (not _is_int(self.seed) or self.seed < 0):
            raise ConfigError("dataset.seed", "must be a non-negative integer or null")


@dataclass
class ScheduleConfig:
    updates: int = 100_000
    batch_size: int = 64
    learning_rate: float = 0.25
    rho: float = 0.5
    her_ratio: float = 0.5

    def schedule(self, rng_seed=0):
        return TrainSchedule(self.updates, self.batch_size, float(self.learning_rate),
                             float(self.rho), float(self.her_ratio), rng_seed)

    def validate(self, prefix):
        for name in ("learning_rate", "rho", "her_ratio"):
            if not _is_number(getattr(self, name)):
                raise ConfigError(f"{prefix}.{name}", "must be a number")
        self.schedule().validate(prefix)


@dataclass
class TrainConfig(ScheduleConfig):
    updates: int = 50_000
    learner_kind: str = "dataset_constrained"
    warm_start: bool = False

    def validate(self, prefix="train"):
        super().validate(prefix)
        if self.learner_kind not in KINDS:
            raise ConfigError(f"{prefix}.learner_kind", f"must be one of {', '.join(KINDS)}")
        if not isinstance(self.warm_start, bool):
            raise ConfigError(f"{prefix}.warm_start", "must be true or false")


@dataclass
class BufferConfig:
    capacity: Optional[int] = None
    alpha: float = 1.0
    eps: float = 1e-3

    def validate(self):
        if self.capacity is not None and (not _is_int(self.capacity) or self.capacity < 1):
            raise ConfigError("buffer.capacity", "must be a positive integer or null")
        for name in ("alpha", "eps"):
            value = getattr(self, name)
            if not _is_number(value) or value <= 0:
                raise ConfigError(f"buffer.{name}", "must be a positive number")


@dataclass
class EvalConfig:
    episodes: int = 50
    seeds: List[int] = field(default_factory=lambda: list(range(1, 11)))

    def validate(self):
        if not _is_int(self.episodes) or self.episodes < 1:
            raise ConfigError("eval.episodes", "must be a positive integer")
        if not isinstance(self.seeds, list) or not self.seeds:
            raise ConfigError("eval.seeds", "must be a non-empty list")
        for i, s in enumerate(self.seeds):
            if not _is_int(s) or s < 0:
                raise ConfigError(f"eval.seeds[{i}]", "must be a non-negative integer")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("eval.seeds", "must not repeat")


@dataclass
class AnalysisConfig:
    n_per_class: int = 2000
    bins: int = 25
    negatives: str = "random"
    logistic_steps: int = 2000
    logistic_lr: float = 0.5

    def validate(self):
        if not _is_int(self.n_per_class) or self.n_per_class < 1:
            raise ConfigError("analysis.n_per_class", "must be a positive integer")
        if not _is_int(self.bins) or self.bins < 2:
            raise ConfigError("analysis.bins", "must be an integer >= 2")
        if self.negatives not in NEGATIVE_MODES:
            raise ConfigError("analysis.negatives", f"must be one of {', '.join(NEGATIVE_MODES)}")
        if not _is_int(self.logistic_steps) or self.logistic_steps < 1:
            raise ConfigError("analysis.logistic_steps", "must be a positive integer")
        if not _is_number(self.logistic_lr) or self.logistic_lr <= 0:
            raise ConfigError("analysis.logistic_lr", "must be a positive number")


_SECTIONS = {
    "env": EnvConfig,
    "dataset": DatasetConfig,
    "pretrain": ScheduleConfig,
    "train": TrainConfig,
    "buffer": BufferConfig,
    "eval": EvalConfig,
    "analysis": AnalysisConfig,
}


@dataclass
class ExperimentConfig:
    """
    Everything one run needs: environment, data mix, schedules, buffer,
    evaluation protocol and the master seed every random stream derives from.
    """
    name: str = "custom"
    seed: int = 0
    jobs: int = 1
    output_dir: str = "runs/custom"
    variants: List[str] = field(default_factory=lambda: list(VARIANTS))
    env: EnvConfig = field(default_factory=EnvConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    pretrain: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    buffer: BufferConfig = field(default_factory=BufferConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    @property
    def dataset_seed(self):
        return self.seed if self.dataset.seed is None else self.dataset.seed

    def validate(self):
        if not isinstance(self.name, str) or not self.name:
            raise ConfigError("name", "must be a non-empty string")
        if not _is_int(self.seed) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if not _is_int(self.jobs) or self.jobs < 1:
            raise ConfigError("jobs", "must be a positive integer")
        if not isinstance(self.output_dir, str) or not self.output_dir:
            raise ConfigError("output_dir", "must be a non-empty path")
        if not isinstance(self.variants, list) or not self.variants:
            raise ConfigError("variants", "must be a non-empty list")
        for i, v in enumerate(self.variants):
            if v not in VARIANTS:
                raise ConfigError(f"variants[{i}]", f"must be one of {', '.join(VARIANTS)}")
        self.env.validate()
        self.dataset.validate()
        self.pretrain.validate("pretrain")
        self.train.validate("train")
        self.buffer.validate()
        self.eval.validate()
        self.analysis.validate()
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        """
        Build and validate a config from nested dicts.

        Missing keys take their defaults; unknown keys raise ConfigError.
        """
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        _reject_unknown(data, {f.name for f in fields(cls)}, "")
        kwargs = {}
        for key, value in data.items():
            section = _SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigError(key, "must be an object")
            _reject_unknown(value, {f.name for f in fields(section)}, key + ".")
            kwargs[key] = section(**value)
        return cls(**kwargs).validate()

    def hash(self, *sections):
        """Content hash of the named sections, or of the whole config."""
        d = self.to_dict()
        return content_hash(*(d[s] for s in sections)) if sections else content_hash(d)

    def with_overrides(self, **changes):
        return replace(copy.deepcopy(self), **changes).validate()


def _reject_unknown(data, known, prefix):
    for key in data:
        if key not in known:
            raise ConfigError(prefix + key, "unknown key")


def parse_override(text):
    """
    Split "a.b.c=value" into (["a", "b", "c"], value).

    The value is parsed as JSON and falls back to the raw string.
    """
    if "=" not in text:
        raise ConfigError(text, "override must look like key.path=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(text, "override has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(data, overrides):
    """Apply "key.path=value" overrides to a raw config dict (returns a copy)."""
    data = copy.deepcopy(data)
    for text in overrides or ():
        path, value = parse_override(text)
        node = data
        for i, part in enumerate(path[:-1]):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(".".join(path[:i + 1]), "is not a section")
            node = child
        node[path[-1]] = value
    return data


class PresetManager:
    """
    Bundled experiment presets, one JSON file per preset in the preset directory.

    Args:
        preset_dir (str or Path): Directory holding <name>.json files
    """
    def __init__(self, preset_dir=PRESET_DIR):
        self.preset_dir = Path(preset_dir)
        self.default_preset = "desk_four_rooms"
        self.presets = {}
        self._load_presets()

    def _load_presets(self):
        if not self.preset_dir.is_dir():
            log.warning("Preset directory %s not found", self.preset_dir)
            return
        for path in sorted(self.preset_dir.glob("*.json")):
            try:
                with open(path, "r", encoding="utf-8") as f:
                    self.presets[path.stem] = json.load(f)
            except json.JSONDecodeError as exc:
                log.warning("Skipping preset %s: invalid JSON (%s)", path.name, exc)
        if self.default_preset not in self.presets and self.presets:
            self.default_preset = next(iter(self.presets))
            log.warning("Default preset not found, using '%s' instead", self.default_preset)

    def get_preset_names(self):
        return list(self.presets)

    def get_default_preset_name(self):
        return self.default_preset

    def get_preset(self, name=None):
        """Raw dict of a preset; the default preset when name is None."""
        name = name or self.default_preset
        if name not in self.presets:
            raise ConfigError("config", f"unknown preset '{name}' (known: {', '.join(self.presets) or 'none'})")
        return copy.deepcopy(self.presets[name])


def load_config(source=None, overrides=None, seed=None, output_dir=None, jobs=None, presets=None):
    """
    Resolve a preset name or JSON file into a validated ExperimentConfig.

    Args:
        source (str, optional): Preset name or path to a JSON file; default preset if None
        overrides (list, optional): "key.path=value" strings
        seed (int, optional): Master seed override
        output_dir (str, optional): Output directory override
        jobs (int, optional): Worker count override
        presets (PresetManager, optional): Preset lookup

    Returns:
        ExperimentConfig: Validated configuration
    """
    presets = presets or PresetManager()
    if source is not None and (source.endswith(".json") or Path(source).is_file()):
        path = Path(source)
        if not path.is_file():
            raise MissingArtifactError(path, "config file")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path}: invalid JSON ({exc})") from None
    else:
        data = presets.get_preset(source)
    data = apply_overrides(data, overrides)
    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    if jobs is not None:
        data["jobs"] = jobs
    return ExperimentConfig.from_dict(data)
