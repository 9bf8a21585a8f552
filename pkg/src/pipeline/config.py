"""Run configuration.

Loaded from YAML with ``yaml.safe_load``; since YAML is a superset of JSON
a JSON file works too. Every section is a frozen dataclass and every
unknown or out-of-range key raises ConfigError naming it.
"""
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from src.controller.controller import ControllerConfig
from src.core.errors import ConfigError, EpisodeSmithError, SplitError
from src.data.splits import DEFAULT_RATIOS, parse_ratios
from src.decoders.episodic import DecoderKind
from src.decoders.mct import MAX_ITERATIONS, MctConfig
from src.decoders.prototypes import DistanceMode
from src.encoder.training import TrainHyper

PROVIDERS = ("mlp", "identity")
DATASET_KINDS = ("image", "embedding")


def _require(condition: bool, key: str, message: str):
    if not condition:
        raise ConfigError(f"{key}: {message}")


@dataclass(frozen=True)
class DatasetConfig:
    path: str = ""
    kind: str = "embedding"

    def validate(self, key: str):
        _require(self.kind in DATASET_KINDS, f"{key}.kind", f"must be one of {DATASET_KINDS}, got '{self.kind}'")


@dataclass(frozen=True)
class SplitConfig:
    ratios: tuple[int, int, int] = DEFAULT_RATIOS

    def validate(self, key: str):
        try:
            object.__setattr__(self, "ratios", parse_ratios(self.ratios))
        except SplitError as e:
            raise ConfigError(f"{key}.ratios: {e}") from e


@dataclass(frozen=True)
class WorkerSpec:
    provider: str = "mlp"
    hidden_dims: tuple[int, ...] = (256, 128)
    embedding_dim: int = 64
    learning_rate: float = 0.05
    alpha: float = 0.5
    way: int = 10
    shot: int = 4
    epochs_per_round: int = 1
    batches_per_epoch: int = 10

    def validate(self, key: str):
        _require(self.provider in PROVIDERS, f"{key}.provider", f"must be one of {PROVIDERS}, got '{self.provider}'")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        _require(all(h > 0 for h in self.hidden_dims), f"{key}.hidden_dims", "must all be positive")
        _require(self.embedding_dim > 0, f"{key}.embedding_dim", "must be positive")
        try:
            self.train_hyper()
        except EpisodeSmithError as e:
            raise ConfigError(f"{key}: {e}") from e

    def train_hyper(self) -> TrainHyper:
        return TrainHyper(learning_rate=self.learning_rate, alpha=self.alpha, epochs_per_round=self.epochs_per_round,
                          batches_per_epoch=self.batches_per_epoch, way=self.way, shot=self.shot)


@dataclass(frozen=True)
class ValidationConfig:
    episodes: int = 100
    way: int = 5
    shot: int = 1
    query: int = 15
    decoder: str = DecoderKind.PROTONET.value

    def validate(self, key: str):
        _require(self.episodes > 0 and self.shot > 0 and self.query > 0, key, "episodes, shot and query must be positive")
        _require(self.way >= 2, f"{key}.way", "must be >= 2")
        _require(self.decoder in {k.value for k in DecoderKind}, f"{key}.decoder",
                 f"must be 'protonet' or 'mct', got '{self.decoder}'")


@dataclass(frozen=True)
class DecoderConfig:
    mct_steps: int = 10
    convergence_eps: float = 1e-6
    distance: str = DistanceMode.SQUARED_EUCLIDEAN.value

    def validate(self, key: str):
        _require(0 <= self.mct_steps <= MAX_ITERATIONS, f"{key}.mct_steps", f"must lie in [0, {MAX_ITERATIONS}]")
        _require(self.convergence_eps >= 0, f"{key}.convergence_eps", "must be >= 0")
        try:
            object.__setattr__(self, "distance", DistanceMode.parse(self.distance).value)
        except ValueError:
            raise ConfigError(f"{key}.distance: unknown distance '{self.distance}'")

    def mct(self) -> MctConfig:
        return MctConfig(self.mct_steps, self.convergence_eps, DistanceMode.parse(self.distance))


@dataclass(frozen=True)
class EnsembleConfig:
    train_episodes: int = 200
    test_episodes: int = 100
    fraction: float = 0.5
    query: int = 5
    iterations: int = 500
    learning_rate: float = 0.1
    l2: float = 1e-3

    def validate(self, key: str):
        _require(self.train_episodes > 0 and self.test_episodes > 0 and self.query > 0, key,
                 "episode counts and query must be positive")
        _require(0.0 < self.fraction < 1.0, f"{key}.fraction", "must lie in (0, 1)")
        _require(self.iterations >= 0 and self.learning_rate > 0 and self.l2 >= 0, key,
                 "iterations >= 0, learning_rate > 0 and l2 >= 0 required")


@dataclass(frozen=True)
class EvaluationConfig:
    episodes: int = 600
    way: int = 5
    shot: int = 1
    query: int = 19
    seed: Optional[int] = None

    def validate(self, key: str):
        _require(self.episodes > 0 and self.shot > 0 and self.query > 0, key, "episodes, shot and query must be positive")
        _require(self.way >= 2, f"{key}.way", "must be >= 2")


@dataclass(frozen=True)
class ControllerSection:
    buffer_capacity: int = 4
    max_rounds: Optional[int] = None
    ewma_decay: float = 0.3
    safety_factor: float = 1.2
    poll_interval: float = 0.05

    def validate(self, key: str):
        _require(self.buffer_capacity >= 1, f"{key}.buffer_capacity", "must be >= 1")
        _require(self.max_rounds is None or self.max_rounds >= 1, f"{key}.max_rounds", "must be >= 1")
        _require(0.0 < self.ewma_decay <= 1.0, f"{key}.ewma_decay", "must lie in (0, 1]")
        _require(self.safety_factor >= 1.0, f"{key}.safety_factor", "must be >= 1")
        _require(0.0 < self.poll_interval <= 0.1, f"{key}.poll_interval", "must lie in (0, 0.1]")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    workers: tuple[WorkerSpec, ...] = (WorkerSpec(),)
    validation: ValidationConfig = field(default_factory=ValidationConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    controller: ControllerSection = field(default_factory=ControllerSection)
    seed: int = 0
    budget_seconds: float = 7200.0
    reserve_fraction: float = 0.15

    def validate(self):
        _require(len(self.workers) >= 1, "workers", "at least one worker is required")
        _require(self.budget_seconds > 0, "budget_seconds", "must be positive")
        _require(0.0 <= self.reserve_fraction < 1.0, "reserve_fraction", "must lie in [0, 1)")
        self.dataset.validate("dataset")
        self.split.validate("split")
        for i, worker in enumerate(self.workers):
            worker.validate(f"workers[{i}]")
        self.validation.validate("validation")
        self.decoder.validate("decoder")
        self.ensemble.validate("ensemble")
        self.evaluation.validate("evaluation")
        self.controller.validate("controller")
        return self

    @property
    def reserve_seconds(self) -> float:
        return self.budget_seconds * self.reserve_fraction

    @property
    def evaluation_seed(self) -> int:
        return self.seed if self.evaluation.seed is None else self.evaluation.seed

    def controller_config(self) -> ControllerConfig:
        c = self.controller
        return ControllerConfig(reserve=self.reserve_seconds, buffer_capacity=c.buffer_capacity,
                                max_rounds=c.max_rounds, poll_interval=c.poll_interval,
                                ewma_decay=c.ewma_decay, safety_factor=c.safety_factor)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def with_overrides(self, **overrides) -> "RunConfig":
        """Apply CLI overrides; keys are 'section.field' or top-level names, None values are ignored"""
        config = self
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            if name:
                config = dataclasses.replace(config, **{section: dataclasses.replace(getattr(config, section),
                                                                                      **{name: value})})
            else:
                config = dataclasses.replace(config, **{section: value})
        return config.validate()


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _build_section(cls, data: Any, key: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{key}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{key}: unknown key(s) {', '.join(unknown)}")
    values = {}
    for name, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        values[name] = value
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"{key}: {e}") from e


SECTIONS = {
    "dataset": DatasetConfig,
    "split": SplitConfig,
    "validation": ValidationConfig,
    "decoder": DecoderConfig,
    "ensemble": EnsembleConfig,
    "evaluation": EvaluationConfig,
    "controller": ControllerSection,
}
SCALARS = ("seed", "budget_seconds", "reserve_fraction")


def config_from_dict(data: Optional[dict]) -> RunConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration must be a mapping, got {type(data).__name__}")
    unknown = sorted(set(data) - set(SECTIONS) - set(SCALARS) - {"workers"})
    if unknown:
        raise ConfigError(f"Unknown configuration key(s): {', '.join(unknown)}")

    values = {name: _build_section(cls, data.get(name), name) for name, cls in SECTIONS.items()}
    workers = data.get("workers")
    if workers is not None:
        if not isinstance(workers, list):
            raise ConfigError("workers: expected a list of worker specs")
        values["workers"] = tuple(_build_section(WorkerSpec, w, f"workers[{i}]") for i, w in enumerate(workers))
    for name in SCALARS:
        if name in data:
            values[name] = data[name]
    try:
        return RunConfig(**values).validate()
    except TypeError as e:
        raise ConfigError(str(e)) from e


def load_config(config_path: Union[str, Path]) -> RunConfig:
    """Load a run configuration from a YAML (or JSON) file"""
    config_path = Path(config_path)
    try:
        with open(config_path, "r") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"{config_path}: cannot read configuration ({e})") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"{config_path}: invalid YAML ({e})") from e
    return config_from_dict(data)
