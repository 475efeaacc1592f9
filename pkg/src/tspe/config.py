"""Run configuration: one JSON document covering every pipeline stage.

Module seeds are not configured individually.  Each stage derives its own
seed from the master seed and a fixed tag, so the master seed plus the rest
of this document pins down a run completely.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .encoding import GeeVariant, PeMode
from .graph import SyntheticParams, ThresholdMode
from .model import ModelConfig
from .node2vec import SkipGramConfig, WalkConfig
from .numerics.rng import child_seed
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PeConfig:
    k: int = 64
    d: int = 8
    tol: float = 1e-8
    zero_threshold: float = 1e-8
    gee_variant: str = "adjacency"
    scale_by_sigma: bool = False
    eig_method: str = "auto"

    def __post_init__(self):
        if self.k < 1 or self.d < 1:
            raise ConfigError("pe.k and pe.d must be positive")
        GeeVariant(self.gee_variant)
        if self.eig_method not in ("auto", "dense", "lanczos"):
            raise ConfigError(f"unknown eig_method {self.eig_method!r}")


@dataclass(frozen=True)
class PathsConfig:
    edges: str | None = None
    catalog: str | None = None
    pairs: str | None = None
    embeddings: str | None = None
    encodings: str | None = None
    checkpoint: str | None = None


# sections whose dataclass carries a seed that is derived, not configured
_SEEDED = {"walk": WalkConfig, "skipgram": SkipGramConfig, "train": TrainConfig,
           "synth": SyntheticParams}
_SECTIONS = {**_SEEDED, "pe": PeConfig, "model": ModelConfig, "paths": PathsConfig}


def _section_dict(obj) -> dict:
    d = asdict(obj)
    d.pop("seed", None)
    return d


@dataclass(frozen=True)
class RunConfig:
    walk: WalkConfig = field(default_factory=WalkConfig)
    skipgram: SkipGramConfig = field(default_factory=SkipGramConfig)
    pe: PeConfig = field(default_factory=PeConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SyntheticParams = field(default_factory=SyntheticParams)
    paths: PathsConfig = field(default_factory=PathsConfig)
    mode: str = "rr0"
    pe_mode: str = "spe"
    folds: int = 10
    seed: int = 0
    jobs: int = 1
    drop_worst_fold: int = 0
    use_lcc: bool = False

    def __post_init__(self):
        if self.skipgram.dim != self.pe.k:
            raise ConfigError(f"embedding dimension skipgram.dim={self.skipgram.dim} must equal "
                              f"pe.k={self.pe.k}: the two matrices are summed")
        ThresholdMode.parse(self.mode)
        PeMode(self.pe_mode)
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.folds < 2 or self.jobs < 1 or self.drop_worst_fold < 0:
            raise ConfigError("folds >= 2, jobs >= 1 and drop_worst_fold >= 0 are required")
        if self.drop_worst_fold >= self.folds:
            raise ConfigError("drop_worst_fold must leave at least one fold")

    # ------------------------------------------------------------ derived

    def stage_seed(self, tag: str) -> int:
        return child_seed(self.seed, tag)

    def walk_config(self) -> WalkConfig:
        return dataclasses.replace(self.walk, seed=self.stage_seed("walk"))

    def skipgram_config(self) -> SkipGramConfig:
        return dataclasses.replace(self.skipgram, seed=self.stage_seed("skipgram"))

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.stage_seed("train"))

    def synth_params(self) -> SyntheticParams:
        return dataclasses.replace(self.synth, seed=self.stage_seed("synth"))

    @property
    def threshold(self) -> ThresholdMode:
        return ThresholdMode.parse(self.mode)

    # ------------------------------------------------------------ (de)serialization

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = _section_dict(value) if f.name in _SECTIONS else value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for name, value in doc.items():
            if name in _SECTIONS:
                kwargs[name] = _build_section(name, value)
            else:
                kwargs[name] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(doc)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """Apply ``{"section.key" or "key": value}`` on top of this config."""
        doc = self.to_dict()
        for dotted, value in overrides.items():
            section, _, key = dotted.rpartition(".")
            target = doc.get(section) if section else doc
            if not isinstance(target, dict) or key not in target or key in _SECTIONS:
                raise ConfigError(f"unknown config key {dotted!r}")
            target[key] = value
        return RunConfig.from_dict(doc)


def _build_section(name: str, value) -> object:
    cls = _SECTIONS[name]
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be an object")
    allowed = {f.name for f in fields(cls)} - ({"seed"} if name in _SEEDED else set())
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {', '.join(sorted(unknown))}")
    try:
        return cls(**value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def section_fields(name: str):
    """``(key, type)`` pairs a section accepts, in declaration order."""
    cls = _SECTIONS[name]
    return [(f.name, f.type) for f in fields(cls) if not (name in _SEEDED and f.name == "seed")]


def top_level_fields():
    return [(f.name, f.type) for f in fields(RunConfig) if f.name not in _SECTIONS]


SECTIONS = tuple(_SECTIONS)
