"""Pipeline configuration: defaults, validation, (de)serialization, stage hashing.

The config file is a single JSON document mirroring PipelineConfig. Unknown
keys are errors so a typo like "aplha" cannot silently corrupt a comparison.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

DATASETS = ("vg150", "oiv6", "psg", "custom")
TASKS = ("predcls", "sgdet")
COORDINATE_STYLES = ("normalized_0_1", "scaled_1_1000")


@dataclass(frozen=True)
class MappingParams:
    tau_softmax: float = 0.2
    delta: float = 0.05
    top_k_map: int = 2


@dataclass(frozen=True)
class GeometryParams:
    lambda1: float = 1.0
    lambda2: float = 1.5
    tau_dist: float = 0.5
    beta: float = 16.0  # 16 for 7B-class models, 10 for 72B


@dataclass(frozen=True)
class FusionParams:
    alpha: float = 0.25
    top_k_pairs: int = 25


@dataclass(frozen=True)
class DetectorParams:
    box_threshold: float = 0.35
    text_threshold: float = 0.25
    max_instances_per_category: int = 10


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.1
    top_p: float = 1.0
    max_tokens: int = 512
    presence_penalty: float = 0.4
    repetition_penalty: float = 1.1


@dataclass(frozen=True)
class ConcurrencyParams:
    max_in_flight: int = 4


@dataclass(frozen=True)
class ModelIds:
    """Backend model identifiers; part of every cache key."""

    chat: str = "vlm"
    embed: str = "encoder"
    detect: str = "detector"
    depth: str = "depth"


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str = "vg150"
    task: str = "predcls"
    mapping: MappingParams = field(default_factory=MappingParams)
    geometry: GeometryParams = field(default_factory=GeometryParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    sampling: SamplingParams = field(default_factory=SamplingParams)
    coordinate_style: str = "normalized_0_1"
    concurrency: ConcurrencyParams = field(default_factory=ConcurrencyParams)
    models: ModelIds = field(default_factory=ModelIds)
    pair_chunk_size: int = 50
    custom_entity_prompt: str | None = None

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.coordinate_style not in COORDINATE_STYLES:
            raise ConfigError(f"unknown coordinate_style {self.coordinate_style!r}")
        if not 0.0 <= self.fusion.alpha <= 1.0:
            raise ConfigError("alpha outside [0,1]")
        if self.geometry.beta <= 0:
            raise ConfigError("beta must be > 0")
        if self.geometry.tau_dist <= 0:
            raise ConfigError("tau_dist must be > 0")
        if self.fusion.top_k_pairs < 1:
            raise ConfigError("top_k_pairs must be >= 1")
        if self.mapping.tau_softmax <= 0:
            raise ConfigError("tau_softmax must be > 0")
        if self.mapping.delta < 0:
            raise ConfigError("delta must be >= 0")
        if self.mapping.top_k_map < 1:
            raise ConfigError("top_k_map must be >= 1")
        if self.sampling.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0.0 < self.sampling.top_p <= 1.0:
            raise ConfigError("top_p outside (0,1]")
        if not 0.0 <= self.detector.box_threshold <= 1.0:
            raise ConfigError("box_threshold outside [0,1]")
        if not 0.0 <= self.detector.text_threshold <= 1.0:
            raise ConfigError("text_threshold outside [0,1]")
        if self.concurrency.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.pair_chunk_size < 1:
            raise ConfigError("pair_chunk_size must be >= 1")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        return cls(**_build_kwargs(cls, doc, path=""))

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
        return cls.from_dict(doc)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    # -- stage hashing ------------------------------------------------------
    # Each stage hash covers its own parameters plus the upstream stage hash,
    # so changing a parameter invalidates exactly the downstream stages.

    def stage_hash(self, stage: str) -> str:
        return _digest(self._stage_params(stage))

    def _stage_params(self, stage: str) -> dict:
        sampling = asdict(self.sampling)
        if stage == "entities":
            return {
                "stage": "entities",
                "dataset": self.dataset,
                "sampling": sampling,
                "model": self.models.chat,
                "custom_entity_prompt": self.custom_entity_prompt,
            }
        if stage == "map":
            return {
                "stage": "map",
                "upstream": self.stage_hash("entities"),
                "mapping": asdict(self.mapping),
                "model": self.models.embed,
            }
        if stage == "detect":
            if self.task == "predcls":
                # Ground-truth passthrough; no detector parameters involved.
                return {"stage": "detect", "task": "predcls"}
            return {
                "stage": "detect",
                "upstream": self.stage_hash("map"),
                "detector": asdict(self.detector),
                "model": self.models.detect,
            }
        if stage == "refine":
            return {
                "stage": "refine",
                "upstream": self.stage_hash("detect"),
                "geometry": asdict(self.geometry),
                "fusion": asdict(self.fusion),
                "sampling": sampling,
                "chat_model": self.models.chat,
                "depth_model": self.models.depth,
                "chunk": self.pair_chunk_size,
            }
        if stage == "relate":
            return {
                "stage": "relate",
                "upstream": self.stage_hash("refine"),
                "coordinate_style": self.coordinate_style,
                "sampling": sampling,
                "chat_model": self.models.chat,
                "embed_model": self.models.embed,
                "mapping": asdict(self.mapping),
                "chunk": self.pair_chunk_size,
            }
        raise ConfigError(f"unknown stage {stage!r}")


def _digest(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _build_kwargs(cls, doc: dict, path: str) -> dict:
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown config key {where!r}")
        ftype = known[key].type
        nested = _NESTED.get((cls, key))
        if nested is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be an object")
            kwargs[key] = nested(**_build_kwargs(nested, value, where))
        else:
            kwargs[key] = value
        del ftype
    return kwargs


_NESTED = {
    (PipelineConfig, "mapping"): MappingParams,
    (PipelineConfig, "geometry"): GeometryParams,
    (PipelineConfig, "fusion"): FusionParams,
    (PipelineConfig, "detector"): DetectorParams,
    (PipelineConfig, "sampling"): SamplingParams,
    (PipelineConfig, "concurrency"): ConcurrencyParams,
    (PipelineConfig, "models"): ModelIds,
}
