"""Run configuration, canonical hashing, and seed splitting."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .baselines import ClusterConfig
from .corpus import WindowSpec
from .retrieval import RetrievalMode
from .salience import MeasureId, SalienceSettings, derive_seed

DEFAULT_MEASURES = tuple(m.value for m in MeasureId)


@dataclass(frozen=True)
class RunConfig:
    """Flat, serializable inference settings; hashed onto every artifact.

    ``config_hash`` covers the fields that change results. The output
    directory is supplied per command and never hashed, so identical runs
    into different directories produce byte-identical files.
    """

    mode: str = "kb_and_mem"
    k: int = 20
    context_sentences: int = 12
    context_token_budget: int = 512
    target_token_budget: int = 128
    measures: tuple[str, ...] = DEFAULT_MEASURES
    seed: int = 0
    scorer: str = "reference"
    endpoint: str | None = None
    ngram_order: int = 2
    ngram_smoothing: float = 0.1
    dim: int = 768
    kb_path: str | None = None
    memory_policy: str = "lru"
    memory_capacity: int = 131072
    sentences_per_cluster: int = 10
    clus_polarity: str = "similarity"

    def canonical(self) -> dict:
        data = asdict(self)
        data["measures"] = sorted(self.measures)
        return data

    @property
    def config_hash(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def window(self) -> WindowSpec:
        return WindowSpec(
            context_sentences=self.context_sentences,
            context_token_budget=self.context_token_budget,
            target_token_budget=self.target_token_budget,
        )

    def salience_settings(self) -> SalienceSettings:
        return SalienceSettings(
            window=self.window(),
            mode=RetrievalMode(self.mode),
            k=self.k,
            memory_policy=self.memory_policy,
            memory_capacity=self.memory_capacity,
            cluster=ClusterConfig(sentences_per_cluster=self.sentences_per_cluster),
            clus_polarity=self.clus_polarity,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls.from_mapping(data)

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "measures" in data:
            data = dict(data)
            data["measures"] = tuple(data["measures"])
        return cls(**data)

    def override(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        if "measures" in changes:
            changes["measures"] = tuple(changes["measures"])
        return replace(self, **changes)


def story_seed(config: RunConfig, story_id: str, purpose: str = "profile") -> int:
    return derive_seed(config.seed, purpose, story_id)
