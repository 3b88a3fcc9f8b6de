"""Service configuration: a flat JSON file, overridable by environment variables.

Every field ``name`` maps to the variable ``RECALLKIT_<NAME>`` (upper case),
for example ``data_dir`` -> ``RECALLKIT_DATA_DIR``. Environment values win
over the file, which wins over the defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .model import FusionConfig, TemporalConfig

ENV_PREFIX = "RECALLKIT_"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    data_dir: str | None = None
    snapshot_every: int = 1000
    fsync: bool = True
    # fusion / temporal knobs
    k_rrf: int = 10
    w_vector: float = 0.70
    w_bm25: float = 0.30
    shortlist_size: int = 200
    rerank_top_n: int = 50
    dedup_threshold: float = 0.99
    candidate_depth: int = 50
    w_fused: float = 0.60
    w_temporal: float = 0.40
    temporal_floor: float = 0.1
    # pluggable models
    extractor: str = "reference"
    extractor_endpoint: str | None = None
    embedder: str = "reference"
    embedder_endpoint: str | None = None
    embedder_seed: int = 0
    reranker: str = "passthrough"
    reranker_endpoint: str | None = None
    reranker_timeout: float = 2.0
    api_token: str | None = None

    def __post_init__(self) -> None:
        for kind, allowed in (("extractor", {"reference", "remote"}), ("embedder", {"reference", "remote"}),
                              ("reranker", {"passthrough", "remote"})):
            mode = getattr(self, kind)
            if mode not in allowed:
                raise ValueError(f"{kind} must be one of {sorted(allowed)}, got {mode!r}")
            if mode == "remote" and not getattr(self, f"{kind}_endpoint"):
                raise ValueError(f"remote {kind} needs {kind}_endpoint")
        self.fusion_config()
        self.temporal_config()

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(
            k_rrf=self.k_rrf,
            w_vector=self.w_vector,
            w_bm25=self.w_bm25,
            shortlist_size=self.shortlist_size,
            rerank_top_n=self.rerank_top_n,
            dedup_threshold=self.dedup_threshold,
            candidate_depth=self.candidate_depth,
        )

    def temporal_config(self) -> TemporalConfig:
        return TemporalConfig(w_fused=self.w_fused, w_temporal=self.w_temporal, floor=self.temporal_floor)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def load(cls, path: str | os.PathLike | None = None, environ: Mapping[str, str] | None = None) -> ServiceConfig:
        values: dict[str, Any] = {}
        if path is not None:
            values.update(json.loads(Path(path).read_text("utf-8")))
        known = {f.name: f for f in fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        env = os.environ if environ is None else environ
        for name, f in known.items():
            raw = env.get(ENV_PREFIX + name.upper())
            if raw is not None:
                values[name] = _coerce(raw, f.type)
        return cls(**values)


def _coerce(raw: str, type_name: Any) -> Any:
    t = str(type_name)
    if raw == "" and "None" in t:
        return None
    if t.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if t.startswith("int"):
        return int(raw)
    if t.startswith("float"):
        return float(raw)
    return raw


def build_engine(cfg: ServiceConfig):
    """Instantiate a MemoryEngine with the models selected by ``cfg``."""
    from .engine import MemoryEngine
    from .extraction import RemoteExtractor, RuleExtractor
    from .retrieval import PassthroughReranker, RemoteReranker
    from .vectors import ReferenceEmbedder, RemoteEmbedder

    embedder = (
        RemoteEmbedder(cfg.embedder_endpoint, token=cfg.api_token)
        if cfg.embedder == "remote"
        else ReferenceEmbedder(seed=cfg.embedder_seed)
    )
    extractor = (
        RemoteExtractor(cfg.extractor_endpoint, token=cfg.api_token) if cfg.extractor == "remote" else RuleExtractor()
    )
    reranker = (
        RemoteReranker(cfg.reranker_endpoint, timeout=cfg.reranker_timeout, token=cfg.api_token)
        if cfg.reranker == "remote"
        else PassthroughReranker()
    )
    return MemoryEngine(
        embedder=embedder,
        extractor=extractor,
        reranker=reranker,
        fusion=cfg.fusion_config(),
        temporal=cfg.temporal_config(),
        data_dir=cfg.data_dir,
        snapshot_every=cfg.snapshot_every,
        fsync=cfg.fsync,
    )
