"""Engine configuration: JSON config file plus COURSEPILOT_* env overrides.

Nested sections are overridden with a double underscore, e.g.
``COURSEPILOT_RETRIEVAL__P=0.9`` or ``COURSEPILOT_GENERATOR__ENDPOINT=...``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .chat import GeneratorSpec
from .embed import EmbedderSpec
from .evaluation import MetricConfig
from .ingest import DEFAULT_INCLUDE_GLOBS, ChunkRules
from .kb import RetrievalConfig

ENV_PREFIX = "COURSEPILOT_"


def _default_embedder() -> EmbedderSpec:
    return EmbedderSpec(provider_kind="reference_hash", model_id="reference-hash-256", dims=256)


def _default_generator() -> GeneratorSpec:
    return GeneratorSpec(provider_kind="mock_echo", model_id="mock-echo")


@dataclass
class EngineConfig:
    kb_path: str = "course.kb"
    listen_addr: str = "127.0.0.1:8077"
    auth_token: str | None = None
    feedback_path: str | None = None
    session_snapshot_path: str | None = None
    cors_origins: tuple[str, ...] = ("*",)
    include_globs: tuple[str, ...] = DEFAULT_INCLUDE_GLOBS
    chunk_rules: ChunkRules = field(default_factory=ChunkRules)
    embedder: EmbedderSpec = field(default_factory=_default_embedder)
    generator: GeneratorSpec = field(default_factory=_default_generator)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)

    def resolved_feedback_path(self) -> str:
        return self.feedback_path or f"{self.kb_path}.feedback.jsonl"


def _embedder_from(data: Mapping[str, Any]) -> EmbedderSpec:
    base = _default_embedder()
    return EmbedderSpec(
        provider_kind=data.get("provider_kind", base.provider_kind),
        model_id=data.get("model_id", base.model_id),
        dims=int(data.get("dims", base.dims)),
        endpoint=data.get("endpoint", base.endpoint),
        max_context_tokens=int(data.get("max_context_tokens", base.max_context_tokens)),
    )


def _generator_from(data: Mapping[str, Any]) -> GeneratorSpec:
    base = _default_generator()
    return GeneratorSpec(
        provider_kind=data.get("provider_kind", base.provider_kind),
        model_id=data.get("model_id", base.model_id),
        endpoint=data.get("endpoint", base.endpoint),
        max_context_tokens=int(data.get("max_context_tokens", base.max_context_tokens)),
        temperature=float(data.get("temperature", base.temperature)),
        max_answer_tokens=int(data.get("max_answer_tokens", base.max_answer_tokens)),
    )


def _retrieval_from(data: Mapping[str, Any]) -> RetrievalConfig:
    base = RetrievalConfig()
    return RetrievalConfig(
        p=float(data.get("p", base.p)),
        softmax_temperature=float(data.get("softmax_temperature", base.softmax_temperature)),
        max_sections=int(data.get("max_sections", base.max_sections)),
        embed_target=data.get("embed_target", base.embed_target),
    )


def _metrics_from(data: Mapping[str, Any]) -> MetricConfig:
    base = MetricConfig()
    return MetricConfig(w_cos=float(data.get("w_cos", base.w_cos)), w_f=float(data.get("w_f", base.w_f)))


def config_from_dict(data: Mapping[str, Any]) -> EngineConfig:
    defaults = EngineConfig()
    globs = data.get("include_globs", list(defaults.include_globs))
    if isinstance(globs, str):
        globs = [g.strip() for g in globs.split(",") if g.strip()]
    cors = data.get("cors_origins", list(defaults.cors_origins))
    if isinstance(cors, str):
        cors = [c.strip() for c in cors.split(",") if c.strip()]
    patterns = data.get("header_patterns")
    chunk_rules = ChunkRules(header_patterns=tuple(patterns)) if patterns else ChunkRules()
    return EngineConfig(
        kb_path=data.get("kb_path", defaults.kb_path),
        listen_addr=data.get("listen_addr", defaults.listen_addr),
        auth_token=data.get("auth_token"),
        feedback_path=data.get("feedback_path"),
        session_snapshot_path=data.get("session_snapshot_path"),
        cors_origins=tuple(cors),
        include_globs=tuple(globs),
        chunk_rules=chunk_rules,
        embedder=_embedder_from(data.get("embedder", {})),
        generator=_generator_from(data.get("generator", {})),
        retrieval=_retrieval_from(data.get("retrieval", {})),
        metrics=_metrics_from(data.get("metrics", {})),
    )


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None) -> EngineConfig:
    """Load configuration from an optional JSON file, then apply env overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    env = os.environ if env is None else env
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX) :].lower()
        if "__" in key:
            section, field_name = key.split("__", 1)
            section_data = dict(data.get(section, {}))
            section_data[field_name] = value
            data[section] = section_data
        else:
            data[key] = value
    return config_from_dict(data)
