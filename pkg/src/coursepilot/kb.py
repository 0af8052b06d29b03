"""Persisted knowledge base with exact top-p section retrieval.

The KB is immutable after build: retrieval never mutates it, and updates go
through a full rebuild followed by an atomic swap in the service layer.
Search is an exhaustive cosine scan over header embeddings; course-scale
corpora are small enough that exactness costs nothing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import kernels
from .embed import EmbedderSpec, embed_texts
from .errors import (
    ChecksumError,
    ContractViolationError,
    EmptyKBError,
    EmptyTextError,
    IncompatibleKBError,
)
from .ingest import Section

logger = logging.getLogger(__name__)

KB_FORMAT_VERSION = 1
_MAGIC = b"CPKB"

EMBED_HEADER_ONLY = "header_only"
EMBED_HEADER_PLUS_BODY_PREFIX = "header_plus_body_prefix"
BODY_PREFIX_CHARS = 512


@dataclass(frozen=True)
class RetrievalConfig:
    p: float = 0.95
    softmax_temperature: float = 0.1
    max_sections: int = 8
    embed_target: str = EMBED_HEADER_ONLY

    def __post_init__(self) -> None:
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if self.softmax_temperature <= 0.0:
            raise ValueError("softmax_temperature must be positive")
        if self.max_sections <= 0:
            raise ValueError("max_sections must be positive")
        if self.embed_target not in (EMBED_HEADER_ONLY, EMBED_HEADER_PLUS_BODY_PREFIX):
            raise ValueError(f"unknown embed_target: {self.embed_target!r}")


@dataclass(frozen=True)
class RetrievalResult:
    section_id: str
    similarity: float
    probability: float
    rank: int


@dataclass
class KnowledgeBase:
    kb_id: str
    embedder: EmbedderSpec
    sections: list[Section]
    vectors: np.ndarray  # float32, shape (n_sections, dims)
    created_at: str
    format_version: int = KB_FORMAT_VERSION
    _by_id: dict[str, Section] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.sections) != len(self.vectors):
            raise ValueError("sections and vectors are not parallel")
        self._by_id = {s.id: s for s in self.sections}
        if len(self._by_id) != len(self.sections):
            raise ValueError("section ids are not unique")

    def section(self, section_id: str) -> Section | None:
        return self._by_id.get(section_id)

    def __len__(self) -> int:
        return len(self.sections)


def _embed_target_text(section: Section, embed_target: str) -> str:
    header = " > ".join(section.header_path)
    if embed_target == EMBED_HEADER_PLUS_BODY_PREFIX:
        return f"{header}\n{section.body[:BODY_PREFIX_CHARS]}"
    return header


def _resolve_created_at(created_at: str | None) -> str:
    if created_at is not None:
        return created_at
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        stamp = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        stamp = datetime.now(tz=timezone.utc)
    return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")


def build_kb(
    sections: list[Section],
    spec: EmbedderSpec,
    cfg: RetrievalConfig = RetrievalConfig(),
    created_at: str | None = None,
) -> KnowledgeBase:
    """Embed every section's retrieval target and assemble the KB.

    Builds are reproducible: identical sections, spec, and created_at give a
    byte-identical persisted file (set SOURCE_DATE_EPOCH to pin created_at
    across runs).
    """
    if not sections:
        raise EmptyKBError("cannot build a knowledge base from zero sections")
    targets = [_embed_target_text(s, cfg.embed_target) for s in sections]
    embedded = embed_texts(spec, targets)
    vectors = np.stack([v.values for v in embedded]).astype(np.float32)

    digest = hashlib.sha256()
    digest.update(json.dumps(_spec_to_dict(spec), sort_keys=True).encode("utf-8"))
    for section in sections:
        digest.update(
            json.dumps(
                [section.id, section.doc_id, list(section.header_path), section.body],
                ensure_ascii=False,
            ).encode("utf-8")
        )
    digest.update(vectors.tobytes())

    return KnowledgeBase(
        kb_id=digest.hexdigest()[:12],
        embedder=spec,
        sections=list(sections),
        vectors=vectors,
        created_at=_resolve_created_at(created_at),
    )


def similarities_to_probabilities(sims, temperature: float) -> np.ndarray:
    """Temperature softmax over similarity scores (max-subtracted)."""
    arr = np.asarray(sims, dtype=np.float64)
    if arr.size == 0:
        raise ContractViolationError("similarity list is empty")
    if not np.all(np.isfinite(arr)):
        raise ContractViolationError("similarities must be finite")
    if temperature <= 0.0:
        raise ContractViolationError("temperature must be positive")
    return kernels.softmax(arr, temperature)


def select_top_p(probs_desc, p: float) -> list[int]:
    """Indices of the smallest probability-sorted prefix with mass >= p.

    Never empty. If float dust keeps the cumulative sum below p, every index
    is returned.
    """
    arr = np.asarray(probs_desc, dtype=np.float64)
    if arr.size == 0:
        raise ContractViolationError("probability list is empty")
    if np.any(arr[:-1] < arr[1:]):
        raise ContractViolationError("probabilities must be sorted descending")
    total = float(arr.sum())
    if abs(total - 1.0) > 1e-6:
        raise ContractViolationError(f"probabilities sum to {total}, expected 1")
    if not 0.0 < p <= 1.0:
        raise ContractViolationError("p must be in (0, 1]")
    return list(range(kernels.top_p_prefix(arr, p)))


def rank_indices(probs) -> list[int]:
    """Candidate indices by probability descending, ties by document order."""
    arr = np.asarray(probs, dtype=np.float64)
    return sorted(range(len(arr)), key=lambda i: (-arr[i], i))


def retrieve(
    kb: KnowledgeBase,
    query: str,
    cfg: RetrievalConfig = RetrievalConfig(),
) -> tuple[list[RetrievalResult], list[Section]]:
    """Rank sections for a query and return the top-p prefix with full bodies.

    Ties in probability break by section document order (stable).
    """
    if not query:
        raise EmptyTextError("query must be non-empty")
    if not kb.sections:
        raise EmptyKBError("knowledge base has no sections")

    query_vec = embed_texts(kb.embedder, [query])[0].values.astype(np.float32)
    dots = kernels.dot_rows(kb.vectors, query_vec)
    norms = kernels.row_norms(kb.vectors)
    q_norm = kernels.l2_norm(query_vec)
    sims = np.clip(dots / (norms * q_norm), -1.0, 1.0)
    probs = similarities_to_probabilities(sims, cfg.softmax_temperature)

    order = rank_indices(probs)
    kept = select_top_p(probs[order], cfg.p)[: cfg.max_sections]

    results = [
        RetrievalResult(
            section_id=kb.sections[i].id,
            similarity=float(sims[i]),
            probability=float(probs[i]),
            rank=rank,
        )
        for rank, i in enumerate((order[j] for j in kept), start=1)
    ]
    return results, [kb.sections[order[j]] for j in kept]


def _spec_to_dict(spec: EmbedderSpec) -> dict:
    return {
        "provider_kind": spec.provider_kind,
        "model_id": spec.model_id,
        "dims": spec.dims,
        "endpoint": spec.endpoint,
        "max_context_tokens": spec.max_context_tokens,
    }


def _spec_from_dict(data: dict) -> EmbedderSpec:
    return EmbedderSpec(
        provider_kind=data["provider_kind"],
        model_id=data["model_id"],
        dims=data["dims"],
        endpoint=data.get("endpoint"),
        max_context_tokens=data.get("max_context_tokens", 8192),
    )


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    """Write the KB as one file: header JSON + float32 vector block + CRC32."""
    dims = kb.vectors.shape[1] if kb.vectors.ndim == 2 else 0
    header = {
        "format_version": kb.format_version,
        "kb_id": kb.kb_id,
        "created_at": kb.created_at,
        "embedder": _spec_to_dict(kb.embedder),
        "dims": dims,
        "vector_dtype": "<f4",
        "sections": [
            {
                "id": s.id,
                "doc_id": s.doc_id,
                "header_path": list(s.header_path),
                "body": s.body,
                "approx_token_count": s.approx_token_count,
                "vec_offset": i * dims * 4,
            }
            for i, s in enumerate(kb.sections)
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    vector_bytes = np.ascontiguousarray(kb.vectors, dtype="<f4").tobytes()

    payload = _MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + vector_bytes
    payload += struct.pack("<I", zlib.crc32(payload))
    Path(path).write_bytes(payload)
    logger.info("saved KB %s (%d sections) to %s", kb.kb_id, len(kb.sections), path)


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load a persisted KB, verifying checksum and format version."""
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise ChecksumError(f"{path}: file too short to be a knowledge base")
    body, crc_bytes = blob[:-4], blob[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(body):
        raise ChecksumError(f"{path}: CRC mismatch, file is corrupt or truncated")
    if body[:4] != _MAGIC:
        raise ChecksumError(f"{path}: not a knowledge base file")
    header_len = struct.unpack("<I", body[4:8])[0]
    if 8 + header_len > len(body):
        raise ChecksumError(f"{path}: header extends past end of file")
    header = json.loads(body[8 : 8 + header_len].decode("utf-8"))

    if header["format_version"] != KB_FORMAT_VERSION:
        raise IncompatibleKBError(
            f"{path}: format_version {header['format_version']} (supported: {KB_FORMAT_VERSION})"
        )

    dims = header["dims"]
    section_rows = header["sections"]
    vector_bytes = body[8 + header_len :]
    expected = len(section_rows) * dims * 4
    if len(vector_bytes) != expected:
        raise ChecksumError(f"{path}: vector block is {len(vector_bytes)} bytes, expected {expected}")
    vectors = np.frombuffer(vector_bytes, dtype="<f4").reshape(len(section_rows), dims).copy()

    sections = [
        Section(
            id=row["id"],
            doc_id=row["doc_id"],
            header_path=tuple(row["header_path"]),
            body=row["body"],
            approx_token_count=row["approx_token_count"],
        )
        for row in section_rows
    ]
    return KnowledgeBase(
        kb_id=header["kb_id"],
        embedder=_spec_from_dict(header["embedder"]),
        sections=sections,
        vectors=vectors,
        created_at=header["created_at"],
        format_version=header["format_version"],
    )
