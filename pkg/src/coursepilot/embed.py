"""Text-embedding providers and vector similarity.

Two providers are supported: an OpenAI-compatible remote HTTP endpoint and a
deterministic hash embedder used as the test stand-in for hosted models.
All vectors leaving :func:`embed_texts` are L2-normalized locally, so the
downstream cosine reduces to a stable dot product whatever the provider does.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from . import _http, kernels
from .errors import (
    DegenerateVectorError,
    DimsMismatchError,
    EmptyTextError,
    ProviderContractError,
)

logger = logging.getLogger(__name__)

PROVIDER_REMOTE_HTTP = "remote_http"
PROVIDER_REFERENCE_HASH = "reference_hash"

# Fixed seed of the reference hash embedder; part of the on-disk KB contract,
# do not change without bumping the KB format version.
REFERENCE_HASH_SEED = 42

REMOTE_BATCH_SIZE = 32

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class EmbedderSpec:
    """Configuration for one embedding provider."""

    provider_kind: str
    model_id: str
    dims: int
    endpoint: str | None = None
    max_context_tokens: int = 8192

    def __post_init__(self) -> None:
        if self.provider_kind not in (PROVIDER_REMOTE_HTTP, PROVIDER_REFERENCE_HASH):
            raise ValueError(f"unknown provider_kind: {self.provider_kind!r}")
        if self.provider_kind == PROVIDER_REMOTE_HTTP and not self.endpoint:
            raise ValueError("remote_http embedder requires an endpoint")
        if self.dims <= 0:
            raise ValueError("dims must be positive")
        if self.max_context_tokens <= 0:
            raise ValueError("max_context_tokens must be positive")


@dataclass
class EmbeddingVector:
    """A fixed-dimension real vector tied to the model that produced it."""

    values: np.ndarray
    dims: int
    model_id: str

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) != self.dims:
            raise DimsMismatchError(f"expected {self.dims} values, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding contains non-finite values")


def approx_tokens(text: str) -> int:
    """Token estimate used for budgeting: ceil(chars / 4)."""
    return math.ceil(len(text) / 4)


def reference_embed(text: str, dims: int, seed: int = REFERENCE_HASH_SEED) -> EmbeddingVector:
    """Deterministic signed-bucket hash embedding of ``text``.

    Tokenizes on non-alphanumerics (lowercased), hashes each token to a
    bucket with a signed contribution, then L2-normalizes. Identical text
    always yields an identical vector; shared tokens pull vectors together.
    """
    if not text:
        raise EmptyTextError("cannot embed empty text")
    tokens = [t for t in _TOKEN_SPLIT.split(text.lower()) if t]
    raw = kernels.hash_accumulate(tokens, dims, seed) if tokens else np.zeros(dims)
    norm = kernels.l2_norm(raw)
    if norm == 0.0:
        # No alphanumeric tokens, or contributions cancelled: fall back to a
        # single deterministic bucket so the result is still a unit vector.
        raw = np.zeros(dims, dtype=np.float64)
        raw[kernels.hash_accumulate([text], dims, seed).nonzero()[0][0]] = 1.0
        norm = 1.0
    return EmbeddingVector(values=raw / norm, dims=dims, model_id=f"reference-hash-{dims}")


def _truncate_to_budget(text: str, max_context_tokens: int) -> str:
    if approx_tokens(text) <= max_context_tokens:
        return text
    logger.warning(
        "text of ~%d tokens exceeds the %d-token context; truncating",
        approx_tokens(text),
        max_context_tokens,
    )
    return text[: max_context_tokens * 4]


def _embed_remote(spec: EmbedderSpec, texts: list[str]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for start in range(0, len(texts), REMOTE_BATCH_SIZE):
        batch = texts[start : start + REMOTE_BATCH_SIZE]
        body = _http.post_with_retries(
            f"{spec.endpoint}/v1/embeddings",
            {"model": spec.model_id, "input": batch},
        )
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(batch):
            raise ProviderContractError(
                f"embeddings response has {len(data) if isinstance(data, list) else 'no'} rows "
                f"for a batch of {len(batch)}"
            )
        for item in data:
            vec = np.asarray(item.get("embedding", ()), dtype=np.float64)
            if vec.ndim != 1 or len(vec) != spec.dims:
                raise ProviderContractError(f"provider returned {vec.size} dims, spec requires {spec.dims}")
            out.append(vec)
    return out


def embed_texts(spec: EmbedderSpec, texts: list[str]) -> list[EmbeddingVector]:
    """Embed ``texts`` in order, one L2-normalized vector per input."""
    for text in texts:
        if not text:
            raise EmptyTextError("cannot embed empty text")
    bounded = [_truncate_to_budget(t, spec.max_context_tokens) for t in texts]

    if spec.provider_kind == PROVIDER_REFERENCE_HASH:
        return [reference_embed(t, spec.dims) for t in bounded]

    vectors: list[EmbeddingVector] = []
    for raw in _embed_remote(spec, bounded):
        norm = kernels.l2_norm(raw)
        if norm == 0.0:
            raise ProviderContractError("provider returned a zero vector")
        vectors.append(EmbeddingVector(values=raw / norm, dims=spec.dims, model_id=spec.model_id))
    return vectors


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of the angle between two vectors, clamped into [-1, 1]."""
    if a.dims != b.dims:
        raise DimsMismatchError(f"dims mismatch: {a.dims} vs {b.dims}")
    # Pre-scale by the peak magnitude so squaring cannot underflow for tiny
    # vectors; cosine is scale-invariant, so the value is unchanged.
    peak_a = float(np.max(np.abs(a.values)))
    peak_b = float(np.max(np.abs(b.values)))
    if peak_a == 0.0 or peak_b == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero vector is undefined")
    va = a.values / peak_a
    vb = b.values / peak_b
    value = kernels.dot(va, vb) / (kernels.l2_norm(va) * kernels.l2_norm(vb))
    return min(1.0, max(-1.0, value))
