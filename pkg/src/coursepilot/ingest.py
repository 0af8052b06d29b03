"""Load, clean, and chunk course materials into header-addressed sections.

Input is pre-converted plain text or markdown-style headed text; PDF and
slide-deck extraction happens upstream. Cleaning is line-preserving so the
chunker can still see header lines.
"""

from __future__ import annotations

import fnmatch
import hashlib
import logging
import math
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyCorpusError

logger = logging.getLogger(__name__)

DEFAULT_INCLUDE_GLOBS = ("*.md", "*.markdown", "*.txt")

# First matching rule wins; patterns are matched against the lowercased
# relative path.
DEFAULT_KIND_RULES = (
    ("*syllabus*", "syllabus"),
    ("*slide*", "slides"),
    ("*deck*", "slides"),
    ("*textbook*", "textbook"),
    ("*chapter*", "textbook"),
    ("*", "supplement"),
)

_ZERO_WIDTH = "​‌‍⁠﻿"
_HORIZONTAL_WS = re.compile(r"[ \t]+")


@dataclass
class Document:
    """One loaded source file."""

    id: str
    source_path: str
    title: str
    raw_text: str
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass
class Section:
    """A header-delimited chunk of a document; the unit of retrieval."""

    id: str
    doc_id: str
    header_path: tuple[str, ...]
    body: str
    approx_token_count: int


@dataclass(frozen=True)
class ChunkRules:
    """How header lines are recognized.

    ``header_patterns[i]`` marks a level-(i+1) header; the header title is
    capture group 1 when the regex has one, else the whole match.
    """

    header_patterns: tuple[str, ...] = (
        r"^#\s+(.+?)\s*$",
        r"^##\s+(.+?)\s*$",
        r"^###\s+(.+?)\s*$",
        r"^####\s+(.+?)\s*$",
        r"^#####\s+(.+?)\s*$",
        r"^######\s+(.+?)\s*$",
    )


@dataclass
class LoadError:
    """A per-file ingest failure that did not abort the corpus load."""

    source_path: str
    message: str


@dataclass
class LoadedCorpus:
    documents: list[Document]
    errors: list[LoadError]


def clean_text(raw: str) -> str:
    """Normalize raw course text.

    NFC-normalizes, strips control and zero-width characters, collapses
    horizontal whitespace runs, trims lines, reduces blank-line runs to
    single paragraph breaks, and drops exact-duplicate consecutive
    paragraphs. Idempotent.
    """
    text = unicodedata.normalize("NFC", raw)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = text.replace("\t", " ").replace("\x0b", "\n").replace("\x0c", "\n")
    text = "".join(
        ch for ch in text if ch == "\n" or (unicodedata.category(ch) != "Cc" and ch not in _ZERO_WIDTH)
    )
    lines = [_HORIZONTAL_WS.sub(" ", line).strip() for line in text.split("\n")]

    paragraphs: list[str] = []
    block: list[str] = []
    for line in lines:
        if line:
            block.append(line)
        elif block:
            paragraphs.append("\n".join(block))
            block = []
    if block:
        paragraphs.append("\n".join(block))

    deduped: list[str] = []
    for para in paragraphs:
        if not deduped or deduped[-1] != para:
            deduped.append(para)
    return "\n\n".join(deduped)


def _doc_id(rel_path: str) -> str:
    return hashlib.sha1(rel_path.encode("utf-8")).hexdigest()[:12]


def _infer_kind(rel_path: str, kind_rules=DEFAULT_KIND_RULES) -> str:
    lowered = rel_path.lower()
    for pattern, kind in kind_rules:
        if fnmatch.fnmatch(lowered, pattern):
            return kind
    return "supplement"


def load_documents(
    input_dir: str | Path,
    include_globs: tuple[str, ...] = DEFAULT_INCLUDE_GLOBS,
    kind_rules=DEFAULT_KIND_RULES,
) -> LoadedCorpus:
    """Load every matching file under ``input_dir`` in lexicographic order.

    Unreadable files are collected as per-file errors rather than aborting;
    zero glob matches raises :class:`EmptyCorpusError`.
    """
    root = Path(input_dir)
    if not root.is_dir():
        raise EmptyCorpusError(f"input directory does not exist: {root}")

    matched = sorted(
        p for p in root.rglob("*") if any(fnmatch.fnmatch(p.name, g) for g in include_globs)
    )
    if not matched:
        raise EmptyCorpusError(f"no files under {root} match {list(include_globs)}")

    documents: list[Document] = []
    errors: list[LoadError] = []
    for path in matched:
        rel = path.relative_to(root).as_posix()
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            logger.warning("skipping unreadable file %s: %s", path, exc)
            errors.append(LoadError(source_path=str(path), message=str(exc)))
            continue
        if not raw.strip():
            errors.append(LoadError(source_path=str(path), message="file is empty"))
            continue
        documents.append(
            Document(
                id=_doc_id(rel),
                source_path=str(path),
                title=path.stem,
                raw_text=raw,
                metadata={"kind": _infer_kind(rel, kind_rules), "relative_path": rel},
            )
        )
    logger.info("loaded %d documents (%d errors) from %s", len(documents), len(errors), root)
    return LoadedCorpus(documents=documents, errors=errors)


def _match_header(line: str, patterns: list[re.Pattern[str]]) -> tuple[int, str] | None:
    for level, pattern in enumerate(patterns, start=1):
        m = pattern.match(line)
        if m:
            title = m.group(1) if m.groups() else m.group(0)
            return level, title.strip()
    return None


def chunk_document(doc: Document, rules: ChunkRules = ChunkRules()) -> list[Section]:
    """Split a document into one Section per header-delimited region.

    A document without headers yields a single section rooted at the
    document title. Empty-body sections are dropped.
    """
    cleaned = clean_text(doc.raw_text)
    patterns = [re.compile(p) for p in rules.header_patterns]

    regions: list[tuple[tuple[str, ...], list[str]]] = [((doc.title,), [])]
    breadcrumb: list[str] = []
    for line in cleaned.split("\n"):
        header = _match_header(line, patterns)
        if header is None:
            regions[-1][1].append(line)
            continue
        level, title = header
        breadcrumb = breadcrumb[: level - 1]
        breadcrumb.append(title)
        regions.append((tuple(breadcrumb), []))

    sections: list[Section] = []
    ordinal = 0
    for header_path, lines in regions:
        body = clean_text("\n".join(lines))
        if not body:
            continue
        sections.append(
            Section(
                id=f"{doc.id}-s{ordinal:03d}",
                doc_id=doc.id,
                header_path=header_path,
                body=body,
                approx_token_count=math.ceil(len(body) / 4),
            )
        )
        ordinal += 1
    return sections


def chunk_corpus(documents: list[Document], rules: ChunkRules = ChunkRules()) -> list[Section]:
    """Chunk every document, preserving document order."""
    sections: list[Section] = []
    for doc in documents:
        sections.extend(chunk_document(doc, rules))
    return sections
