from __future__ import annotations

from pathlib import Path

import pytest

from coursepilot.chat import GeneratorSpec
from coursepilot.embed import EmbedderSpec

COURSE_FILES = {
    "syllabus.md": (
        "# Course Syllabus\n"
        "This course covers information system security. Grading is weekly.\n"
    ),
    "week1.md": (
        "# Wireless Security\n"
        "WPA2 uses AES for encryption. Rogue access points are a threat.\n"
        "\n"
        "## Key Rotation\n"
        "Session keys rotate hourly. Rotation limits key exposure.\n"
        "\n"
        "# Authentication\n"
        "Passwords and MFA protect accounts. Tokens expire daily.\n"
    ),
    "week2.md": (
        "# Encryption\n"
        "AES is a block cipher. RSA is an asymmetric algorithm.\n"
        "\n"
        "# Access Control\n"
        "Least privilege limits damage. Roles group permissions.\n"
    ),
}


def write_corpus(root: Path, files: dict[str, str] | None = None) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for name, text in (files or COURSE_FILES).items():
        (root / name).write_text(text, encoding="utf-8")
    return root


@pytest.fixture
def corpus_dir(tmp_path: Path) -> Path:
    return write_corpus(tmp_path / "corpus")


@pytest.fixture
def ref_spec() -> EmbedderSpec:
    return EmbedderSpec(provider_kind="reference_hash", model_id="reference-hash-64", dims=64)


@pytest.fixture
def mock_gen() -> GeneratorSpec:
    return GeneratorSpec(provider_kind="mock_echo", model_id="mock-echo")


@pytest.fixture
def no_sleep(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr("coursepilot._http._SLEEP", lambda _s: None)
