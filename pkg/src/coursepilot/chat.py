"""Conversation sessions, prompt assembly, and chat-completion backends.

Sessions are windowed: the generator sees the last ``history_k`` turns plus
the retrieved sections for the current question. Retrieval always embeds the
raw question (no history rewriting); earlier turns reach the generator only
through the prompt window.
"""

from __future__ import annotations

import logging
import re
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import _http
from .embed import approx_tokens
from .errors import EmptyAnswerError, EmptyTextError, QuestionTooLongError
from .ingest import Section
from .kb import KnowledgeBase, RetrievalConfig, RetrievalResult, retrieve

logger = logging.getLogger(__name__)

PROVIDER_REMOTE_HTTP = "remote_http"
PROVIDER_MOCK_ECHO = "mock_echo"

NO_MATCH_ANSWER = "No course material matched this question."

SYSTEM_PREAMBLE = (
    "You are a course assistant. Answer using only the provided course material "
    "excerpts, and cite the source headers you rely on. If the excerpts do not "
    "cover the question, say so instead of guessing."
)

_FIRST_SENTENCE = re.compile(r"[^.?!]*[.?!]")


@dataclass(frozen=True)
class GeneratorSpec:
    """Configuration for one chat-completion provider."""

    provider_kind: str
    model_id: str
    endpoint: str | None = None
    max_context_tokens: int = 32768
    temperature: float = 0.2
    max_answer_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.provider_kind not in (PROVIDER_REMOTE_HTTP, PROVIDER_MOCK_ECHO):
            raise ValueError(f"unknown provider_kind: {self.provider_kind!r}")
        if self.provider_kind == PROVIDER_REMOTE_HTTP and not self.endpoint:
            raise ValueError("remote_http generator requires an endpoint")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_answer_tokens <= 0 or self.max_context_tokens <= 0:
            raise ValueError("token limits must be positive")


@dataclass
class Turn:
    role: str  # "user" | "assistant"
    text: str
    retrieved_section_ids: tuple[str, ...] = ()
    created_at: str = ""

    def __post_init__(self) -> None:
        if self.role not in ("user", "assistant"):
            raise ValueError(f"unknown role: {self.role!r}")
        if not self.text:
            raise ValueError("turn text must be non-empty")
        if not self.created_at:
            self.created_at = datetime.now(tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass
class ChatSession:
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    kb_id: str = ""
    turns: list[Turn] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass(frozen=True)
class ContextBlock:
    section_id: str
    label: str  # header breadcrumb, root > leaf
    body: str

    def render(self) -> str:
        return f"[SOURCE: {self.label}]\n{self.body}"


@dataclass
class PromptBundle:
    system_preamble: str
    context_blocks: list[ContextBlock]
    history_window: list[Turn]
    user_question: str
    approx_token_count: int
    dropped_section_ids: tuple[str, ...] = ()
    dropped_history_turns: int = 0


def _bundle_tokens(preamble: str, blocks: list[ContextBlock], history: list[Turn], question: str) -> int:
    total = approx_tokens(preamble) + approx_tokens(question)
    total += sum(approx_tokens(b.render()) for b in blocks)
    total += sum(approx_tokens(t.text) for t in history)
    return total


def assemble_prompt(
    session: ChatSession,
    question: str,
    retrieved: list[Section],
    gen: GeneratorSpec,
    history_k: int = 4,
) -> PromptBundle:
    """Pack retrieved sections and recent history into the token budget.

    Under budget pressure, the lowest-ranked context blocks go first, then
    the oldest history turns. The question is never dropped.
    """
    if not question:
        raise EmptyTextError("question must be non-empty")
    budget = gen.max_context_tokens - gen.max_answer_tokens
    if approx_tokens(SYSTEM_PREAMBLE) + approx_tokens(question) > budget:
        raise QuestionTooLongError(
            f"question of ~{approx_tokens(question)} tokens exceeds the {budget}-token budget"
        )

    blocks = [
        ContextBlock(section_id=s.id, label=" > ".join(s.header_path), body=s.body) for s in retrieved
    ]
    history = list(session.turns[-history_k:]) if history_k > 0 else []
    dropped_sections: list[str] = []
    dropped_history = 0

    while _bundle_tokens(SYSTEM_PREAMBLE, blocks, history, question) > budget:
        if blocks:
            dropped_sections.append(blocks.pop().section_id)
        elif history:
            history.pop(0)
            dropped_history += 1
        else:
            break
    if dropped_sections:
        logger.info("dropped %d context block(s) to fit the budget", len(dropped_sections))

    return PromptBundle(
        system_preamble=SYSTEM_PREAMBLE,
        context_blocks=blocks,
        history_window=history,
        user_question=question,
        approx_token_count=_bundle_tokens(SYSTEM_PREAMBLE, blocks, history, question),
        dropped_section_ids=tuple(dropped_sections),
        dropped_history_turns=dropped_history,
    )


def _first_sentence(text: str) -> str:
    m = _FIRST_SENTENCE.match(text)
    return m.group(0).strip() if m else text.strip()


def _mock_echo_answer(bundle: PromptBundle) -> str:
    parts = [f"[SOURCE: {b.label}] {_first_sentence(b.body)}" for b in bundle.context_blocks]
    if bundle.history_window:
        parts.append(f"[HISTORY: {len(bundle.history_window)} turns]")
    return " ".join(parts)


def _remote_answer(gen: GeneratorSpec, bundle: PromptBundle) -> str:
    context = "\n\n".join(b.render() for b in bundle.context_blocks)
    system = f"{bundle.system_preamble}\n\n{context}" if context else bundle.system_preamble
    messages = [{"role": "system", "content": system}]
    messages += [{"role": t.role, "content": t.text} for t in bundle.history_window]
    messages.append({"role": "user", "content": bundle.user_question})

    body = _http.post_with_retries(
        f"{gen.endpoint}/v1/chat/completions",
        {
            "model": gen.model_id,
            "messages": messages,
            "temperature": gen.temperature,
            "max_tokens": gen.max_answer_tokens,
        },
    )
    try:
        answer = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise EmptyAnswerError(f"malformed chat completion response: {body!r}") from exc
    if not isinstance(answer, str) or not answer.strip():
        raise EmptyAnswerError("provider returned an empty completion")
    return answer


def generate_answer(gen: GeneratorSpec, bundle: PromptBundle) -> str:
    """Produce an answer for an assembled prompt.

    With no context blocks the fixed no-match fallback is returned without
    calling any provider: ungrounded generation is never attempted.
    """
    if not bundle.context_blocks:
        return NO_MATCH_ANSWER
    if gen.provider_kind == PROVIDER_MOCK_ECHO:
        return _mock_echo_answer(bundle)
    return _remote_answer(gen, bundle)


def ask_with_sources(
    session: ChatSession,
    question: str,
    kb: KnowledgeBase,
    cfg: RetrievalConfig,
    gen: GeneratorSpec,
    history_k: int = 4,
) -> tuple[Turn, list[RetrievalResult]]:
    """Run one retrieval-grounded exchange and append it to the session.

    Returns the assistant turn plus the retrieval results that made it into
    the prompt (in rank order). The session mutates only after every stage
    succeeds; a provider failure leaves it unchanged. Concurrent asks on the
    same session serialize on the session lock.
    """
    with session.lock:
        results, sections = retrieve(kb, question, cfg)
        bundle = assemble_prompt(session, question, sections, gen, history_k)
        answer = generate_answer(gen, bundle)

        kept_ids = tuple(b.section_id for b in bundle.context_blocks)
        sources = [r for r in results if r.section_id in kept_ids]

        session.turns.append(Turn(role="user", text=question))
        assistant_turn = Turn(role="assistant", text=answer, retrieved_section_ids=kept_ids)
        session.turns.append(assistant_turn)
        return assistant_turn, sources


def ask(
    session: ChatSession,
    question: str,
    kb: KnowledgeBase,
    cfg: RetrievalConfig,
    gen: GeneratorSpec,
    history_k: int = 4,
) -> Turn:
    """:func:`ask_with_sources`, returning only the assistant turn."""
    return ask_with_sources(session, question, kb, cfg, gen, history_k)[0]


@dataclass(frozen=True)
class EngineAnswer:
    """One-shot answer plus its retrieval provenance, for evaluation runs."""

    answer: str
    section_ids: tuple[str, ...]
    retrieved_context: str
    results: tuple[RetrievalResult, ...] = ()


def answer_once(
    kb: KnowledgeBase,
    question: str,
    cfg: RetrievalConfig,
    gen: GeneratorSpec,
) -> EngineAnswer:
    """Ask a question in a fresh session and collect the retrieved context."""
    session = ChatSession(kb_id=kb.kb_id)
    turn = ask(session, question, kb, cfg, gen)
    bodies = [kb.section(sid).body for sid in turn.retrieved_section_ids if kb.section(sid)]
    return EngineAnswer(
        answer=turn.text,
        section_ids=turn.retrieved_section_ids,
        retrieved_context="\n\n".join(bodies),
    )
