"""HTTP service: chat sessions, ingestion, evaluation runs, Likert feedback.

One KB per service instance. Rebuilds happen behind a non-blocking ingest
lock and swap the KB atomically, so readers always see a complete KB.
Feedback is appended to a JSONL file through a single writer lock.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import Depends, FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import chat as chat_mod
from . import evaluation as eval_mod
from .chat import ChatSession, EngineAnswer
from .config import EngineConfig
from .errors import (
    CoursePilotError,
    EmptyKBError,
    RetriableProviderError,
)
from .ingest import chunk_corpus, load_documents
from .kb import KnowledgeBase, build_kb, load_kb, save_kb

logger = logging.getLogger(__name__)

FEEDBACK_CATEGORIES = ("helpfulness", "accuracy", "performance")


@dataclass
class FeedbackEntry:
    session_id: str
    question_category: str
    rating: int
    comment: str | None = None
    created_at: str = field(
        default_factory=lambda: datetime.now(tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    )


def feedback_summary(entries: list[FeedbackEntry]) -> dict[str, dict]:
    """Per-category rating distribution and mean; mean absent when empty."""
    summary: dict[str, dict] = {}
    for category in FEEDBACK_CATEGORIES:
        ratings = [e.rating for e in entries if e.question_category == category]
        counts: dict[str, int] = {}
        for r in ratings:
            counts[str(r)] = counts.get(str(r), 0) + 1
        block: dict = {"counts": counts, "n": len(ratings)}
        if ratings:
            block["mean"] = sum(ratings) / len(ratings)
        summary[category] = block
    return summary


class Engine:
    """Mutable service state: current KB, sessions, and feedback."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.kb: KnowledgeBase | None = None
        self.sessions: dict[str, ChatSession] = {}
        self._sessions_lock = threading.Lock()
        self._ingest_lock = threading.Lock()
        self._feedback_lock = threading.Lock()
        self.feedback: list[FeedbackEntry] = []

        kb_path = Path(config.kb_path)
        if kb_path.is_file():
            self.kb = load_kb(kb_path)
            logger.info("loaded KB %s with %d sections", self.kb.kb_id, len(self.kb))
        self._load_feedback()

    # -- feedback -----------------------------------------------------------
    def _load_feedback(self) -> None:
        path = Path(self.config.resolved_feedback_path())
        if not path.is_file():
            return
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                self.feedback.append(FeedbackEntry(**json.loads(line)))

    def add_feedback(self, entry: FeedbackEntry) -> None:
        path = Path(self.config.resolved_feedback_path())
        with self._feedback_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(entry), sort_keys=True) + "\n")
            self.feedback.append(entry)

    # -- ingestion ----------------------------------------------------------
    def ingest(self, input_dir: str) -> KnowledgeBase:
        """Rebuild the KB from a directory and swap it in atomically.

        Raises IngestInProgress if another rebuild is running.
        """
        if not self._ingest_lock.acquire(blocking=False):
            raise IngestInProgress("an ingest is already running")
        try:
            corpus = load_documents(input_dir, self.config.include_globs)
            sections = chunk_corpus(corpus.documents, self.config.chunk_rules)
            new_kb = build_kb(sections, self.config.embedder, self.config.retrieval)
            save_kb(new_kb, self.config.kb_path)
            self.kb = new_kb  # atomic swap: readers hold the old reference
            return new_kb
        finally:
            self._ingest_lock.release()

    # -- sessions -----------------------------------------------------------
    def create_session(self) -> ChatSession:
        session = ChatSession(session_id=uuid.uuid4().hex, kb_id=self.kb.kb_id if self.kb else "")
        with self._sessions_lock:
            self.sessions[session.session_id] = session
        return session

    def snapshot_sessions(self) -> None:
        path = self.config.session_snapshot_path
        if not path:
            return
        with self._sessions_lock:
            rows = [
                {
                    "session_id": s.session_id,
                    "kb_id": s.kb_id,
                    "turns": [
                        {
                            "role": t.role,
                            "text": t.text,
                            "retrieved_section_ids": list(t.retrieved_section_ids),
                            "created_at": t.created_at,
                        }
                        for t in s.turns
                    ],
                }
                for s in self.sessions.values()
            ]
        with Path(path).open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    def eval_answerer(self) -> eval_mod.EngineHandle:
        kb = self.kb
        if kb is None:
            raise EmptyKBError("no knowledge base ingested")

        def handle(question: str) -> EngineAnswer:
            return chat_mod.answer_once(kb, question, self.config.retrieval, self.config.generator)

        return handle


class IngestInProgress(CoursePilotError):
    pass


class MessageIn(BaseModel):
    text: str = Field(min_length=1)


class IngestIn(BaseModel):
    input_dir: str


class EvalIn(BaseModel):
    testset_path: str
    judge: str = "deterministic"
    parallelism: int = Field(default=4, ge=1)


class FeedbackIn(BaseModel):
    session_id: str
    question_category: str
    rating: int = Field(ge=1, le=5)
    comment: str | None = None


def create_app(config: EngineConfig, static_dir: str | Path | None = None) -> FastAPI:
    engine = Engine(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        engine.snapshot_sessions()

    app = FastAPI(title="coursepilot", version="0.1.0", lifespan=lifespan)
    app.state.engine = engine
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    def require_auth(request: Request) -> None:
        token = engine.config.auth_token
        if token and request.headers.get("Authorization") != f"Bearer {token}":
            raise AuthError()

    class AuthError(Exception):
        pass

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    @app.exception_handler(AuthError)
    async def unauthorized(request: Request, exc: AuthError):
        return JSONResponse(status_code=401, content={"detail": "missing or invalid bearer token"})

    @app.exception_handler(RetriableProviderError)
    async def provider_down(request: Request, exc: RetriableProviderError):
        return JSONResponse(status_code=503, content={"detail": str(exc)})

    def _not_found(what: str) -> JSONResponse:
        return JSONResponse(status_code=404, content={"detail": what})

    @app.get("/v1/health")
    def health():
        kb = engine.kb
        if kb is None:
            return {"status": "no_kb", "kb_id": None, "section_count": 0}
        return {"status": "ok", "kb_id": kb.kb_id, "section_count": len(kb)}

    @app.post("/v1/sessions", dependencies=[Depends(require_auth)])
    def create_session():
        return {"session_id": engine.create_session().session_id}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        session = engine.sessions.get(session_id)
        if session is None:
            return _not_found("unknown session")
        return {
            "session_id": session.session_id,
            "kb_id": session.kb_id,
            "turns": [
                {
                    "role": t.role,
                    "text": t.text,
                    "retrieved_section_ids": list(t.retrieved_section_ids),
                    "created_at": t.created_at,
                }
                for t in session.turns
            ],
        }

    @app.post("/v1/sessions/{session_id}/messages", dependencies=[Depends(require_auth)])
    def post_message(session_id: str, body: MessageIn):
        session = engine.sessions.get(session_id)
        if session is None:
            return _not_found("unknown session")
        kb = engine.kb
        if kb is None:
            return JSONResponse(status_code=409, content={"detail": "no knowledge base ingested"})
        turn, sources = chat_mod.ask_with_sources(
            session, body.text, kb, engine.config.retrieval, engine.config.generator
        )
        return {
            "role": turn.role,
            "text": turn.text,
            "created_at": turn.created_at,
            "sources": [
                {
                    "section_id": r.section_id,
                    "header_path": list(kb.section(r.section_id).header_path),
                    "similarity": r.similarity,
                }
                for r in sources
                if kb.section(r.section_id) is not None
            ],
        }

    @app.post("/v1/ingest", dependencies=[Depends(require_auth)])
    def post_ingest(body: IngestIn):
        try:
            new_kb = engine.ingest(body.input_dir)
        except IngestInProgress as exc:
            return JSONResponse(status_code=409, content={"detail": str(exc)})
        except CoursePilotError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return {"kb_id": new_kb.kb_id, "section_count": len(new_kb)}

    @app.post("/v1/eval", dependencies=[Depends(require_auth)])
    def post_eval(body: EvalIn):
        if body.judge != "deterministic":
            return JSONResponse(
                status_code=400, content={"detail": "only the deterministic judge is served over HTTP"}
            )
        try:
            handle = engine.eval_answerer()
            cases = eval_mod.load_testset(body.testset_path)
            kb = engine.kb
            report = eval_mod.run_testset(
                cases,
                handle,
                kb.embedder if kb else engine.config.embedder,
                eval_mod.deterministic_judge(),
                engine.config.metrics,
                parallelism=body.parallelism,
            )
        except (CoursePilotError, OSError) as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return eval_mod.report_to_dict(report)

    @app.get("/v1/kb/sections/{section_id}")
    def get_section(section_id: str):
        kb = engine.kb
        section = kb.section(section_id) if kb else None
        if section is None:
            return _not_found("unknown section")
        return {
            "section_id": section.id,
            "header_path": list(section.header_path),
            "body": section.body,
        }

    @app.post("/v1/feedback", dependencies=[Depends(require_auth)])
    def post_feedback(body: FeedbackIn):
        if body.question_category not in FEEDBACK_CATEGORIES:
            return JSONResponse(
                status_code=400,
                content={"detail": f"question_category must be one of {list(FEEDBACK_CATEGORIES)}"},
            )
        engine.add_feedback(
            FeedbackEntry(
                session_id=body.session_id,
                question_category=body.question_category,
                rating=body.rating,
                comment=body.comment,
            )
        )
        return {"ok": True}

    @app.get("/v1/feedback/summary")
    def get_feedback_summary():
        return feedback_summary(engine.feedback)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="static")

    return app
