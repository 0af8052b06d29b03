"""Operator command line: build KBs, ask questions, evaluate, serve.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import evaluation as eval_mod
from .chat import ChatSession, ask_with_sources
from .config import EngineConfig, load_config
from .errors import CoursePilotError
from .ingest import chunk_corpus, load_documents
from .kb import (
    EMBED_HEADER_ONLY,
    EMBED_HEADER_PLUS_BODY_PREFIX,
    RetrievalConfig,
    build_kb,
    load_kb,
    save_kb,
)

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _load_engine_config(args: argparse.Namespace) -> EngineConfig:
    return load_config(getattr(args, "config", None))


def _retrieval_for(args: argparse.Namespace, cfg: EngineConfig) -> RetrievalConfig:
    embed_target = getattr(args, "embed_target", None)
    if embed_target is None:
        return cfg.retrieval
    target = EMBED_HEADER_PLUS_BODY_PREFIX if embed_target == "header+body" else EMBED_HEADER_ONLY
    return RetrievalConfig(
        p=cfg.retrieval.p,
        softmax_temperature=cfg.retrieval.softmax_temperature,
        max_sections=cfg.retrieval.max_sections,
        embed_target=target,
    )


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load_engine_config(args)
    embedder = cfg.embedder
    if args.dims is not None:
        from .embed import EmbedderSpec

        embedder = EmbedderSpec(
            provider_kind=embedder.provider_kind,
            model_id=f"reference-hash-{args.dims}" if embedder.provider_kind == "reference_hash" else embedder.model_id,
            dims=args.dims,
            endpoint=embedder.endpoint,
            max_context_tokens=embedder.max_context_tokens,
        )
    corpus = load_documents(args.input, cfg.include_globs)
    for err in corpus.errors:
        print(f"warning: {err.source_path}: {err.message}", file=sys.stderr)
    sections = chunk_corpus(corpus.documents, cfg.chunk_rules)
    kb = build_kb(sections, embedder, _retrieval_for(args, cfg))
    save_kb(kb, args.kb)
    print(
        f"ingested {len(sections)} sections from {len(corpus.documents)} documents "
        f"into {args.kb} (kb_id {kb.kb_id})"
    )
    return 0


def _print_answer(turn_text: str, sources: list, kb) -> None:
    print(turn_text)
    if sources:
        print()
        print("Sources:")
        for r in sources:
            section = kb.section(r.section_id)
            label = " > ".join(section.header_path) if section else r.section_id
            print(f"  {r.rank}. {label} (similarity {r.similarity:.4f}, id {r.section_id})")


def _sources_json(sources: list, kb) -> list[dict]:
    out = []
    for r in sources:
        section = kb.section(r.section_id)
        out.append(
            {
                "section_id": r.section_id,
                "header_path": list(section.header_path) if section else [],
                "similarity": r.similarity,
                "probability": r.probability,
                "rank": r.rank,
            }
        )
    return out


def cmd_ask(args: argparse.Namespace) -> int:
    cfg = _load_engine_config(args)
    kb = load_kb(args.kb)
    session = ChatSession(kb_id=kb.kb_id)
    turn, sources = ask_with_sources(session, args.question, kb, cfg.retrieval, cfg.generator)
    if args.json:
        print(json.dumps({"answer": turn.text, "sources": _sources_json(sources, kb)}, indent=2))
    else:
        _print_answer(turn.text, sources, kb)
    return 0


def cmd_chat(args: argparse.Namespace) -> int:
    cfg = _load_engine_config(args)
    kb = load_kb(args.kb)
    session = ChatSession(kb_id=kb.kb_id)
    print(f"chatting against KB {kb.kb_id} ({len(kb)} sections); empty line or EOF exits")
    while True:
        print("you> ", end="", flush=True)
        line = sys.stdin.readline()
        if not line or not line.strip():
            print()
            return 0
        turn, sources = ask_with_sources(session, line.strip(), kb, cfg.retrieval, cfg.generator)
        _print_answer(turn.text, sources, kb)


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_engine_config(args)
    kb = load_kb(args.kb)
    cases = eval_mod.load_testset(args.testset)

    if args.judge == "llm":
        judge: eval_mod.Judge = eval_mod.llm_judge(cfg.generator)
    else:
        judge = eval_mod.deterministic_judge()

    def handle(question: str):
        from .chat import answer_once

        return answer_once(kb, question, cfg.retrieval, cfg.generator)

    report = eval_mod.run_testset(cases, handle, kb.embedder, judge, cfg.metrics, parallelism=args.parallel)
    eval_mod.save_report(report, args.out)
    overall = report.overall
    if overall.get("n"):
        print(
            f"evaluated {int(overall['n'])} cases: "
            f"correctness {eval_mod.format_percent(overall['correctness'])}, "
            f"context recall {eval_mod.format_percent(overall['context_recall'])}, "
            f"faithfulness {eval_mod.format_percent(overall['faithfulness'])}"
        )
    if report.errors:
        print(f"{len(report.errors)} case(s) failed; see the report errors list", file=sys.stderr)
    print(f"report written to {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    report = eval_mod.load_report(args.infile)
    rendered = eval_mod.render_csv(report) if args.format == "csv" else eval_mod.render_markdown(report)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(rendered, end="")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    cfg = load_config(args.config)
    host, _, port = cfg.listen_addr.rpartition(":")
    app = create_app(cfg, static_dir=args.static)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="coursepilot", description="Course-material QA engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a knowledge base from a directory of course text")
    p.add_argument("--input", required=True, help="directory of .md/.txt course materials")
    p.add_argument("--kb", required=True, help="output knowledge-base file")
    p.add_argument("--embed-target", choices=["header", "header+body"], default=None)
    p.add_argument("--dims", type=int, default=None, help="embedding dimensions (reference embedder)")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("ask", help="ask a one-off question")
    p.add_argument("--kb", required=True)
    p.add_argument("question")
    p.add_argument("--json", action="store_true", help="print the answer and sources as JSON")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("chat", help="interactive chat REPL with history")
    p.add_argument("--kb", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("eval", help="run a test set and write a metric report")
    p.add_argument("--kb", required=True)
    p.add_argument("--testset", required=True, help="JSONL test set")
    p.add_argument("--out", required=True, help="output report JSON path")
    p.add_argument("--judge", choices=["deterministic", "llm"], default="deterministic")
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render a report as CSV or markdown")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=["csv", "md"], required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True)
    p.add_argument("--static", default=None, help="directory of static UI assets to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (CoursePilotError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
