"""Answer-quality metrics over a question test set.

Three metrics are computed per case: answer correctness (a weighted blend of
embedding cosine similarity and a factual F-score over judged statements),
context recall (ground-truth sentences attributable to the retrieved
context), and faithfulness (answer claims inferable from the retrieved
context). Statement splitting and support judgments are pluggable so the
metric arithmetic stays deterministic under test.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from . import _http
from .chat import EngineAnswer, GeneratorSpec
from .embed import EmbedderSpec, cosine_similarity, embed_texts
from .errors import (
    EmptyTestsetError,
    JudgeParseError,
    NoClaimsError,
    NoSentencesError,
    NoStatementsError,
)

logger = logging.getLogger(__name__)

# Citation/meta markers emitted by answer templates; they are provenance, not
# claims, so statement extraction ignores them.
_MARKER = re.compile(r"\[(?:SOURCE|HISTORY):[^\]]*\]")
_SENTENCE_BOUNDARY = re.compile(r"[.!?]+")
_WS = re.compile(r"\s+")


class Judge(Protocol):
    def split_statements(self, text: str) -> list[str]: ...

    def statement_supported(self, statement: str, reference_text: str) -> bool: ...


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # domain type, not a pytest class

    case_id: str
    question: str
    ground_truth: str
    topic: str = "Others"
    reference_context: str | None = None

    def __post_init__(self) -> None:
        if not self.question or not self.ground_truth:
            raise ValueError(f"case {self.case_id}: question and ground_truth must be non-empty")


@dataclass
class CaseRun:
    case: TestCase
    answer: str
    retrieved_context: str
    retrieved_section_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.answer:
            raise ValueError(f"case {self.case.case_id}: answer must be non-empty")


@dataclass(frozen=True)
class FactualCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class MetricConfig:
    w_cos: float = 0.25
    w_f: float = 0.75

    def __post_init__(self) -> None:
        if self.w_cos < 0 or self.w_f < 0 or self.w_cos + self.w_f <= 0:
            raise ValueError("weights must be non-negative with a positive sum")


@dataclass(frozen=True)
class CaseMetrics:
    s_cos: float
    factual_f: float
    correctness: float
    context_recall: float
    faithfulness: float
    factual_counts: FactualCounts
    recall_counts: tuple[int, int]  # (attributable sentences, total sentences)
    faith_counts: tuple[int, int]  # (inferable claims, total claims)


def strip_citation_markers(text: str) -> str:
    return _MARKER.sub(" ", text)


def _normalize(text: str) -> str:
    return _WS.sub(" ", text).casefold().strip()


class DeterministicJudge:
    """Sentence split on [.?!]; support = normalized-substring containment."""

    def split_statements(self, text: str) -> list[str]:
        return [p.strip() for p in _SENTENCE_BOUNDARY.split(text) if p.strip()]

    def statement_supported(self, statement: str, reference_text: str) -> bool:
        return _normalize(statement) in _normalize(reference_text)


def deterministic_judge() -> DeterministicJudge:
    return DeterministicJudge()


_SPLIT_PROMPT = (
    "Split the text below into its atomic factual statements. Reply with strict JSON "
    'of the form {{"statements": ["..."]}} and nothing else.\n\nText:\n{text}'
)
_SUPPORT_PROMPT = (
    "Reference:\n{reference}\n\nStatement:\n{statement}\n\n"
    "Can the statement be inferred from the reference alone? Reply with strict JSON "
    '{{"supported": true}} or {{"supported": false}} and nothing else.'
)


@dataclass(frozen=True)
class JudgePromptSet:
    split_template: str = _SPLIT_PROMPT
    support_template: str = _SUPPORT_PROMPT


class LlmJudge:
    """Judge backed by a chat-completion provider returning strict JSON."""

    def __init__(self, complete: Callable[[str], str], prompts: JudgePromptSet = JudgePromptSet()):
        self._complete = complete
        self._prompts = prompts

    def _ask_json(self, prompt: str) -> dict:
        reply = ""
        for _ in range(2):  # one retry on malformed output
            reply = self._complete(prompt)
            try:
                parsed = json.loads(reply.strip())
            except ValueError:
                continue
            if isinstance(parsed, dict):
                return parsed
        raise JudgeParseError(f"judge reply is not a JSON object: {reply!r}")

    def split_statements(self, text: str) -> list[str]:
        parsed = self._ask_json(self._prompts.split_template.format(text=text))
        statements = parsed.get("statements")
        if not isinstance(statements, list) or not all(isinstance(s, str) for s in statements):
            raise JudgeParseError(f"judge reply lacks a statements list: {parsed!r}")
        return [s.strip() for s in statements if s.strip()]

    def statement_supported(self, statement: str, reference_text: str) -> bool:
        parsed = self._ask_json(
            self._prompts.support_template.format(reference=reference_text, statement=statement)
        )
        verdict = parsed.get("supported")
        if not isinstance(verdict, bool):
            raise JudgeParseError(f"judge reply lacks a boolean verdict: {parsed!r}")
        return verdict


def _remote_completer(gen: GeneratorSpec) -> Callable[[str], str]:
    def complete(prompt: str) -> str:
        body = _http.post_with_retries(
            f"{gen.endpoint}/v1/chat/completions",
            {
                "model": gen.model_id,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0.0,
                "max_tokens": gen.max_answer_tokens,
            },
        )
        return body["choices"][0]["message"]["content"]

    return complete


def llm_judge(
    gen: GeneratorSpec,
    prompts: JudgePromptSet = JudgePromptSet(),
    complete: Callable[[str], str] | None = None,
) -> LlmJudge:
    """Judge that delegates splitting and support verdicts to a generator.

    ``complete`` overrides the transport (used to script replies in tests).
    """
    return LlmJudge(complete or _remote_completer(gen), prompts)


def factual_f_score(counts: FactualCounts) -> float:
    """F-score over judged statements: tp / (tp + 0.5 * (fp + fn))."""
    if counts.tp + counts.fp + counts.fn == 0:
        raise NoStatementsError("no statements were judged")
    return counts.tp / (counts.tp + 0.5 * (counts.fp + counts.fn))


def answer_correctness(s_cos: float, f: float, cfg: MetricConfig = MetricConfig()) -> float:
    """Weighted blend of semantic similarity and factual F-score."""
    if not 0.0 <= f <= 1.0:
        raise ValueError(f"factual score out of range: {f}")
    return (cfg.w_cos * s_cos + cfg.w_f * f) / (cfg.w_cos + cfg.w_f)


def context_recall(ground_truth: str, retrieved_context: str, judge: Judge) -> tuple[float, tuple[int, int]]:
    """Fraction of ground-truth sentences attributable to the context."""
    sentences = judge.split_statements(ground_truth)
    if not sentences:
        raise NoSentencesError("ground truth splits into zero sentences")
    attributable = sum(1 for s in sentences if judge.statement_supported(s, retrieved_context))
    return attributable / len(sentences), (attributable, len(sentences))


def faithfulness(answer: str, retrieved_context: str, judge: Judge) -> tuple[float, tuple[int, int]]:
    """Fraction of answer claims inferable from the retrieved context."""
    claims = judge.split_statements(strip_citation_markers(answer))
    if not claims:
        raise NoClaimsError("answer splits into zero claims")
    inferable = sum(1 for c in claims if judge.statement_supported(c, retrieved_context))
    return inferable / len(claims), (inferable, len(claims))


def classify_statements(answer: str, ground_truth: str, judge: Judge) -> FactualCounts:
    """TP/FP/FN over statements, judged in both directions.

    Answer statements supported by the ground truth are TP, the rest FP;
    ground-truth statements unsupported by the answer are FN.
    """
    answer_stmts = judge.split_statements(strip_citation_markers(answer))
    gt_stmts = judge.split_statements(ground_truth)
    tp = sum(1 for s in answer_stmts if judge.statement_supported(s, ground_truth))
    fn = sum(1 for s in gt_stmts if not judge.statement_supported(s, answer))
    return FactualCounts(tp=tp, fp=len(answer_stmts) - tp, fn=fn)


def evaluate_case(
    run: CaseRun,
    embedder: EmbedderSpec,
    judge: Judge,
    cfg: MetricConfig = MetricConfig(),
) -> CaseMetrics:
    """Compute every per-case metric from one engine run."""
    gt_vec, answer_vec = embed_texts(embedder, [run.case.ground_truth, run.answer])
    s_cos = cosine_similarity(gt_vec, answer_vec)
    counts = classify_statements(run.answer, run.case.ground_truth, judge)
    f = factual_f_score(counts)
    recall, recall_counts = context_recall(run.case.ground_truth, run.retrieved_context, judge)
    faith, faith_counts = faithfulness(run.answer, run.retrieved_context, judge)
    return CaseMetrics(
        s_cos=s_cos,
        factual_f=f,
        correctness=answer_correctness(s_cos, f, cfg),
        context_recall=recall,
        faithfulness=faith,
        factual_counts=counts,
        recall_counts=recall_counts,
        faith_counts=faith_counts,
    )


@dataclass
class CaseResult:
    case_id: str
    topic: str
    metrics: CaseMetrics
    retrieved_section_ids: tuple[str, ...] = ()


@dataclass
class MetricReport:
    per_case: list[CaseResult]
    per_topic: dict[str, dict[str, float]]
    overall: dict[str, float]
    errors: list[dict[str, str]] = field(default_factory=list)


_AGG_FIELDS = ("s_cos", "factual_f", "correctness", "context_recall", "faithfulness")


def _aggregate(rows: list[CaseResult]) -> dict[str, float]:
    stats: dict[str, float] = {"n": len(rows)}
    for name in _AGG_FIELDS:
        stats[name] = sum(getattr(r.metrics, name) for r in rows) / len(rows)
    return stats


EngineHandle = Callable[[str], EngineAnswer]


def run_testset(
    cases: list[TestCase],
    engine_handle: EngineHandle,
    embedder: EmbedderSpec,
    judge: Judge,
    cfg: MetricConfig = MetricConfig(),
    parallelism: int = 4,
) -> MetricReport:
    """Answer and score every case; failures are recorded, not fatal.

    Cases run with bounded parallelism, but aggregation folds in case_id
    order so the report is deterministic regardless of completion order.
    """
    if not cases:
        raise EmptyTestsetError("test set has no cases")

    def run_one(case: TestCase) -> CaseResult:
        engine_answer = engine_handle(case.question)
        run = CaseRun(
            case=case,
            answer=engine_answer.answer,
            retrieved_context=engine_answer.retrieved_context,
            retrieved_section_ids=engine_answer.section_ids,
        )
        metrics = evaluate_case(run, embedder, judge, cfg)
        return CaseResult(
            case_id=case.case_id,
            topic=case.topic,
            metrics=metrics,
            retrieved_section_ids=engine_answer.section_ids,
        )

    results: list[CaseResult] = []
    errors: list[dict[str, str]] = []
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        futures = {case.case_id: pool.submit(run_one, case) for case in cases}
        for case_id in sorted(futures):
            try:
                results.append(futures[case_id].result())
            except Exception as exc:
                logger.warning("case %s failed: %s", case_id, exc)
                errors.append({"case_id": case_id, "error": f"{type(exc).__name__}: {exc}"})

    results.sort(key=lambda r: r.case_id)
    per_topic: dict[str, dict[str, float]] = {}
    for topic in sorted({r.topic for r in results}):
        per_topic[topic] = _aggregate([r for r in results if r.topic == topic])
    overall = _aggregate(results) if results else {"n": 0}
    return MetricReport(per_case=results, per_topic=per_topic, overall=overall, errors=errors)


def load_testset(path: str | Path) -> list[TestCase]:
    """Read a JSONL test set: one case object per line."""
    cases: list[TestCase] = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        row = json.loads(line)
        cases.append(
            TestCase(
                case_id=str(row.get("case_id", f"case-{line_no:03d}")),
                question=row["question"],
                ground_truth=row["ground_truth"],
                topic=row.get("topic") or "Others",
                reference_context=row.get("reference_context"),
            )
        )
    if not cases:
        raise EmptyTestsetError(f"{path}: no cases found")
    return cases


def report_to_dict(report: MetricReport) -> dict:
    return {
        "per_case": [
            {
                "case_id": r.case_id,
                "topic": r.topic,
                "s_cos": r.metrics.s_cos,
                "factual_f": r.metrics.factual_f,
                "correctness": r.metrics.correctness,
                "context_recall": r.metrics.context_recall,
                "faithfulness": r.metrics.faithfulness,
                "tp": r.metrics.factual_counts.tp,
                "fp": r.metrics.factual_counts.fp,
                "fn": r.metrics.factual_counts.fn,
                "recall_counts": list(r.metrics.recall_counts),
                "faith_counts": list(r.metrics.faith_counts),
                "retrieved_section_ids": list(r.retrieved_section_ids),
            }
            for r in report.per_case
        ],
        "per_topic": report.per_topic,
        "overall": report.overall,
        "errors": report.errors,
    }


def save_report(report: MetricReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True), encoding="utf-8")


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def format_percent(value: float) -> str:
    """Render a ratio the way scores are reported: one decimal, e.g. 88.0%."""
    return f"{value * 100:.1f}%"


def render_csv(report: dict) -> str:
    """Per-case CSV with an overall summary row; scores as percentages."""
    lines = ["case_id,topic,correctness,context_recall,faithfulness"]
    for row in report["per_case"]:
        topic = str(row["topic"]).replace(",", ";")
        lines.append(
            f"{row['case_id']},{topic},{format_percent(row['correctness'])},"
            f"{format_percent(row['context_recall'])},{format_percent(row['faithfulness'])}"
        )
    overall = report["overall"]
    if overall.get("n"):
        lines.append(
            f"overall,,{format_percent(overall['correctness'])},"
            f"{format_percent(overall['context_recall'])},{format_percent(overall['faithfulness'])}"
        )
    return "\n".join(lines) + "\n"


def render_markdown(report: dict) -> str:
    """Per-topic score table plus the overall summary."""
    out = ["# Evaluation report", ""]
    overall = report["overall"]
    if overall.get("n"):
        out.append(
            f"{int(overall['n'])} cases — correctness {format_percent(overall['correctness'])}, "
            f"context recall {format_percent(overall['context_recall'])}, "
            f"faithfulness {format_percent(overall['faithfulness'])}."
        )
        out.append("")
    out.append("| Topic | Cases | Correctness | Context recall | Faithfulness |")
    out.append("| --- | --- | --- | --- | --- |")
    for topic, stats in sorted(report["per_topic"].items()):
        out.append(
            f"| {topic} | {int(stats['n'])} | {format_percent(stats['correctness'])} "
            f"| {format_percent(stats['context_recall'])} | {format_percent(stats['faithfulness'])} |"
        )
    if overall.get("n"):
        out.append(
            f"| **Overall** | {int(overall['n'])} | {format_percent(overall['correctness'])} "
            f"| {format_percent(overall['context_recall'])} | {format_percent(overall['faithfulness'])} |"
        )
    if report.get("errors"):
        out.append("")
        out.append("## Errors")
        for err in report["errors"]:
            out.append(f"- {err['case_id']}: {err['error']}")
    return "\n".join(out) + "\n"
