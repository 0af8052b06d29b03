from __future__ import annotations

import random

import numpy as np
import pytest

from coursepilot.chat import EngineAnswer
from coursepilot.embed import EmbedderSpec, reference_embed
from coursepilot.errors import (
    EmptyTestsetError,
    JudgeParseError,
    NoClaimsError,
    NoSentencesError,
    NoStatementsError,
)
from coursepilot.evaluation import (
    CaseRun,
    DeterministicJudge,
    FactualCounts,
    MetricConfig,
    TestCase,
    answer_correctness,
    classify_statements,
    context_recall,
    deterministic_judge,
    evaluate_case,
    factual_f_score,
    faithfulness,
    format_percent,
    llm_judge,
    load_testset,
    render_csv,
    render_markdown,
    report_to_dict,
    run_testset,
    save_report,
    load_report,
    strip_citation_markers,
)


def eq1_cosine(a: str, b: str, dims: int = 64) -> float:
    """Independent oracle: direct cosine formula over reference embeddings."""
    va = reference_embed(a, dims).values
    vb = reference_embed(b, dims).values
    return float(np.dot(va, vb) / (np.linalg.norm(va) * np.linalg.norm(vb)))


class TestFactualFScore:
    def test_spec_arithmetic(self):
        assert factual_f_score(FactualCounts(tp=3, fp=1, fn=1)) == pytest.approx(0.75, abs=1e-12)

    def test_perfect_overlap_is_one(self):
        for k in (1, 2, 7):
            assert factual_f_score(FactualCounts(tp=k, fp=0, fn=0)) == 1.0

    def test_zero_numerator(self):
        assert factual_f_score(FactualCounts(tp=0, fp=2, fn=3)) == 0.0

    def test_all_zero_counts_rejected(self):
        with pytest.raises(NoStatementsError):
            factual_f_score(FactualCounts(tp=0, fp=0, fn=0))


class TestAnswerCorrectness:
    def test_fixed_point(self):
        assert answer_correctness(1.0, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_spec_arithmetic(self):
        assert answer_correctness(0.8, 0.75) == pytest.approx(0.7625, abs=1e-12)

    def test_zero_cosine_weight_degenerates_to_f(self):
        cfg = MetricConfig(w_cos=0.0, w_f=0.75)
        for s in (-0.5, 0.0, 0.99):
            assert answer_correctness(s, 0.42, cfg) == pytest.approx(0.42, abs=1e-15)

    def test_out_of_range_f_rejected(self):
        with pytest.raises(ValueError):
            answer_correctness(0.5, 1.2)

    def test_invalid_weights_rejected(self):
        with pytest.raises(ValueError):
            MetricConfig(w_cos=-0.1, w_f=0.5)
        with pytest.raises(ValueError):
            MetricConfig(w_cos=0.0, w_f=0.0)


class TestDeterministicJudge:
    def test_split_on_terminators(self):
        assert deterministic_judge().split_statements("A. B? C!") == ["A", "B", "C"]

    def test_split_drops_empties(self):
        assert deterministic_judge().split_statements("One...   Two!!") == ["One", "Two"]

    def test_supported_normalizes_case_and_whitespace(self):
        judge = deterministic_judge()
        assert judge.statement_supported("the key is AES", "Note: The key is  AES today.")

    def test_unsupported_against_empty_reference(self):
        assert not deterministic_judge().statement_supported("x", "")


class TestContextRecall:
    def test_four_of_five_sentences(self):
        context = "S one is true. S two holds. S three applies. S four stands."
        gt = "S one is true. S two holds. S three applies. S four stands. S five is missing."
        value, counts = context_recall(gt, context, deterministic_judge())
        assert value == pytest.approx(0.8, abs=1e-12)
        assert counts == (4, 5)

    def test_verbatim_containment_is_one(self):
        gt = "Alpha fact. Beta fact."
        value, counts = context_recall(gt, f"Intro. {gt} Outro.", deterministic_judge())
        assert value == 1.0 and counts == (2, 2)

    def test_empty_context_is_zero(self):
        value, counts = context_recall("Alpha fact.", "", deterministic_judge())
        assert value == 0.0 and counts == (0, 1)

    def test_zero_sentences_rejected(self):
        with pytest.raises(NoSentencesError):
            context_recall("...", "context", deterministic_judge())


class TestFaithfulness:
    def test_two_of_three_claims(self):
        context = "Claim one holds. Claim two holds."
        answer = "Claim one holds. Claim two holds. Claim three is invented."
        value, counts = faithfulness(answer, context, deterministic_judge())
        assert value == pytest.approx(2 / 3, abs=1e-9)
        assert counts == (2, 3)

    def test_verbatim_answer_is_one(self):
        context = "Everything here is true. Even this."
        value, _ = faithfulness("Everything here is true.", context, deterministic_judge())
        assert value == 1.0

    def test_unrelated_answer_is_zero(self):
        value, _ = faithfulness("Planets orbit stars.", "Databases store rows.", deterministic_judge())
        assert value == 0.0

    def test_zero_claims_rejected(self):
        with pytest.raises(NoClaimsError):
            faithfulness("!!!", "context", deterministic_judge())

    def test_citation_markers_are_not_claims(self):
        context = "WPA2 uses AES for encryption. Keys rotate hourly."
        answer = "[SOURCE: Wireless Security] WPA2 uses AES for encryption. [HISTORY: 2 turns]"
        value, counts = faithfulness(answer, context, deterministic_judge())
        assert value == 1.0 and counts == (1, 1)

    def test_strip_citation_markers(self):
        assert strip_citation_markers("[SOURCE: A > B] x [HISTORY: 2 turns] y").split() == ["x", "y"]


class TestClassifyStatements:
    def test_directional_counts(self):
        gt = "Alpha beta gamma. Unmatched fact here."
        answer = "Alpha beta gamma. Delta epsilon zeta. Novel claim."
        counts = classify_statements(answer, gt, deterministic_judge())
        assert counts == FactualCounts(tp=1, fp=2, fn=1)

    def test_brute_force_matrix_equivalence(self):
        # Oracle: all-pairs supported() matrix; a statement is supported by the
        # full text iff it is supported by at least one of its sentences.
        judge = deterministic_judge()
        vocab = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
        rng = random.Random(3)
        for _ in range(80):
            gt_sents = [
                " ".join(rng.sample(vocab, rng.randint(1, 3))).capitalize()
                for _ in range(rng.randint(1, 6))
            ]
            ans_sents = [
                " ".join(rng.sample(vocab, rng.randint(1, 3))).capitalize()
                for _ in range(rng.randint(1, 6))
            ]
            gt = ". ".join(gt_sents) + "."
            answer = ". ".join(ans_sents) + "."
            counts = classify_statements(answer, gt, judge)

            a_stmts = judge.split_statements(answer)
            g_stmts = judge.split_statements(gt)
            tp = sum(1 for a in a_stmts if any(judge.statement_supported(a, g) for g in g_stmts))
            fn = sum(1 for g in g_stmts if not any(judge.statement_supported(g, a) for a in a_stmts))
            # Full-text containment can also match across sentence boundaries,
            # so the matrix oracle is a lower bound that must agree whenever
            # statements do not straddle boundaries; with single-clause
            # statements it is exact.
            assert counts.tp >= tp
            assert counts.fn <= fn
            assert counts.tp + counts.fp == len(a_stmts)


class TestEvaluateCase:
    def _case(self, gt: str, answer: str, context: str) -> CaseRun:
        case = TestCase(case_id="c1", question="q?", ground_truth=gt, topic="Encryption")
        return CaseRun(case=case, answer=answer, retrieved_context=context)

    def _spec(self) -> EmbedderSpec:
        return EmbedderSpec(provider_kind="reference_hash", model_id="reference-hash-64", dims=64)

    def test_perfect_case_all_ones(self):
        text = "Security relies on defense in depth. Updates patch flaws."
        run = self._case(text, text, text)
        m = evaluate_case(run, self._spec(), deterministic_judge())
        assert m.s_cos == pytest.approx(1.0, abs=1e-12)
        assert m.factual_f == 1.0
        assert m.correctness == pytest.approx(1.0, abs=1e-12)
        assert m.context_recall == 1.0
        assert m.faithfulness == 1.0

    def test_golden_fixture_hand_computed(self):
        gt = "Alpha beta gamma. Unmatched fact here."
        answer = "Alpha beta gamma. Delta epsilon zeta. Novel claim."
        context = "Alpha beta gamma. Delta epsilon zeta. Eta theta iota."
        m = evaluate_case(self._case(gt, answer, context), self._spec(), deterministic_judge())

        # Hand-derived counts: tp=1, fp=2, fn=1 -> F = 1 / (1 + 0.5*3) = 0.4
        assert m.factual_counts == FactualCounts(tp=1, fp=2, fn=1)
        assert m.factual_f == pytest.approx(0.4, abs=1e-12)
        assert m.recall_counts == (1, 2)
        assert m.context_recall == pytest.approx(0.5, abs=1e-12)
        assert m.faith_counts == (2, 3)
        assert m.faithfulness == pytest.approx(2 / 3, abs=1e-12)
        s_cos = eq1_cosine(gt, answer)
        assert m.s_cos == pytest.approx(s_cos, abs=1e-12)
        assert m.correctness == pytest.approx((0.25 * s_cos + 0.75 * 0.4) / 1.0, abs=1e-12)

    def test_metrics_recomputable_from_counts(self):
        gt = "Alpha beta gamma. Unmatched fact here."
        answer = "Alpha beta gamma. Delta epsilon zeta. Novel claim."
        context = "Alpha beta gamma. Delta epsilon zeta."
        m = evaluate_case(self._case(gt, answer, context), self._spec(), deterministic_judge())
        c = m.factual_counts
        assert m.factual_f == pytest.approx(c.tp / (c.tp + 0.5 * (c.fp + c.fn)), abs=1e-12)
        assert m.context_recall == pytest.approx(m.recall_counts[0] / m.recall_counts[1], abs=1e-12)
        assert m.faithfulness == pytest.approx(m.faith_counts[0] / m.faith_counts[1], abs=1e-12)
        assert m.correctness == pytest.approx(
            (0.25 * m.s_cos + 0.75 * m.factual_f) / (0.25 + 0.75), abs=1e-12
        )


class _ScriptedCompleter:
    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.prompts: list[str] = []

    def __call__(self, prompt: str) -> str:
        self.prompts.append(prompt)
        return self.replies.pop(0)


class TestLlmJudge:
    def _gen(self):
        from coursepilot.chat import GeneratorSpec

        return GeneratorSpec(provider_kind="remote_http", model_id="judge", endpoint="http://j.test")

    def test_supported_verdict_plumbing(self):
        judge = llm_judge(self._gen(), complete=_ScriptedCompleter(['{"supported": true}']))
        assert judge.statement_supported("s", "ref") is True

    def test_statements_list_of_three(self):
        judge = llm_judge(
            self._gen(), complete=_ScriptedCompleter(['{"statements": ["a", "b", "c"]}'])
        )
        assert judge.split_statements("whatever") == ["a", "b", "c"]

    def test_malformed_twice_raises_parse_error(self):
        completer = _ScriptedCompleter(["not json", "still not json"])
        judge = llm_judge(self._gen(), complete=completer)
        with pytest.raises(JudgeParseError):
            judge.statement_supported("s", "ref")
        assert len(completer.prompts) == 2

    def test_malformed_once_then_recovers(self):
        judge = llm_judge(
            self._gen(), complete=_ScriptedCompleter(["garbage", '{"supported": false}'])
        )
        assert judge.statement_supported("s", "ref") is False

    def test_missing_field_raises(self):
        judge = llm_judge(self._gen(), complete=_ScriptedCompleter(['{"noise": 1}', '{"noise": 1}']))
        with pytest.raises(JudgeParseError):
            judge.statement_supported("s", "ref")


def _fake_engine(mapping: dict[str, EngineAnswer]):
    def handle(question: str) -> EngineAnswer:
        return mapping[question]

    return handle


class TestRunTestset:
    def _spec(self):
        return EmbedderSpec(provider_kind="reference_hash", model_id="reference-hash-64", dims=64)

    def _cases_and_engine(self):
        body = {
            "q1": "Wireless networks need WPA2. Strong keys matter.",
            "q2": "MFA stops credential stuffing. Tokens expire.",
            "q3": "AES is a block cipher. It encrypts blocks.",
        }
        cases = [
            TestCase(case_id="c1", question="q1", ground_truth=body["q1"], topic="Wireless Security"),
            TestCase(case_id="c2", question="q2", ground_truth=body["q2"], topic="Authentication"),
            TestCase(case_id="c3", question="q3", ground_truth=body["q3"], topic="Authentication"),
        ]
        engine = _fake_engine(
            {
                q: EngineAnswer(answer=text, section_ids=(f"s-{q}",), retrieved_context=text)
                for q, text in body.items()
            }
        )
        return cases, engine

    def test_perfect_engine_scores_ones(self):
        cases, engine = self._cases_and_engine()
        report = run_testset(cases, engine, self._spec(), deterministic_judge())
        assert [r.case_id for r in report.per_case] == ["c1", "c2", "c3"]
        assert report.overall["n"] == 3
        assert report.overall["correctness"] == pytest.approx(1.0, abs=1e-12)
        assert report.overall["context_recall"] == 1.0
        assert report.overall["faithfulness"] == 1.0
        assert set(report.per_topic) == {"Wireless Security", "Authentication"}
        assert report.per_topic["Authentication"]["n"] == 2

    def test_single_topic_mean_equals_overall(self):
        cases, engine = self._cases_and_engine()
        same_topic = [
            TestCase(case_id=c.case_id, question=c.question, ground_truth=c.ground_truth, topic="T")
            for c in cases
        ]
        report = run_testset(same_topic, engine, self._spec(), deterministic_judge())
        for field in ("correctness", "context_recall", "faithfulness"):
            assert report.per_topic["T"][field] == pytest.approx(report.overall[field], abs=1e-15)

    def test_permutation_invariance(self):
        cases, engine = self._cases_and_engine()
        a = run_testset(cases, engine, self._spec(), deterministic_judge())
        b = run_testset(list(reversed(cases)), engine, self._spec(), deterministic_judge())
        assert report_to_dict(a) == report_to_dict(b)

    def test_case_failure_is_isolated(self):
        cases, engine = self._cases_and_engine()

        class FlakyJudge(DeterministicJudge):
            def split_statements(self, text: str) -> list[str]:
                if "MFA" in text:
                    raise RuntimeError("judge crashed")
                return super().split_statements(text)

        report = run_testset(cases, engine, self._spec(), FlakyJudge())
        assert len(report.per_case) == 2
        assert len(report.errors) == 1
        assert report.errors[0]["case_id"] == "c2"
        assert report.overall["n"] == 2

    def test_empty_testset_rejected(self):
        with pytest.raises(EmptyTestsetError):
            run_testset([], lambda q: None, self._spec(), deterministic_judge())

    def test_parallel_run_matches_serial(self):
        cases, engine = self._cases_and_engine()
        serial = run_testset(cases, engine, self._spec(), deterministic_judge(), parallelism=1)
        parallel = run_testset(cases, engine, self._spec(), deterministic_judge(), parallelism=8)
        assert report_to_dict(serial) == report_to_dict(parallel)


class TestReportIO:
    def test_load_testset_jsonl(self, tmp_path):
        path = tmp_path / "cases.jsonl"
        path.write_text(
            '{"case_id": "c1", "question": "q", "ground_truth": "g", "topic": "Encryption"}\n'
            '{"case_id": "c2", "question": "q2", "ground_truth": "g2"}\n',
            encoding="utf-8",
        )
        cases = load_testset(path)
        assert [c.topic for c in cases] == ["Encryption", "Others"]

    def test_empty_testset_file_rejected(self, tmp_path):
        path = tmp_path / "cases.jsonl"
        path.write_text("\n", encoding="utf-8")
        with pytest.raises(EmptyTestsetError):
            load_testset(path)

    def test_save_load_round_trip(self, tmp_path):
        cases = [TestCase(case_id="c1", question="q", ground_truth="G one. G two.", topic="T")]
        engine = _fake_engine(
            {"q": EngineAnswer(answer="G one. G two.", section_ids=("s",), retrieved_context="G one. G two.")}
        )
        spec = EmbedderSpec(provider_kind="reference_hash", model_id="reference-hash-64", dims=64)
        report = run_testset(cases, engine, spec, deterministic_judge())
        path = tmp_path / "report.json"
        save_report(report, path)
        assert load_report(path) == report_to_dict(report)

    def test_percent_formatting(self):
        assert format_percent(0.88) == "88.0%"
        assert format_percent((0.9 + 0.86) / 2) == "88.0%"
        assert format_percent(0.666) == "66.6%"
        assert format_percent(1.0) == "100.0%"

    def _two_case_report(self) -> dict:
        def row(cid: str, correctness: float) -> dict:
            return {
                "case_id": cid,
                "topic": "Encryption",
                "s_cos": 1.0,
                "factual_f": correctness,
                "correctness": correctness,
                "context_recall": 1.0,
                "faithfulness": 0.9,
                "tp": 1,
                "fp": 0,
                "fn": 0,
                "recall_counts": [1, 1],
                "faith_counts": [9, 10],
                "retrieved_section_ids": ["s1"],
            }

        scores = [0.9, 0.86]
        return {
            "per_case": [row("c1", scores[0]), row("c2", scores[1])],
            "per_topic": {
                "Encryption": {
                    "n": 2,
                    "correctness": sum(scores) / 2,
                    "context_recall": 1.0,
                    "faithfulness": 0.9,
                    "s_cos": 1.0,
                    "factual_f": sum(scores) / 2,
                }
            },
            "overall": {
                "n": 2,
                "correctness": sum(scores) / 2,
                "context_recall": 1.0,
                "faithfulness": 0.9,
                "s_cos": 1.0,
                "factual_f": sum(scores) / 2,
            },
            "errors": [],
        }

    def test_csv_contract_and_percentages(self):
        csv_text = render_csv(self._two_case_report())
        lines = csv_text.strip().split("\n")
        assert lines[0] == "case_id,topic,correctness,context_recall,faithfulness"
        assert lines[1].startswith("c1,Encryption,90.0%")
        assert lines[-1] == "overall,,88.0%,100.0%,90.0%"

    def test_markdown_topic_table(self):
        md = render_markdown(self._two_case_report())
        assert "| Topic | Cases | Correctness | Context recall | Faithfulness |" in md
        assert "| Encryption | 2 | 88.0% |" in md
        assert "88.0%" in md
