"""Acceptance suite: one test per release criterion.

Every criterion checks the implementation against an independent
oracle: exact rational arithmetic for the score formulas, a marching
oracle for chunk spans, scipy for the correlation statistics, and
frozen byte hashes for the scripted CLI runs. Each test prints one
PASS line; pytest reports failures.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import socket
import time
from fractions import Fraction
from pathlib import Path

import pytest
import scipy.stats

from conftest import ScriptBuilder
from revieweval.alignment import (
    CoverageConfig,
    SimilarityMatrix,
    clamp_unit,
    coverage_ratio,
)
from revieweval.analytics import (
    METRICS,
    MetricVector,
    contributions,
    leave_one_out,
    pearson,
    unified_score,
)
from revieweval.cli import main as cli_main
from revieweval.corpus import (
    ChunkConfig,
    ingest,
    overlap_tokens,
    plan_chunks,
    span_count,
    window_stride,
)
from revieweval.errors import ZeroUnified
from revieweval.factual import (
    ReviewClaim,
    VerificationItem,
    factual_report,
    score_factual,
)
from revieweval.rubric import (
    DEPTH_DIMENSIONS,
    GuidelineCriterion,
    InsightScore,
    adherence_score,
    constructiveness_score,
    depth_scores,
)

FIXTURES = Path(__file__).parent / "fixtures" / "golden"

TOLERANCE = 1e-9


def passed(line: str) -> None:
    print(f"PASS {line}")


def sha256_of(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def verification_item(number: int, verdict: int | None) -> VerificationItem:
    text = f"claim text {number}"
    return VerificationItem(
        claim=ReviewClaim(id=f"claim-{number}", text=text, source_span=(0, len(text))),
        question=f"q{number}",
        sub_questions=(f"sq{number}",),
        sub_answers=(f"a{number}",),
        unified_answer=f"u{number}",
        evidence=(),
        verdict=verdict,
    )


def exact_round_half_up(value: Fraction) -> int:
    return math.floor(value + Fraction(1, 2))


def depth_response(scores) -> str:
    return "\n".join(f"{dim}: {s}" for dim, s in zip(DEPTH_DIMENSIONS, scores))


# --- criterion 1: score formulas match exact rational arithmetic ---------------


def test_formula_oracles_match_exact_arithmetic() -> None:
    start = time.monotonic()
    rng = random.Random(1001)

    # topic coverage
    for _ in range(1000):
        rows, cols = rng.randint(1, 6), rng.randint(1, 6)
        tau = rng.randint(1, 3)
        cells = [[rng.randint(0, 3) for _ in range(cols)] for _ in range(rows)]
        covered = sum(1 for j in range(cols) if max(r[j] for r in cells) >= tau)
        got = coverage_ratio(
            SimilarityMatrix(tuple(map(tuple, cells))), CoverageConfig(tau=tau)
        )
        assert abs(got - float(Fraction(covered, cols))) <= TOLERANCE

    # factual correctness
    for _ in range(1000):
        n = rng.randint(1, 12)
        verdicts = [rng.randint(0, 1) for _ in range(n)]
        items = [verification_item(i + 1, v) for i, v in enumerate(verdicts)]
        expected = Fraction(sum(verdicts), n)
        assert abs(score_factual(items) - float(expected)) <= TOLERANCE

    # constructiveness
    for _ in range(1000):
        n = rng.randint(1, 10)
        flags = [
            InsightScore(rng.randint(0, 1), rng.randint(0, 1), rng.randint(0, 1))
            for _ in range(n)
        ]
        actionable = sum(1 for f in flags if f.sigma + f.phi + f.zeta > 1)
        expected = Fraction(actionable, n)
        assert abs(constructiveness_score(flags) - float(expected)) <= TOLERANCE

    # depth: per-dimension panel means rounded half-up, summed over 15
    builder = ScriptBuilder()
    trials = []
    for t in range(1000):
        size = rng.randint(1, 4)
        judge_scores = [[rng.randint(0, 3) for _ in range(5)] for _ in range(size)]
        review = f"depth review {t}"
        for j, scores in enumerate(judge_scores, start=1):
            builder.chat(
                "depth_judge",
                {"review": review, "judge_id": f"judge-{j}"},
                depth_response(scores),
            )
        trials.append((review, size, judge_scores))
    gateway = builder.gateway()
    for review, size, judge_scores in trials:
        report = depth_scores(review, [gateway] * size)
        exact = Fraction(
            sum(
                exact_round_half_up(Fraction(sum(col), size))
                for col in zip(*judge_scores)
            ),
            15,
        )
        assert abs(report.s_depth - float(exact)) <= TOLERANCE

    # adherence with the empty-category mirror rule
    for _ in range(1000):
        n_subj = rng.randint(0, 5)
        n_obj = rng.randint(0 if n_subj else 1, 5)
        criteria = [
            GuidelineCriterion(f"criterion-{i}", f"s{i}", "subjective", rng.randint(0, 3))
            for i in range(n_subj)
        ] + [
            GuidelineCriterion(
                f"criterion-{n_subj + i}", f"o{i}", "objective", rng.choice((0, 3))
            )
            for i in range(n_obj)
        ]
        subj = [Fraction(c.score) for c in criteria if c.kind == "subjective"]
        obj = [Fraction(c.score) for c in criteria if c.kind == "objective"]
        subj_avg = sum(subj) / len(subj) if subj else None
        obj_avg = sum(obj) / len(obj) if obj else None
        if subj_avg is None:
            subj_avg = obj_avg
        if obj_avg is None:
            obj_avg = subj_avg
        expected = (subj_avg + obj_avg) / 6
        assert abs(adherence_score(criteria) - float(expected)) <= TOLERANCE

    # unified score, leave-one-out, contribution shares
    for _ in range(1000):
        hundredths = [rng.randint(0, 100) for _ in range(6)]
        vector = MetricVector(*[h / 100 for h in hundredths])
        exact_unified = Fraction(sum(hundredths), 600)
        assert abs(unified_score(vector) - float(exact_unified)) <= TOLERANCE
        loo = leave_one_out(vector)
        for name, h in zip(METRICS, hundredths):
            exact_adjusted = Fraction(sum(hundredths) - h, 500)
            assert abs(loo[name].adjusted - float(exact_adjusted)) <= TOLERANCE
            assert (
                abs(loo[name].abs_change - float(exact_adjusted - exact_unified))
                <= TOLERANCE
            )
        if exact_unified == 0:
            with pytest.raises(ZeroUnified):
                contributions(vector)
        else:
            shares = contributions(vector)
            assert abs(sum(shares.values()) - 100.0) <= TOLERANCE
            for name, h in zip(METRICS, hundredths):
                exact_share = Fraction(h, 100) / 6 / exact_unified * 100
                assert abs(shares[name] - float(exact_share)) <= TOLERANCE

    # pearson r and p against scipy
    for _ in range(1000):
        n = rng.randint(3, 30)
        x = [rng.uniform(-10, 10) for _ in range(n)]
        y = [rng.uniform(-10, 10) for _ in range(n)]
        ours = pearson(x, y)
        reference = scipy.stats.pearsonr(x, y)
        assert abs(ours.r - reference.statistic) <= TOLERANCE
        assert abs(ours.p - reference.pvalue) <= TOLERANCE

    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    passed(f"score formulas match exact arithmetic ({elapsed:.1f}s)")


# --- criterion 2: chunk spans match a marching oracle ---------------------------


def marching_spans(length: int, window: int, overlap_fraction: float) -> list:
    """Independent oracle: walk fixed-stride windows until the end is covered."""
    stride = window - math.floor(overlap_fraction * window)
    spans = []
    start = 0
    while True:
        end = min(start + window, length)
        spans.append((start, end))
        if end >= length:
            return spans
        start += stride


def test_chunk_plans_match_marching_oracle() -> None:
    start = time.monotonic()
    rng = random.Random(2002)
    for _ in range(200):
        length = rng.randint(50, 50_000)
        child = rng.randint(10, 500)
        parent = child * rng.randint(1, 8)
        overlap = rng.choice((0.0, 0.05, 0.1, 0.25, 0.4, 0.5))
        config = ChunkConfig(
            child_tokens=child, parent_tokens=parent, overlap_fraction=overlap
        )
        plan = plan_chunks(length, config)

        parent_spans = [span for span, _ in plan]
        assert parent_spans == marching_spans(length, parent, overlap)
        stride = window_stride(parent, overlap)
        assert len(parent_spans) == span_count(length, parent, stride)
        assert parent_spans[0][0] == 0
        assert parent_spans[-1][1] == length
        for (_, prev_end), (next_start, _) in zip(parent_spans, parent_spans[1:]):
            assert prev_end - next_start == overlap_tokens(parent, overlap)

        for (p_start, p_end), child_spans in plan:
            p_len = p_end - p_start
            expected = [
                (p_start + a, p_start + b)
                for a, b in marching_spans(p_len, child, overlap)
            ]
            assert child_spans == expected
            assert len(child_spans) == span_count(
                p_len, child, window_stride(child, overlap)
            )
            assert child_spans[0][0] == p_start
            assert child_spans[-1][1] == p_end
            for (_, prev_end), (next_start, _) in zip(child_spans, child_spans[1:]):
                assert prev_end - next_start == overlap_tokens(child, overlap)
            for a, b in child_spans:
                assert p_start <= a < b <= p_end

    # spans tie back to real text when ingesting
    for trial in range(5):
        token_count = rng.randint(100, 3_000)
        tokens = [f"w{i}" for i in range(token_count)]
        builder = ScriptBuilder().hashed(4)
        config = ChunkConfig(child_tokens=40, parent_tokens=160, overlap_fraction=0.1)
        index = ingest(" ".join(tokens), builder.gateway(), config, document_id="doc")
        for child_chunk in index.children:
            a, b = child_chunk.token_span
            assert child_chunk.text == " ".join(tokens[a:b])

    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    passed(f"chunk spans match the marching oracle ({elapsed:.1f}s)")


# --- criterion 3: scores stay on their lattices and in bounds -------------------


def test_scores_stay_in_bounds_and_on_lattices() -> None:
    rng = random.Random(3003)

    builder = ScriptBuilder()
    trials = []
    for t in range(300):
        scores = [rng.randint(0, 3) for _ in range(5)]
        review = f"bounds review {t}"
        builder.chat(
            "depth_judge", {"review": review, "judge_id": "judge-1"}, depth_response(scores)
        )
        trials.append((review, scores))
    gateway = builder.gateway()
    for review, scores in trials:
        report = depth_scores(review, [gateway])
        assert report.s_depth == sum(scores) / 15
        assert 0.0 <= report.s_depth <= 1.0

    for _ in range(500):
        rows, cols = rng.randint(1, 5), rng.randint(1, 5)
        matrix = SimilarityMatrix(
            tuple(tuple(rng.randint(0, 3) for _ in range(cols)) for _ in range(rows))
        )
        value = coverage_ratio(matrix, CoverageConfig(tau=rng.randint(1, 3)))
        assert 0.0 <= value <= 1.0

        n = rng.randint(1, 10)
        factual = score_factual(
            [verification_item(i + 1, rng.randint(0, 1)) for i in range(n)]
        )
        assert 0.0 <= factual <= 1.0

        flags = [
            InsightScore(rng.randint(0, 1), rng.randint(0, 1), rng.randint(0, 1))
            for _ in range(rng.randint(1, 8))
        ]
        assert 0.0 <= constructiveness_score(flags) <= 1.0

        criteria = [
            GuidelineCriterion("criterion-1", "s", "subjective", rng.randint(0, 3)),
            GuidelineCriterion("criterion-2", "o", "objective", rng.choice((0, 3))),
        ]
        assert 0.0 <= adherence_score(criteria) <= 1.0

        assert 0.0 <= clamp_unit(rng.uniform(-2.0, 2.0)) <= 1.0

    passed("scores stay in [0, 1] and depth stays on the fifteenths lattice")


# --- criterion 4: monotonicity ---------------------------------------------------


def test_monotonicity_of_threshold_and_flips() -> None:
    rng = random.Random(4004)

    for _ in range(500):
        rows, cols = rng.randint(1, 6), rng.randint(1, 6)
        matrix = SimilarityMatrix(
            tuple(tuple(rng.randint(0, 3) for _ in range(cols)) for _ in range(rows))
        )
        by_tau = [coverage_ratio(matrix, CoverageConfig(tau=t)) for t in (1, 2, 3)]
        assert by_tau[0] >= by_tau[1] >= by_tau[2]

    # flipping one insight to actionable lands exactly on the next lattice point
    for n in range(1, 9):
        for c in range(n):
            flags = [InsightScore(1, 1, 0)] * c + [InsightScore(0, 0, 0)] * (n - c)
            before = constructiveness_score(flags)
            flipped = [InsightScore(1, 1, 0)] * (c + 1) + [InsightScore(0, 0, 0)] * (
                n - c - 1
            )
            after = constructiveness_score(flipped)
            assert before == c / n
            assert after == (c + 1) / n
            assert after > before
            assert abs((after - before) - 1 / n) <= TOLERANCE

    # flipping one claim verdict to supported raises the factual score one step
    for _ in range(300):
        n = rng.randint(1, 10)
        verdicts = [rng.randint(0, 1) for _ in range(n)]
        if all(verdicts):
            verdicts[rng.randrange(n)] = 0
        k = sum(verdicts)
        before = score_factual(
            [verification_item(i + 1, v) for i, v in enumerate(verdicts)]
        )
        flip_at = verdicts.index(0)
        verdicts[flip_at] = 1
        after = score_factual(
            [verification_item(i + 1, v) for i, v in enumerate(verdicts)]
        )
        assert before == k / n
        assert after == (k + 1) / n
        assert after > before

    passed("coverage is monotone in the threshold; flips move scores one lattice step")


# --- criterion 5: golden scripted CLI runs reproduce frozen bytes ----------------


def substituted_args(template: list[str], out_dir: Path) -> list[str]:
    return [
        arg.replace("{FIX}", str(FIXTURES)).replace("{OUT}", str(out_dir))
        for arg in template
    ]


def test_golden_scripted_runs_reproduce_frozen_bytes(tmp_path, monkeypatch) -> None:
    start = time.monotonic()

    def no_network(*args, **kwargs):
        raise AssertionError("network access attempted during a scripted run")

    monkeypatch.setattr(socket, "socket", no_network)
    expected = json.loads((FIXTURES / "expected.json").read_text("utf-8"))

    eval_out = tmp_path / "eval"
    assert cli_main(substituted_args(expected["evaluate"]["args"], eval_out)) == 0
    assert sha256_of(eval_out / "report.json") == expected["evaluate"]["report_sha256"]
    report = json.loads((eval_out / "report.json").read_text("utf-8"))
    assert report["scores"] == expected["evaluate"]["scores"]
    assert report["unified"] == expected["evaluate"]["unified"]

    review_out = tmp_path / "review"
    assert cli_main(substituted_args(expected["review"]["args"], review_out)) == 0
    assert sha256_of(review_out / "report.json") == expected["review"]["report_sha256"]
    assert sha256_of(review_out / "review.md") == expected["review"]["review_md_sha256"]
    assert (
        sha256_of(review_out / "review.json") == expected["review"]["review_json_sha256"]
    )

    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    passed(f"golden scripted runs reproduce the frozen bytes ({elapsed:.1f}s)")


# --- criterion 6: replay reproduces a recorded run byte for byte ----------------


def replay_args(template: list[str], out_dir: Path, transcript: Path) -> list[str]:
    args = substituted_args(template, out_dir)
    script_flag = args.index("--script")
    del args[script_flag : script_flag + 2]
    args[args.index("scripted")] = "replay"
    return args + ["--transcript", str(transcript)]


def test_replay_is_byte_identical_and_improvement_payload_is_paper_only(
    tmp_path,
) -> None:
    expected = json.loads((FIXTURES / "expected.json").read_text("utf-8"))

    for command in ("evaluate", "review"):
        recorded = tmp_path / f"{command}_recorded"
        replayed = tmp_path / f"{command}_replayed"
        assert cli_main(substituted_args(expected[command]["args"], recorded)) == 0
        assert (
            cli_main(
                replay_args(
                    expected[command]["args"], replayed, recorded / "transcript.jsonl"
                )
            )
            == 0
        )
        for name in ("report.json", "transcript.jsonl"):
            assert (replayed / name).read_bytes() == (recorded / name).read_bytes()
        if command == "review":
            assert (replayed / "review.md").read_bytes() == (
                recorded / "review.md"
            ).read_bytes()

    improve_requests = [
        json.loads(line)
        for line in (tmp_path / "review_recorded" / "transcript.jsonl")
        .read_text("utf-8")
        .splitlines()
        if '"review_improve"' in line
    ]
    assert improve_requests
    for record in improve_requests:
        payload = json.loads(record["request"]["variables"]["scores"])
        assert sorted(payload["scores"]) == ["actionable", "adherence", "depth", "factual"]
        assert sorted(payload["details"]) == ["actionable", "adherence", "depth", "factual"]

    passed("replayed runs are byte-identical; improvement sees only paper-only metrics")


# --- criterion 7: the augmentation fixture round-trips verbatim ------------------


AUGMENTATION_CLAIM = (
    "Augmentation represents a crucial area of exploration in self-supervised"
    " learning. Given that the authors classify their method as a form of"
    " augmentation, it becomes essential to engage in comparisons and"
    " discussions with existing augmentation methods."
)

AUGMENTATION_QUESTION = (
    "Has the paper engaged in comparisons and discussions with existing"
    " augmentation methods, given that the authors classify their method as a"
    " form of augmentation?"
)

AUGMENTATION_SUB_QUESTIONS = (
    "Has the paper compared its augmentation method against existing"
    " augmentation methods?",
    "Does the paper discuss the strengths and weaknesses of related"
    " augmentation techniques?",
)


def test_augmentation_fixture_round_trips_verbatim() -> None:
    builder = ScriptBuilder()
    builder.embedding("their method is an augmentation", [1.0, 0.0])
    builder.embedding("related augmentation techniques", [0.0, 1.0])
    builder.chat("claim_segment", {"review": AUGMENTATION_CLAIM}, AUGMENTATION_CLAIM)
    builder.chat(
        "verification_question", {"claim": AUGMENTATION_CLAIM}, AUGMENTATION_QUESTION
    )
    builder.chat(
        "question_decompose",
        {"question": AUGMENTATION_QUESTION},
        "\n".join(AUGMENTATION_SUB_QUESTIONS),
    )
    paper = "their method is an augmentation related augmentation techniques"
    config = ChunkConfig(child_tokens=5, parent_tokens=10, overlap_fraction=0.0)
    gateway = builder.gateway()
    index = ingest(paper, gateway, config, document_id="doc")
    for i, sub_question in enumerate(AUGMENTATION_SUB_QUESTIONS):
        builder.embedding(sub_question, [1.0, 0.0] if i == 0 else [0.0, 1.0])
        builder.chat(
            "subquestion_answer",
            {"question": sub_question, "context": f"[doc:p000000]\n{paper}"},
            f"answer {i + 1}",
        )
    builder.chat(
        "answer_aggregate",
        {"question": AUGMENTATION_QUESTION, "answers": "answer 1\nanswer 2"},
        "The paper does not compare against existing augmentation methods.",
    )
    builder.chat(
        "rebuttal",
        {
            "review": AUGMENTATION_CLAIM,
            "evidence": (
                f"[claim-1] Q: {AUGMENTATION_QUESTION}\n"
                "A: The paper does not compare against existing augmentation methods."
            ),
        },
        "The comparison is indeed missing.\nSTANCES:\nclaim-1: supports",
    )
    gateway = builder.gateway()
    report = factual_report(AUGMENTATION_CLAIM, index, gateway, k=1)
    [item] = report.items
    assert item.claim.text == AUGMENTATION_CLAIM
    assert item.question == AUGMENTATION_QUESTION
    assert item.sub_questions == AUGMENTATION_SUB_QUESTIONS
    assert item.verdict == 1
    assert report.s_factual == 1.0
    passed("the augmentation fixture round-trips verbatim through the pipeline")


# --- criterion 8: correlation exactness and significance -------------------------


def test_correlation_exactness_and_significance() -> None:
    x = [float(i) for i in range(1, 25)]
    up = pearson(x, [3.0 * v + 7.0 for v in x])
    down = pearson(x, [-2.0 * v + 50.0 for v in x])
    assert up.r == 1.0
    assert up.p == 0.0
    assert down.r == -1.0
    assert down.p == 0.0

    # plant r = 0.9 at n = 100 by mixing orthonormalized components
    n = 100
    target = 0.9
    base = [float(i) for i in range(n)]
    seed = [(-1.0) ** i for i in range(n)]
    mean_base = sum(base) / n
    zx = [v - mean_base for v in base]
    norm_zx = math.sqrt(sum(v * v for v in zx))
    zx = [v / norm_zx for v in zx]
    mean_seed = sum(seed) / n
    residual = [s - mean_seed for s in seed]
    projection = sum(r * v for r, v in zip(residual, zx))
    residual = [r - projection * v for r, v in zip(residual, zx)]
    norm_residual = math.sqrt(sum(v * v for v in residual))
    zy = [v / norm_residual for v in residual]
    y = [
        target * a + math.sqrt(1.0 - target * target) * b for a, b in zip(zx, zy)
    ]
    planted = pearson(base, y)
    assert planted.r == pytest.approx(target, abs=1e-12)
    assert planted.p < 0.001
    reference = scipy.stats.pearsonr(base, y)
    assert planted.p == pytest.approx(reference.pvalue, rel=1e-6, abs=1e-30)

    passed("planted correlations are exact and strongly significant")
