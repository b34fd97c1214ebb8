"""Tests for the claim verification pipeline."""

from __future__ import annotations

import pytest

from revieweval.corpus import ChunkConfig, ingest
from revieweval.errors import NoClaims, NoItems, UnparseableResponse
from revieweval.factual import (
    EvidenceRef,
    ReviewClaim,
    VerificationItem,
    aggregate_answers,
    answer_subquestion,
    decompose,
    factual_report,
    generate_question,
    generate_rebuttal,
    score_factual,
    segment_claims,
)

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

DOCUMENT = "alpha beta gamma delta epsilon zeta eta theta"

CHILD_VECTORS = {
    "alpha beta": [1.0, 0.0, 0.0, 0.0],
    "gamma delta": [0.0, 1.0, 0.0, 0.0],
    "epsilon zeta": [0.0, 0.0, 1.0, 0.0],
    "eta theta": [0.0, 0.0, 0.0, 1.0],
}


def build_index(script):
    for text, vector in CHILD_VECTORS.items():
        script.embedding(text, vector)
    config = ChunkConfig(child_tokens=2, parent_tokens=4, overlap_fraction=0.0)
    return ingest(DOCUMENT, script.gateway(), config, document_id="doc")


def claim(text: str, number: int = 1) -> ReviewClaim:
    return ReviewClaim(id=f"claim-{number}", text=text, source_span=(0, len(text)))


def item(number: int, verdict: int | None) -> VerificationItem:
    return VerificationItem(
        claim=claim(f"claim text {number}", number),
        question=f"q{number}",
        sub_questions=(f"sq{number}",),
        sub_answers=(f"a{number}",),
        unified_answer=f"u{number}",
        evidence=(),
        verdict=verdict,
    )


def test_segment_claims_locates_spans(script) -> None:
    review = "The proof is wrong. The tables omit variance."
    script.chat(
        "claim_segment",
        {"review": review},
        "The proof is wrong.\nThe tables omit variance.",
    )
    claims = segment_claims(review, script.gateway())
    assert [c.id for c in claims] == ["claim-1", "claim-2"]
    assert claims[0].source_span == (0, 19)
    assert review[slice(*claims[1].source_span)] == "The tables omit variance."


def test_segment_claims_scans_forward_for_duplicates(script) -> None:
    review = "x. x."
    script.chat("claim_segment", {"review": review}, "x.\nx.")
    claims = segment_claims(review, script.gateway())
    assert claims[0].source_span == (0, 2)
    assert claims[1].source_span == (3, 5)


def test_unlocatable_claim_gets_empty_span(script) -> None:
    script.chat("claim_segment", {"review": "short review"}, "paraphrased claim")
    [only] = segment_claims("short review", script.gateway())
    assert only.source_span == (0, 0)


def test_none_sentinel_raises_no_claims(script) -> None:
    script.chat("claim_segment", {"review": "pure praise"}, "NONE")
    with pytest.raises(NoClaims):
        segment_claims("pure praise", script.gateway())


def test_blank_segmentation_raises_no_claims(script) -> None:
    script.chat("claim_segment", {"review": "blank"}, "  \n ")
    with pytest.raises(NoClaims):
        segment_claims("blank", script.gateway())


def test_augmentation_fixture_question_chain(script) -> None:
    script.chat("claim_segment", {"review": AUGMENTATION_CLAIM}, AUGMENTATION_CLAIM)
    script.chat(
        "verification_question",
        {"claim": AUGMENTATION_CLAIM},
        AUGMENTATION_QUESTION,
    )
    script.chat(
        "question_decompose",
        {"question": AUGMENTATION_QUESTION},
        "\n".join(AUGMENTATION_SUB_QUESTIONS),
    )
    gateway = script.gateway()
    [segmented] = segment_claims(AUGMENTATION_CLAIM, gateway)
    question = generate_question(segmented, gateway)
    assert question == AUGMENTATION_QUESTION
    assert tuple(decompose(question, gateway)) == AUGMENTATION_SUB_QUESTIONS


def test_empty_question_is_unparseable(script) -> None:
    script.chat("verification_question", {"claim": "c"}, "   ")
    with pytest.raises(UnparseableResponse):
        generate_question(claim("c"), script.gateway())


def test_decompose_requires_at_least_one_line(script) -> None:
    script.chat("question_decompose", {"question": "q"}, "\n\n")
    with pytest.raises(UnparseableResponse):
        decompose("q", script.gateway())


def test_answer_subquestion_dedupes_evidence_by_parent(script) -> None:
    index = build_index(script)
    # ranks c0 then c1 (same parent, dropped) then c2 by id tiebreak
    script.embedding("sub q", [1.0, 0.9, 0.0, 0.0])
    context = (
        "[doc:p000000]\nalpha beta gamma delta\n\n"
        "[doc:p000001]\nepsilon zeta eta theta"
    )
    script.chat(
        "subquestion_answer", {"question": "sub q", "context": context}, "the answer"
    )
    answer, evidence = answer_subquestion("sub q", index, script.gateway(), k=3)
    assert answer == "the answer"
    assert evidence == [
        EvidenceRef(chunk_id="doc:c000000", parent_id="doc:p000000"),
        EvidenceRef(chunk_id="doc:c000002", parent_id="doc:p000001"),
    ]


def test_aggregate_passes_answers_through(script) -> None:
    script.chat(
        "answer_aggregate",
        {"question": "q", "answers": "a1\na2"},
        "merged answer",
    )
    assert aggregate_answers("q", ["a1", "a2"], script.gateway()) == "merged answer"


def test_aggregate_requires_answers(script) -> None:
    with pytest.raises(ValueError):
        aggregate_answers("q", [], script.gateway())


def test_aggregate_rejects_empty_response(script) -> None:
    script.chat("answer_aggregate", {"question": "q", "answers": "a"}, " ")
    with pytest.raises(UnparseableResponse):
        aggregate_answers("q", ["a"], script.gateway())


def rebuttal_entry(script, review: str, stances_text: str) -> None:
    evidence = "[claim-1] Q: q1\nA: u1\n\n[claim-2] Q: q2\nA: u2\n\n[claim-3] Q: q3\nA: u3"
    script.chat(
        "rebuttal",
        {"review": review, "evidence": evidence},
        stances_text,
    )


def test_rebuttal_parses_three_row_stance_table(script) -> None:
    rebuttal_entry(
        script,
        "r",
        "We thank the reviewer.\n\nSTANCES:\nclaim-1: supports\nclaim-2: counters\nclaim-3: insufficient\n",
    )
    rebuttal = generate_rebuttal(
        "r", [("claim-1", "q1", "u1"), ("claim-2", "q2", "u2"), ("claim-3", "q3", "u3")],
        script.gateway(),
    )
    assert rebuttal.text == "We thank the reviewer."
    assert rebuttal.stances == {
        "claim-1": "supports",
        "claim-2": "counters",
        "claim-3": "insufficient",
    }


def test_rebuttal_rejects_unknown_stance(script) -> None:
    rebuttal_entry(
        script, "r", "body\nSTANCES:\nclaim-1: agrees\nclaim-2: counters\nclaim-3: counters"
    )
    with pytest.raises(UnparseableResponse):
        generate_rebuttal(
            "r",
            [("claim-1", "q1", "u1"), ("claim-2", "q2", "u2"), ("claim-3", "q3", "u3")],
            script.gateway(),
        )


def test_rebuttal_requires_stance_marker(script) -> None:
    script.chat(
        "rebuttal", {"review": "r", "evidence": "[claim-1] Q: q\nA: u"}, "no table here"
    )
    with pytest.raises(UnparseableResponse):
        generate_rebuttal("r", [("claim-1", "q", "u")], script.gateway())


def test_rebuttal_rejects_incomplete_coverage(script) -> None:
    script.chat(
        "rebuttal",
        {"review": "r", "evidence": "[claim-1] Q: q\nA: u\n\n[claim-2] Q: q2\nA: u2"},
        "body\nSTANCES:\nclaim-1: supports",
    )
    with pytest.raises(UnparseableResponse):
        generate_rebuttal(
            "r", [("claim-1", "q", "u"), ("claim-2", "q2", "u2")], script.gateway()
        )


def test_rebuttal_rejects_duplicate_rows(script) -> None:
    script.chat(
        "rebuttal",
        {"review": "r", "evidence": "[claim-1] Q: q\nA: u"},
        "body\nSTANCES:\nclaim-1: supports\nclaim-1: counters",
    )
    with pytest.raises(UnparseableResponse):
        generate_rebuttal("r", [("claim-1", "q", "u")], script.gateway())


def test_score_is_verified_fraction() -> None:
    items = [item(1, 1), item(2, 1), item(3, 1), item(4, 0)]
    assert score_factual(items) == 0.75
    assert score_factual([item(1, 1), item(2, 1)]) == 1.0
    assert score_factual([item(1, 0)]) == 0.0


def test_score_requires_items() -> None:
    with pytest.raises(NoItems):
        score_factual([])


def test_score_requires_verdicts() -> None:
    with pytest.raises(ValueError):
        score_factual([item(1, None)])


def test_factual_report_end_to_end(script) -> None:
    index = build_index(script)
    review = "first finding here. second finding there."
    script.chat(
        "claim_segment",
        {"review": review},
        "first finding here.\nsecond finding there.",
    )
    script.chat("verification_question", {"claim": "first finding here."}, "q1")
    script.chat("verification_question", {"claim": "second finding there."}, "q2")
    script.chat("question_decompose", {"question": "q1"}, "sq1a\nsq1b")
    script.chat("question_decompose", {"question": "q2"}, "sq2")
    # sq1a and sq1b hit the same parent; its evidence appears once
    script.embedding("sq1a", [1.0, 0.0, 0.0, 0.0])
    script.embedding("sq1b", [0.0, 1.0, 0.0, 0.0])
    script.embedding("sq2", [0.0, 0.0, 0.0, 1.0])
    p0 = "[doc:p000000]\nalpha beta gamma delta"
    p1 = "[doc:p000001]\nepsilon zeta eta theta"
    script.chat("subquestion_answer", {"question": "sq1a", "context": p0}, "a1a")
    script.chat("subquestion_answer", {"question": "sq1b", "context": p0}, "a1b")
    script.chat("subquestion_answer", {"question": "sq2", "context": p1}, "a2")
    script.chat("answer_aggregate", {"question": "q1", "answers": "a1a\na1b"}, "u1")
    script.chat("answer_aggregate", {"question": "q2", "answers": "a2"}, "u2")
    script.chat(
        "rebuttal",
        {"review": review, "evidence": "[claim-1] Q: q1\nA: u1\n\n[claim-2] Q: q2\nA: u2"},
        "Dear reviewer.\nSTANCES:\nclaim-1: supports\nclaim-2: insufficient",
    )
    report = factual_report(review, index, script.gateway(), k=1)
    assert report.s_factual == 0.5
    assert [i.verdict for i in report.items] == [1, 0]
    assert report.items[0].evidence == (
        EvidenceRef(chunk_id="doc:c000000", parent_id="doc:p000000"),
    )
    assert report.items[1].evidence == (
        EvidenceRef(chunk_id="doc:c000003", parent_id="doc:p000001"),
    )
    payload = report.to_dict()
    assert payload["factual"] == 0.5
    assert payload["stances"] == {"claim-1": "supports", "claim-2": "insufficient"}
    assert payload["items"][0]["sub_questions"] == ["sq1a", "sq1b"]
