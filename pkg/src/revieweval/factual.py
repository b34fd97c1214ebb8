"""Factual correctness via simulated author rebuttal.

Each checkable claim in the review becomes a verification question,
the question is decomposed into sub-questions answered from retrieved
paper chunks, the sub-answers are unified, and a rebuttal written from
that evidence takes a stance per claim. A claim counts as verified
only when the rebuttal supports it; the score is the verified fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import CorpusIndex, parent_of, search
from .errors import NoClaims, NoItems, UnparseableResponse
from .gateway import ChatRequest, Gateway

STANCES = ("supports", "counters", "insufficient")

DEFAULT_RETRIEVAL_K = 4

NO_CLAIMS_SENTINEL = "NONE"


@dataclass(frozen=True)
class ReviewClaim:
    id: str
    text: str
    source_span: tuple[int, int]


@dataclass(frozen=True)
class EvidenceRef:
    chunk_id: str
    parent_id: str


@dataclass(frozen=True)
class VerificationItem:
    claim: ReviewClaim
    question: str
    sub_questions: tuple[str, ...]
    sub_answers: tuple[str, ...]
    unified_answer: str
    evidence: tuple[EvidenceRef, ...]
    verdict: int | None = None

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim.id,
            "claim": self.claim.text,
            "source_span": list(self.claim.source_span),
            "question": self.question,
            "sub_questions": list(self.sub_questions),
            "sub_answers": list(self.sub_answers),
            "unified_answer": self.unified_answer,
            "evidence": [
                {"chunk_id": ref.chunk_id, "parent_id": ref.parent_id}
                for ref in self.evidence
            ],
            "verdict": self.verdict,
        }


@dataclass(frozen=True)
class Rebuttal:
    text: str
    stances: dict[str, str]


@dataclass(frozen=True)
class FactualReport:
    items: tuple[VerificationItem, ...]
    rebuttal: Rebuttal
    s_factual: float

    def to_dict(self) -> dict:
        return {
            "factual": self.s_factual,
            "items": [item.to_dict() for item in self.items],
            "rebuttal": self.rebuttal.text,
            "stances": dict(self.rebuttal.stances),
        }


def segment_claims(review: str, gateway: Gateway) -> list[ReviewClaim]:
    """Split a review into checkable claims.

    Source spans are located by exact substring match scanning forward,
    so spans never overlap; a claim the review does not contain verbatim
    gets the empty span (0, 0).

    Raises:
        NoClaims: the review contains nothing checkable.
    """
    response = gateway.complete(
        ChatRequest(template_id="claim_segment", variables={"review": review})
    )
    lines = [line.strip() for line in response.text.splitlines() if line.strip()]
    if not lines or lines == [NO_CLAIMS_SENTINEL]:
        raise NoClaims("review yields no checkable claims")
    claims = []
    cursor = 0
    for number, line in enumerate(lines, start=1):
        position = review.find(line, cursor)
        if position >= 0:
            span = (position, position + len(line))
            cursor = span[1]
        else:
            span = (0, 0)
        claims.append(ReviewClaim(id=f"claim-{number}", text=line, source_span=span))
    return claims


def generate_question(claim: ReviewClaim, gateway: Gateway) -> str:
    response = gateway.complete(
        ChatRequest(template_id="verification_question", variables={"claim": claim.text})
    )
    question = response.text.strip()
    if not question:
        raise UnparseableResponse(f"empty verification question for {claim.id}")
    return question


def decompose(question: str, gateway: Gateway) -> list[str]:
    """Split a verification question into one or more sub-questions."""
    response = gateway.complete(
        ChatRequest(template_id="question_decompose", variables={"question": question})
    )
    sub_questions = [line.strip() for line in response.text.splitlines() if line.strip()]
    if not sub_questions:
        raise UnparseableResponse("decomposition produced zero sub-questions")
    return sub_questions


def answer_subquestion(
    question: str,
    index: CorpusIndex,
    gateway: Gateway,
    k: int = DEFAULT_RETRIEVAL_K,
) -> tuple[str, list[EvidenceRef]]:
    """Answer one sub-question from retrieved paper context.

    Retrieves the top-k child chunks, expands each to its parent
    section, and prompts with the deduplicated parent texts. Evidence
    keeps one reference per distinct parent, carrying the best-ranked
    chunk that selected it.
    """
    hits = search(index, question, k, gateway)
    evidence: list[EvidenceRef] = []
    parents = []
    seen_parents = set()
    for hit in hits:
        parent = parent_of(index, hit.chunk)
        if parent.id in seen_parents:
            continue
        seen_parents.add(parent.id)
        evidence.append(EvidenceRef(chunk_id=hit.chunk.id, parent_id=parent.id))
        parents.append(parent)
    context = "\n\n".join(f"[{parent.id}]\n{parent.text}" for parent in parents)
    response = gateway.complete(
        ChatRequest(
            template_id="subquestion_answer",
            variables={"question": question, "context": context},
        )
    )
    return response.text.strip(), evidence


def aggregate_answers(question: str, sub_answers: Sequence[str], gateway: Gateway) -> str:
    """Merge sub-answers into one unified answer to the question."""
    if not sub_answers:
        raise ValueError("at least one sub-answer is required")
    response = gateway.complete(
        ChatRequest(
            template_id="answer_aggregate",
            variables={"question": question, "answers": "\n".join(sub_answers)},
        )
    )
    unified = response.text.strip()
    if not unified:
        raise UnparseableResponse("aggregation returned empty answer")
    return unified


def generate_rebuttal(
    review: str,
    evidence_answers: Sequence[tuple[str, str, str]],
    gateway: Gateway,
) -> Rebuttal:
    """Write the evidence-based rebuttal and parse its stance table.

    Args:
        review: the full review under rebuttal.
        evidence_answers: (claim_id, question, unified_answer) triples.
        gateway: chat provider.

    Raises:
        UnparseableResponse: missing stance section, an unknown stance
            word, or a stance table that does not cover each claim
            exactly once.
    """
    evidence_block = "\n\n".join(
        f"[{claim_id}] Q: {question}\nA: {answer}"
        for claim_id, question, answer in evidence_answers
    )
    response = gateway.complete(
        ChatRequest(
            template_id="rebuttal",
            variables={"review": review, "evidence": evidence_block},
        )
    )
    text = response.text
    marker = "STANCES:"
    position = text.find(marker)
    if position < 0:
        raise UnparseableResponse("rebuttal lacks a STANCES: section")
    body = text[:position].strip()
    stances: dict[str, str] = {}
    for line in text[position + len(marker) :].splitlines():
        line = line.strip()
        if not line:
            continue
        if ":" not in line:
            raise UnparseableResponse(f"malformed stance row {line!r}")
        claim_id, _, stance = line.partition(":")
        claim_id = claim_id.strip()
        stance = stance.strip().lower()
        if stance not in STANCES:
            raise UnparseableResponse(f"unknown stance {stance!r} for {claim_id}")
        if claim_id in stances:
            raise UnparseableResponse(f"duplicate stance row for {claim_id}")
        stances[claim_id] = stance
    expected_ids = {claim_id for claim_id, _, _ in evidence_answers}
    if set(stances) != expected_ids:
        raise UnparseableResponse(
            f"stance table covers {sorted(stances)} but claims are {sorted(expected_ids)}"
        )
    return Rebuttal(text=body, stances=stances)


def score_factual(items: Sequence[VerificationItem]) -> float:
    """Fraction of claims whose verdict is 1."""
    if not items:
        raise NoItems("no verification items to score")
    for item in items:
        if item.verdict is None:
            raise ValueError(f"verdict unset for {item.claim.id}")
    return sum(item.verdict for item in items) / len(items)


def factual_report(
    review: str,
    index: CorpusIndex,
    gateway: Gateway,
    k: int = DEFAULT_RETRIEVAL_K,
) -> FactualReport:
    """Run the full verification pipeline for one review."""
    claims = segment_claims(review, gateway)
    items = []
    for claim in claims:
        question = generate_question(claim, gateway)
        sub_questions = decompose(question, gateway)
        sub_answers = []
        evidence: list[EvidenceRef] = []
        seen_parents = set()
        for sub_question in sub_questions:
            answer, refs = answer_subquestion(sub_question, index, gateway, k)
            sub_answers.append(answer)
            for ref in refs:
                if ref.parent_id not in seen_parents:
                    seen_parents.add(ref.parent_id)
                    evidence.append(ref)
        unified = aggregate_answers(question, sub_answers, gateway)
        items.append(
            VerificationItem(
                claim=claim,
                question=question,
                sub_questions=tuple(sub_questions),
                sub_answers=tuple(sub_answers),
                unified_answer=unified,
                evidence=tuple(evidence),
            )
        )
    rebuttal = generate_rebuttal(
        review,
        [(item.claim.id, item.question, item.unified_answer) for item in items],
        gateway,
    )
    items = [
        replace(item, verdict=1 if rebuttal.stances[item.claim.id] == "supports" else 0)
        for item in items
    ]
    return FactualReport(
        items=tuple(items), rebuttal=rebuttal, s_factual=score_factual(items)
    )
