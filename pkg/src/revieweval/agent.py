"""Review generation pipeline.

Stages: parse venue guidelines, compile each guideline into a section
review prompt, refine drafts under a supervisor loop, review each
mapped section, format the assembled review for the venue, and
optionally run an improvement loop driven by the paper-only metrics.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .errors import GatewayFailure, NoGuidelinesFound, ReviewEvalError, UnparseableResponse
from .gateway import ChatRequest, Gateway

logger = logging.getLogger(__name__)

WHOLE_PAPER = "WHOLE_PAPER"

FORMAT_OUTPUT_BUDGET = 8192

_TAG_RE = re.compile(r"<\s*/?\s*[a-zA-Z][^>]*>")
_HEADING_RE = re.compile(r"^(#{1,6})\s+(.*\S)\s*$")
_ENUMERATION_RE = re.compile(r"^\s*(?:\d+[.)]\s+|[-*•]\s+)?(.*)$")

# Metrics a generated review may be improved against; expert-relative
# metrics must never leak into the improvement loop.
IMPROVEMENT_METRICS = ("actionable", "depth", "factual", "adherence")


@dataclass(frozen=True)
class GuidelineSet:
    venue_id: str
    guidelines_text: str
    guideline_items: tuple[str, ...]
    raw_html: str | None = None


@dataclass(frozen=True)
class SectionPrompt:
    id: str
    guideline_id: str
    instruction_text: str
    mapped_sections: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.mapped_sections:
            raise ValueError("a prompt must map to at least one section")


@dataclass(frozen=True)
class SectionReview:
    section: str
    prompt_id: str
    text: str
    refinement_round: int

    def to_dict(self) -> dict:
        return {
            "section": self.section,
            "prompt_id": self.prompt_id,
            "text": self.text,
            "refinement_round": self.refinement_round,
        }


@dataclass(frozen=True)
class GeneratedReview:
    formatted_text: str
    section_reviews: tuple[SectionReview, ...]
    improvement_round: int = 0
    report: dict | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "formatted_text": self.formatted_text,
            "section_reviews": [sr.to_dict() for sr in self.section_reviews],
            "improvement_round": self.improvement_round,
            "report": self.report,
            "error": self.error,
        }


@dataclass(frozen=True)
class RefineResult:
    text: str
    rounds_completed: int
    error: str | None = None


Evaluator = Callable[[GeneratedReview], dict]


def looks_like_html(text: str) -> bool:
    return bool(_TAG_RE.search(text))


def split_enumeration(text: str) -> list[str]:
    """Non-empty lines with leading numbering or bullet markers stripped."""
    items = []
    for line in text.splitlines():
        match = _ENUMERATION_RE.match(line)
        item = match.group(1).strip() if match else line.strip()
        if item:
            items.append(item)
    return items


def parse_guidelines(source: str, gateway: Gateway, venue_id: str = "venue") -> GuidelineSet:
    """Turn raw guideline input into a guideline set.

    HTML goes through the gateway extraction prompt; plain text is
    passed through unchanged and split into items locally without any
    gateway call.

    Raises:
        NoGuidelinesFound: nothing usable came out of the input.
    """
    if looks_like_html(source):
        response = gateway.complete(
            ChatRequest(
                template_id="guidelines_parse",
                variables={"html": source},
                max_output_tokens=FORMAT_OUTPUT_BUDGET,
            )
        )
        text = response.text.strip()
        raw_html = source
    else:
        text = source.strip()
        raw_html = None
    if not text:
        raise NoGuidelinesFound("guideline input produced no text")
    items = split_enumeration(text)
    if not items:
        raise NoGuidelinesFound("guideline text contains no items")
    return GuidelineSet(
        venue_id=venue_id,
        guidelines_text=text,
        guideline_items=tuple(items),
        raw_html=raw_html,
    )


def split_sections(paper: str) -> dict[str, str]:
    """Split a markdown paper into ordered named sections.

    Every heading starts a section named by its text. Text before the
    first heading lands in a "Preamble" section; a paper without any
    heading becomes a single WHOLE_PAPER section.
    """
    sections: dict[str, list[str]] = {}
    current: str | None = None
    preamble: list[str] = []
    for line in paper.splitlines():
        match = _HEADING_RE.match(line)
        if match:
            current = match.group(2)
            sections.setdefault(current, [])
            continue
        if current is None:
            preamble.append(line)
        else:
            sections[current].append(line)
    if not sections:
        text = paper.strip()
        return {WHOLE_PAPER: text} if text else {}
    result = {}
    preamble_text = "\n".join(preamble).strip()
    if preamble_text:
        result["Preamble"] = preamble_text
    for name, lines in sections.items():
        result[name] = "\n".join(lines).strip()
    return result


def compile_prompt(
    guideline: str,
    guideline_id: str,
    section_names: Sequence[str],
    gateway: Gateway,
) -> tuple[SectionPrompt, list[str]]:
    """Compile one guideline into reviewing instructions plus a section map.

    Returns the prompt and any warnings. Section names the mapper
    invents are replaced by WHOLE_PAPER with a warning rather than
    failing the pipeline.
    """
    warnings: list[str] = []
    known = set(section_names)
    map_response = gateway.complete(
        ChatRequest(
            template_id="section_map",
            variables={"guideline": guideline, "sections": "\n".join(section_names)},
        )
    )
    mapped: list[str] = []
    raw_names = [line.strip() for line in map_response.text.splitlines() if line.strip()]
    if not raw_names:
        raise UnparseableResponse(f"empty section mapping for {guideline_id}")
    for name in raw_names:
        if name in known or name == WHOLE_PAPER:
            if name not in mapped:
                mapped.append(name)
        else:
            warnings.append(
                f"{guideline_id}: unknown section {name!r} mapped to {WHOLE_PAPER}"
            )
            if WHOLE_PAPER not in mapped:
                mapped.append(WHOLE_PAPER)
    instruction_response = gateway.complete(
        ChatRequest(
            template_id="section_instructions",
            variables={"section": ", ".join(mapped), "guideline": guideline},
        )
    )
    prompt = SectionPrompt(
        id=f"prompt-{guideline_id}",
        guideline_id=guideline_id,
        instruction_text=instruction_response.text.strip(),
        mapped_sections=tuple(mapped),
    )
    for warning in warnings:
        logger.warning(warning)
    return prompt, warnings


def refine(
    artifact: str, problem_statement: str, gateway: Gateway, rounds: int
) -> RefineResult:
    """Supervisor loop: feedback then revision, ``rounds`` times.

    Zero rounds returns the artifact untouched without any gateway
    call. A gateway failure discards partial progress and returns the
    original input with the error recorded.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    current = artifact
    for round_number in range(rounds):
        try:
            feedback = gateway.complete(
                ChatRequest(
                    template_id="refine_feedback",
                    variables={"artifact": current, "problem": problem_statement},
                )
            )
            revision = gateway.complete(
                ChatRequest(
                    template_id="refine_revise",
                    variables={"artifact": current, "feedback": feedback.text},
                )
            )
        except GatewayFailure as exc:
            logger.warning("refinement aborted in round %d: %s", round_number + 1, exc)
            return RefineResult(text=artifact, rounds_completed=0, error=str(exc))
        current = revision.text
    return RefineResult(text=current, rounds_completed=rounds)


def review_sections(
    sections: dict[str, str],
    prompts: Sequence[SectionPrompt],
    gateway: Gateway,
    refine_rounds: int = 0,
) -> tuple[list[SectionReview], list[str]]:
    """Produce one review per (prompt, mapped section) pair, grouped by section.

    A prompt mapping to a section the paper lacks is skipped for that
    section with a warning. WHOLE_PAPER reviews run over the
    concatenated section texts.
    """
    if not prompts:
        raise ValueError("at least one section prompt is required")
    warnings: list[str] = []
    whole_text = "\n\n".join(sections.values())
    reviews: list[SectionReview] = []
    known = set(sections) | {WHOLE_PAPER}
    for prompt in prompts:
        for name in prompt.mapped_sections:
            if name not in known:
                warnings.append(f"{prompt.id}: section {name!r} missing, skipped")
                logger.warning(warnings[-1])
    # a heading-less paper already IS one WHOLE_PAPER section
    names = list(sections) + ([WHOLE_PAPER] if WHOLE_PAPER not in sections else [])
    for name in names:
        text = whole_text if name == WHOLE_PAPER else sections[name]
        for prompt in prompts:
            if name not in prompt.mapped_sections:
                continue
            response = gateway.complete(
                ChatRequest(
                    template_id="section_review",
                    variables={
                        "instructions": prompt.instruction_text,
                        "section_name": name,
                        "section_text": text,
                    },
                )
            )
            refined = refine(response.text, prompt.instruction_text, gateway, refine_rounds)
            if refined.error:
                warnings.append(f"{prompt.id}/{name}: refinement failed: {refined.error}")
            reviews.append(
                SectionReview(
                    section=name,
                    prompt_id=prompt.id,
                    text=refined.text,
                    refinement_round=refined.rounds_completed,
                )
            )
    return reviews, warnings


def format_review(
    section_reviews: Sequence[SectionReview],
    guidelines: GuidelineSet,
    paper: str,
    gateway: Gateway,
) -> GeneratedReview:
    """Assemble section reviews into one venue-formatted review."""
    if not section_reviews:
        raise ValueError("no section reviews to format")
    reviews_block = "\n\n".join(
        f"[{sr.section}] ({sr.prompt_id})\n{sr.text}" for sr in section_reviews
    )
    response = gateway.complete(
        ChatRequest(
            template_id="review_format",
            variables={
                "guidelines": guidelines.guidelines_text,
                "reviews": reviews_block,
                "paper": paper,
            },
            max_output_tokens=FORMAT_OUTPUT_BUDGET,
        )
    )
    if response.truncated:
        raise GatewayFailure("formatted review exceeded the output token budget")
    return GeneratedReview(
        formatted_text=response.text, section_reviews=tuple(section_reviews)
    )


def improve(
    review: GeneratedReview,
    evaluator: Evaluator,
    gateway: Gateway,
    rounds: int = 1,
) -> GeneratedReview:
    """Iteratively rewrite the review against its own metric scores.

    Only the four paper-only metrics are passed to the model; the
    payload never contains expert-relative scores by construction. An
    evaluator failure stops the loop and returns the last good review
    with the error flagged.
    """
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    current = review
    for _ in range(rounds):
        try:
            report = evaluator(current)
        except ReviewEvalError as exc:
            logger.warning("improvement evaluator failed: %s", exc)
            return replace(current, error=f"evaluator failed: {exc}")
        payload = {
            "scores": {key: report["scores"].get(key) for key in IMPROVEMENT_METRICS},
            "details": {
                key: report.get("details", {}).get(key) for key in IMPROVEMENT_METRICS
            },
        }
        try:
            response = gateway.complete(
                ChatRequest(
                    template_id="review_improve",
                    variables={
                        "review": current.formatted_text,
                        "scores": json.dumps(payload, sort_keys=True),
                    },
                    max_output_tokens=FORMAT_OUTPUT_BUDGET,
                )
            )
        except GatewayFailure as exc:
            logger.warning("improvement call failed: %s", exc)
            return replace(current, report=report, error=str(exc))
        current = GeneratedReview(
            formatted_text=response.text,
            section_reviews=current.section_reviews,
            improvement_round=current.improvement_round + 1,
            report=report,
        )
    return current


def generate_review(
    paper: str,
    guidelines_source: str,
    gateway: Gateway,
    refine_rounds: int = 1,
    improve_rounds: int = 1,
    evaluator: Evaluator | None = None,
    venue_id: str = "venue",
) -> tuple[GeneratedReview, list[str]]:
    """Run the full pipeline from raw guidelines and paper to a review."""
    if improve_rounds > 0 and evaluator is None:
        raise ValueError("improve_rounds > 0 requires an evaluator")
    warnings: list[str] = []
    guidelines = parse_guidelines(guidelines_source, gateway, venue_id=venue_id)
    sections = split_sections(paper)
    section_names = list(sections)
    prompts = []
    for number, item in enumerate(guidelines.guideline_items, start=1):
        raw_prompt, prompt_warnings = compile_prompt(
            item, f"g{number:02d}", section_names, gateway
        )
        warnings.extend(prompt_warnings)
        refined = refine(raw_prompt.instruction_text, item, gateway, refine_rounds)
        if refined.error:
            warnings.append(f"{raw_prompt.id}: prompt refinement failed: {refined.error}")
        prompts.append(replace(raw_prompt, instruction_text=refined.text))
    reviews, review_warnings = review_sections(sections, prompts, gateway, refine_rounds)
    warnings.extend(review_warnings)
    generated = format_review(reviews, guidelines, paper, gateway)
    if improve_rounds > 0:
        generated = improve(generated, evaluator, gateway, improve_rounds)
    return generated, warnings
