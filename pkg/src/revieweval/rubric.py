"""Rubric-based metrics: constructiveness, depth of analysis, adherence.

Constructiveness flags each extracted insight on three binary
dimensions (specificity, feasibility, implementation details); an
insight is actionable when more than one flag is set, and the score is
the actionable fraction. Depth is a five-dimension 0-3 rubric summed
and normalized by 15, with per-dimension panel means rounded half-up.
Adherence averages subjective and objective criterion scores and
normalizes their sum by 6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import fmean
from typing import Sequence

from .errors import (
    NoCriteria,
    NoInsights,
    ScoreOutOfRange,
    UnparseableResponse,
)
from .gateway import ChatRequest, Gateway

INSIGHT_CATEGORIES = ("criticism_point", "methodological_feedback", "suggestion")

_CATEGORY_ALIASES = {
    "cp": "criticism_point",
    "mf": "methodological_feedback",
    "si": "suggestion",
}

DEPTH_DIMENSIONS = (
    "literature_comparison",
    "logical_gaps",
    "methodological_scrutiny",
    "results_interpretation",
    "theoretical_contribution",
)

DEPTH_DIMENSION_MAX = 3
DEPTH_TOTAL = DEPTH_DIMENSION_MAX * len(DEPTH_DIMENSIONS)

CRITERION_KINDS = ("subjective", "objective")

ADHERENCE_DENOMINATOR = 6


@dataclass(frozen=True)
class Insight:
    id: str
    category: str
    text: str

    def __post_init__(self) -> None:
        if self.category not in INSIGHT_CATEGORIES:
            raise ValueError(f"unknown insight category {self.category!r}")


@dataclass(frozen=True)
class InsightScore:
    """Binary flags: specificity, feasibility, implementation details."""

    sigma: int
    phi: int
    zeta: int

    def __post_init__(self) -> None:
        for flag in (self.sigma, self.phi, self.zeta):
            if flag not in (0, 1):
                raise ValueError("insight flags must be 0 or 1")

    @property
    def total(self) -> int:
        return self.sigma + self.phi + self.zeta

    @property
    def actionable(self) -> bool:
        return self.total > 1


@dataclass(frozen=True)
class ConstructivenessReport:
    insights: tuple[Insight, ...]
    scores: tuple[InsightScore, ...]
    s_actionable: float
    actionable_pct: float

    def to_dict(self) -> dict:
        return {
            "actionable": self.s_actionable,
            "actionable_pct": self.actionable_pct,
            "insights": [
                {
                    "id": insight.id,
                    "category": insight.category,
                    "text": insight.text,
                    "specificity": score.sigma,
                    "feasibility": score.phi,
                    "implementation_details": score.zeta,
                    "actionable": score.actionable,
                }
                for insight, score in zip(self.insights, self.scores)
            ],
        }


@dataclass(frozen=True)
class DepthReport:
    dimension_scores: dict[str, int]
    judge_scores: tuple[dict[str, int], ...]
    judge_ids: tuple[str, ...]
    s_depth: float

    def to_dict(self) -> dict:
        return {
            "depth": self.s_depth,
            "dimensions": dict(self.dimension_scores),
            "judges": [
                {"judge_id": judge_id, "scores": dict(scores)}
                for judge_id, scores in zip(self.judge_ids, self.judge_scores)
            ],
        }


@dataclass(frozen=True)
class GuidelineCriterion:
    id: str
    text: str
    kind: str
    score: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in CRITERION_KINDS:
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.score is not None:
            if self.kind == "objective" and self.score not in (0, 3):
                raise ValueError("objective criterion scores are 0 or 3")
            if self.kind == "subjective" and self.score not in (0, 1, 2, 3):
                raise ValueError("subjective criterion scores lie in 0-3")


@dataclass(frozen=True)
class AdherenceReport:
    criteria: tuple[GuidelineCriterion, ...]
    subjective_avg: float
    objective_avg: float
    s_adherence: float

    def to_dict(self) -> dict:
        return {
            "adherence": self.s_adherence,
            "subjective_avg": self.subjective_avg,
            "objective_avg": self.objective_avg,
            "criteria": [
                {"id": c.id, "kind": c.kind, "text": c.text, "score": c.score}
                for c in self.criteria
            ],
        }


# --- constructiveness -----------------------------------------------------------


def extract_insights(review: str, gateway: Gateway) -> list[Insight]:
    """Extract categorized insights, one ``category: text`` line each.

    Raises:
        NoInsights: the review yields no insights at all.
        UnparseableResponse: a line is malformed or its category unknown.
    """
    response = gateway.complete(
        ChatRequest(template_id="insight_extract", variables={"review": review})
    )
    lines = [line.strip() for line in response.text.splitlines() if line.strip()]
    if not lines or lines == ["NONE"]:
        raise NoInsights("review yields no insights")
    insights = []
    for number, line in enumerate(lines, start=1):
        if ":" not in line:
            raise UnparseableResponse(f"malformed insight line {line!r}")
        label, _, text = line.partition(":")
        label = label.strip().lower()
        category = _CATEGORY_ALIASES.get(label, label)
        text = text.strip()
        if category not in INSIGHT_CATEGORIES:
            raise UnparseableResponse(f"unknown insight category {label!r}")
        if not text:
            raise UnparseableResponse(f"empty insight text in line {line!r}")
        insights.append(Insight(id=f"insight-{number}", category=category, text=text))
    return insights


def score_insight(insight: Insight, gateway: Gateway) -> InsightScore:
    """Judge the three binary flags for one insight in a single call."""
    response = gateway.complete(
        ChatRequest(
            template_id="insight_score",
            variables={"category": insight.category, "insight": insight.text},
        )
    )
    flags: dict[str, int] = {}
    for line in response.text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition(":")
        key = key.strip().lower()
        value = value.strip()
        if key not in ("specificity", "feasibility", "implementation_details"):
            raise UnparseableResponse(f"unknown flag {key!r} for {insight.id}")
        if value not in ("0", "1"):
            raise UnparseableResponse(f"flag {key} must be 0 or 1, got {value!r}")
        flags[key] = int(value)
    if set(flags) != {"specificity", "feasibility", "implementation_details"}:
        raise UnparseableResponse(f"incomplete flags {sorted(flags)} for {insight.id}")
    return InsightScore(
        sigma=flags["specificity"],
        phi=flags["feasibility"],
        zeta=flags["implementation_details"],
    )


def constructiveness_score(scores: Sequence[InsightScore]) -> float:
    """Fraction of insights that are actionable, in [0, 1]."""
    if not scores:
        raise NoInsights("no insight scores")
    return sum(1 for score in scores if score.actionable) / len(scores)


def constructiveness_report(review: str, gateway: Gateway) -> ConstructivenessReport:
    insights = extract_insights(review, gateway)
    scores = tuple(score_insight(insight, gateway) for insight in insights)
    fraction = constructiveness_score(scores)
    return ConstructivenessReport(
        insights=tuple(insights),
        scores=scores,
        s_actionable=fraction,
        actionable_pct=fraction * 100.0,
    )


# --- depth of analysis ----------------------------------------------------------


def round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def _parse_depth_response(text: str, judge_id: str) -> dict[str, int]:
    scores: dict[str, int] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition(":")
        key = key.strip().lower()
        value = value.strip()
        if key not in DEPTH_DIMENSIONS:
            raise UnparseableResponse(f"unknown depth dimension {key!r} from {judge_id}")
        try:
            score = int(value)
        except ValueError:
            raise UnparseableResponse(
                f"non-integer depth score {value!r} from {judge_id}"
            ) from None
        if not 0 <= score <= DEPTH_DIMENSION_MAX:
            raise ScoreOutOfRange(f"depth score {score} from {judge_id} outside 0-3")
        scores[key] = score
    if set(scores) != set(DEPTH_DIMENSIONS):
        raise UnparseableResponse(
            f"judge {judge_id} scored {sorted(scores)} instead of all five dimensions"
        )
    return scores


def depth_scores(review: str, panel: Sequence[Gateway]) -> DepthReport:
    """Score review depth with a judge panel.

    Judges may share one underlying backend; the judge id is part of
    the request variables so scripted panels can diverge. Per-dimension
    panel means are rounded half-up back onto the integer 0-3 lattice
    before summing, so the final score is always a multiple of 1/15.
    """
    if not panel:
        raise ValueError("depth panel must have at least one judge")
    judge_ids = tuple(f"judge-{i}" for i in range(1, len(panel) + 1))
    per_judge = []
    for judge_id, judge in zip(judge_ids, panel):
        response = judge.complete(
            ChatRequest(
                template_id="depth_judge",
                variables={"review": review, "judge_id": judge_id},
            )
        )
        per_judge.append(_parse_depth_response(response.text, judge_id))
    dimensions = {
        dim: round_half_up(fmean(scores[dim] for scores in per_judge))
        for dim in DEPTH_DIMENSIONS
    }
    return DepthReport(
        dimension_scores=dimensions,
        judge_scores=tuple(per_judge),
        judge_ids=judge_ids,
        s_depth=sum(dimensions.values()) / DEPTH_TOTAL,
    )


# --- adherence -------------------------------------------------------------------


def extract_criteria(guidelines: str, gateway: Gateway) -> list[GuidelineCriterion]:
    """Extract subjective/objective criteria from venue guidelines.

    Raises:
        NoCriteria: the guidelines yield no criteria.
        UnparseableResponse: a line is malformed or its kind unknown.
    """
    response = gateway.complete(
        ChatRequest(template_id="criteria_extract", variables={"guidelines": guidelines})
    )
    lines = [line.strip() for line in response.text.splitlines() if line.strip()]
    if not lines or lines == ["NONE"]:
        raise NoCriteria("guidelines yield no criteria")
    criteria = []
    for number, line in enumerate(lines, start=1):
        if ":" not in line:
            raise UnparseableResponse(f"malformed criterion line {line!r}")
        kind, _, text = line.partition(":")
        kind = kind.strip().lower()
        text = text.strip()
        if kind not in CRITERION_KINDS:
            raise UnparseableResponse(f"unknown criterion kind {kind!r}")
        if not text:
            raise UnparseableResponse(f"empty criterion text in line {line!r}")
        criteria.append(GuidelineCriterion(id=f"criterion-{number}", text=text, kind=kind))
    return criteria


def score_criterion(
    criterion: GuidelineCriterion, review: str, gateway: Gateway
) -> GuidelineCriterion:
    """Judge one criterion against the review; objective scores are 0 or 3."""
    response = gateway.complete(
        ChatRequest(
            template_id="criterion_judge",
            variables={
                "kind": criterion.kind,
                "criterion": criterion.text,
                "review": review,
            },
        )
    )
    raw = response.text.strip()
    try:
        score = int(raw)
    except ValueError:
        raise UnparseableResponse(
            f"non-integer criterion score {raw!r} for {criterion.id}"
        ) from None
    if criterion.kind == "objective" and score not in (0, 3):
        raise ScoreOutOfRange(f"objective criterion score {score} must be 0 or 3")
    if not 0 <= score <= 3:
        raise ScoreOutOfRange(f"criterion score {score} outside 0-3")
    return GuidelineCriterion(
        id=criterion.id, text=criterion.text, kind=criterion.kind, score=score
    )


def adherence_score(criteria: Sequence[GuidelineCriterion]) -> float:
    """(subjective average + objective average) / 6.

    A category with no criteria takes the other category's average, so
    a single-kind guideline set still scores on the full scale.
    """
    scored = [c for c in criteria if c.score is not None]
    if not scored:
        raise NoCriteria("no scored criteria")
    subjective = [c.score for c in scored if c.kind == "subjective"]
    objective = [c.score for c in scored if c.kind == "objective"]
    subjective_avg = fmean(subjective) if subjective else None
    objective_avg = fmean(objective) if objective else None
    if subjective_avg is None:
        subjective_avg = objective_avg
    if objective_avg is None:
        objective_avg = subjective_avg
    return (subjective_avg + objective_avg) / ADHERENCE_DENOMINATOR


def adherence_report(review: str, guidelines: str, gateway: Gateway) -> AdherenceReport:
    criteria = [
        score_criterion(criterion, review, gateway)
        for criterion in extract_criteria(guidelines, gateway)
    ]
    subjective = [c.score for c in criteria if c.kind == "subjective"]
    objective = [c.score for c in criteria if c.kind == "objective"]
    subjective_avg = fmean(subjective) if subjective else None
    objective_avg = fmean(objective) if objective else None
    if subjective_avg is None:
        subjective_avg = objective_avg
    if objective_avg is None:
        objective_avg = subjective_avg
    return AdherenceReport(
        criteria=tuple(criteria),
        subjective_avg=subjective_avg,
        objective_avg=objective_avg,
        s_adherence=adherence_score(criteria),
    )
