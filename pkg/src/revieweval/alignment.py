"""Expert-relative alignment metrics: semantic similarity and topic coverage.

Semantic similarity is the raw cosine between whole-review embeddings;
the report keeps the raw value and a [0, 1]-clamped copy used for
aggregation. Topic coverage extracts topic lists from both reviews,
has a judge grade every (candidate, expert) topic pair on a 0-3
overlap scale, and counts the fraction of expert topics whose best
match reaches a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NoExpertTopics, UnparseableResponse
from .gateway import ChatRequest, Gateway, cosine_similarity

TOPIC_OVERLAP_SCORES = {"none": 0, "weak": 1, "moderate": 2, "strong": 3}

DEFAULT_TAU = 2


@dataclass(frozen=True)
class TopicSet:
    review_id: str
    topics: tuple[str, ...]

    def __post_init__(self) -> None:
        for topic in self.topics:
            if not topic.strip():
                raise ValueError("topics must be non-empty")


@dataclass(frozen=True)
class SimilarityMatrix:
    """Grid of judged overlaps; rows index candidate topics, columns expert topics."""

    cells: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        widths = {len(row) for row in self.cells}
        if len(widths) > 1:
            raise ValueError("ragged similarity matrix")
        for row in self.cells:
            for value in row:
                if value not in (0, 1, 2, 3):
                    raise ValueError(f"cell {value} outside the 0-3 lattice")

    @property
    def rows(self) -> int:
        return len(self.cells)

    @property
    def cols(self) -> int:
        return len(self.cells[0]) if self.cells else 0

    def column_max(self, j: int) -> int:
        return max((row[j] for row in self.cells), default=0)


@dataclass(frozen=True)
class CoverageConfig:
    tau: int = DEFAULT_TAU

    def __post_init__(self) -> None:
        if self.tau not in (1, 2, 3):
            raise ValueError("tau must be 1, 2, or 3")


@dataclass(frozen=True)
class AlignmentReport:
    s_semantic: float
    s_semantic_raw: float
    s_coverage: float
    topics_candidate: tuple[str, ...]
    topics_expert: tuple[str, ...]
    matrix: SimilarityMatrix
    tau: int
    covered_columns: tuple[bool, ...]

    def to_dict(self) -> dict:
        return {
            "semantic": self.s_semantic,
            "semantic_raw": self.s_semantic_raw,
            "coverage": self.s_coverage,
            "topics_candidate": list(self.topics_candidate),
            "topics_expert": list(self.topics_expert),
            "matrix": [list(row) for row in self.matrix.cells],
            "tau": self.tau,
            "covered_columns": list(self.covered_columns),
        }


def clamp_unit(value: float) -> float:
    return min(1.0, max(0.0, value))


def semantic_similarity(candidate_review: str, expert_review: str, gateway: Gateway) -> float:
    """Raw cosine between the two reviews' embeddings; may be negative."""
    vectors = gateway.embed([candidate_review, expert_review])
    return cosine_similarity(vectors[0].values, vectors[1].values)


def extract_topics(review: str, gateway: Gateway, review_id: str = "review") -> TopicSet:
    """Pull the line-delimited topic list for a review out of the model."""
    response = gateway.complete(
        ChatRequest(template_id="topic_extract", variables={"review": review})
    )
    topics = tuple(line.strip() for line in response.text.splitlines() if line.strip())
    if not topics:
        raise UnparseableResponse("topic extraction returned zero topics")
    return TopicSet(review_id=review_id, topics=topics)


def judge_topic_pair(candidate_topic: str, expert_topic: str, gateway: Gateway) -> int:
    """Grade one topic pair on the 0-3 overlap scale."""
    response = gateway.complete(
        ChatRequest(
            template_id="topic_judge",
            variables={"topic_a": candidate_topic, "topic_b": expert_topic},
        )
    )
    answer = response.text.strip().lower().rstrip(".!")
    if answer not in TOPIC_OVERLAP_SCORES:
        raise UnparseableResponse(f"unknown overlap grade {response.text!r}")
    return TOPIC_OVERLAP_SCORES[answer]


def build_similarity_matrix(
    topics_candidate: TopicSet, topics_expert: TopicSet, gateway: Gateway
) -> SimilarityMatrix:
    """Judge every (candidate, expert) topic pair, row-major."""
    cells = tuple(
        tuple(
            judge_topic_pair(candidate, expert, gateway)
            for expert in topics_expert.topics
        )
        for candidate in topics_candidate.topics
    )
    return SimilarityMatrix(cells=cells)


def coverage_ratio(matrix: SimilarityMatrix, config: CoverageConfig | None = None) -> float:
    """Fraction of expert topics whose best-matching candidate reaches tau."""
    config = config or CoverageConfig()
    if matrix.cols == 0:
        raise NoExpertTopics("no expert topics to cover")
    covered = sum(1 for j in range(matrix.cols) if matrix.column_max(j) >= config.tau)
    return covered / matrix.cols


def alignment_report(
    candidate_review: str,
    expert_review: str,
    gateway: Gateway,
    config: CoverageConfig | None = None,
) -> AlignmentReport:
    """Run both alignment metrics for one (candidate, expert) review pair."""
    config = config or CoverageConfig()
    raw = semantic_similarity(candidate_review, expert_review, gateway)
    topics_candidate = extract_topics(candidate_review, gateway, review_id="candidate")
    topics_expert = extract_topics(expert_review, gateway, review_id="expert")
    matrix = build_similarity_matrix(topics_candidate, topics_expert, gateway)
    covered = tuple(matrix.column_max(j) >= config.tau for j in range(matrix.cols))
    return AlignmentReport(
        s_semantic=clamp_unit(raw),
        s_semantic_raw=raw,
        s_coverage=coverage_ratio(matrix, config),
        topics_candidate=topics_candidate.topics,
        topics_expert=topics_expert.topics,
        matrix=matrix,
        tau=config.tau,
        covered_columns=covered,
    )
