"""Registry of bundled prompt templates.

Every chat request names a template by id; the template text lives in a
data file under ``prompts/``. Placeholders use ``str.format`` field
syntax and must all be bound by the request variables. Extra variables
are allowed: they still enter the request fingerprint, which lets
scripted backends distinguish calls that render to the same text.
"""

from __future__ import annotations

import string
from functools import lru_cache
from importlib import resources

from .errors import TemplateError, UnknownTemplate

_TEMPLATE_FILES = {
    "answer_aggregate": "answer_aggregate.txt",
    "claim_segment": "claim_segment.txt",
    "criteria_extract": "criteria_extract.txt",
    "criterion_judge": "criterion_judge.txt",
    "depth_judge": "depth_judge.txt",
    "guidelines_parse": "guidelines_parse.txt",
    "insight_extract": "insight_extract.txt",
    "insight_score": "insight_score.txt",
    "question_decompose": "question_decompose.txt",
    "rebuttal": "rebuttal.txt",
    "refine_feedback": "refine_feedback.txt",
    "refine_revise": "refine_revise.txt",
    "review_format": "review_format.txt",
    "review_improve": "review_improve.txt",
    "section_instructions": "section_instructions.txt",
    "section_map": "section_map.txt",
    "section_review": "section_review.txt",
    "subquestion_answer": "subquestion_answer.txt",
    "topic_extract": "topic_extract.txt",
    "topic_judge": "topic_judge.txt",
    "verification_question": "verification_question.txt",
}


def template_ids() -> tuple[str, ...]:
    return tuple(sorted(_TEMPLATE_FILES))


@lru_cache(maxsize=None)
def load(template_id: str) -> str:
    """Return the raw template text for ``template_id``."""
    try:
        filename = _TEMPLATE_FILES[template_id]
    except KeyError:
        raise UnknownTemplate(template_id) from None
    return (
        resources.files(__package__).joinpath("prompts", filename).read_text("utf-8")
    )


@lru_cache(maxsize=None)
def placeholders(template_id: str) -> frozenset[str]:
    """Return the set of placeholder names a template requires."""
    fields = set()
    for _, field_name, _, _ in string.Formatter().parse(load(template_id)):
        if field_name:
            fields.add(field_name)
    return frozenset(fields)


def validate_variables(template_id: str, variables: dict[str, str]) -> None:
    """Raise unless every placeholder of the template is bound."""
    missing = placeholders(template_id) - set(variables)
    if missing:
        raise TemplateError(
            f"template {template_id!r} is missing variables: {sorted(missing)}"
        )


def render(template_id: str, variables: dict[str, str]) -> str:
    """Render the template with ``variables`` bound.

    Args:
        template_id: id of a bundled template.
        variables: placeholder bindings; unused extras are ignored.

    Returns:
        The prompt text sent to a live backend.
    """
    validate_variables(template_id, variables)
    text = load(template_id)
    needed = placeholders(template_id)
    return text.format(**{k: v for k, v in variables.items() if k in needed})
