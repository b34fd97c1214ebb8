"""Exception hierarchy shared across the package.

Errors fall into three broad families:

* gateway failures (backend unreachable, script or transcript problems),
* input and parsing failures (malformed model output, empty documents),
* metric-undefined conditions, which callers are expected to catch and
  record as omitted metrics rather than treat as crashes.
"""

from __future__ import annotations


class ReviewEvalError(Exception):
    """Base class for every error raised by this package."""


# --- gateway ---------------------------------------------------------------


class GatewayFailure(ReviewEvalError):
    """A gateway call could not produce a usable response."""


class BackendUnavailable(GatewayFailure):
    """The backing service could not be reached or returned garbage."""


class RateLimited(GatewayFailure):
    """The backing service kept refusing with rate-limit responses."""


class ScriptMiss(GatewayFailure):
    """A scripted backend has no canned response for the request.

    This signals a fixture gap: the test script must be extended to
    cover the request, never silently defaulted.
    """


class TranscriptExhausted(GatewayFailure):
    """Replay was asked for more calls than the transcript recorded."""


class FingerprintMismatch(GatewayFailure):
    """Replayed call order diverged from the recorded transcript."""


class UnknownTemplate(ReviewEvalError):
    """No bundled prompt template carries the requested id."""


class TemplateError(ReviewEvalError):
    """A template placeholder was left unbound by the request variables."""


class EmptyText(ReviewEvalError):
    """An embedding was requested for empty or whitespace-only text."""


class DimensionMismatch(ReviewEvalError):
    """Embedding vectors in one run disagree on dimensionality."""


# --- corpus ----------------------------------------------------------------


class EmptyDocument(ReviewEvalError):
    """The document normalizes to zero tokens."""


class EmbeddingFailure(ReviewEvalError):
    """Chunk embedding failed while building a corpus index."""


class EmptyIndex(ReviewEvalError):
    """Search was issued against an index with no chunks."""


class OrphanChunk(ReviewEvalError):
    """A chunk does not belong to the index it was resolved against."""


# --- model-output parsing ---------------------------------------------------


class UnparseableResponse(ReviewEvalError):
    """Model output did not match the response contract of the prompt."""


class ScoreOutOfRange(ReviewEvalError):
    """A judge returned a score outside its permitted lattice."""


# --- metric-undefined conditions --------------------------------------------


class MetricUndefined(ReviewEvalError):
    """The metric has no defined value for this input.

    Callers omit the metric and record the reason instead of failing
    the whole evaluation.
    """


class NoExpertTopics(MetricUndefined):
    """Topic coverage is undefined without expert topics."""


class NoClaims(MetricUndefined):
    """Factual correctness is undefined for a review with no checkable claims."""


class NoInsights(MetricUndefined):
    """Constructiveness is undefined for a review with no extracted insights."""


class NoCriteria(MetricUndefined):
    """Adherence is undefined when the guidelines yield no criteria."""


class NoItems(ReviewEvalError):
    """An aggregate was requested over an empty item list."""


# --- agent -------------------------------------------------------------------


class NoGuidelinesFound(ReviewEvalError):
    """Guideline parsing produced no usable guideline text."""


# --- analytics ----------------------------------------------------------------


class IncompleteVector(ReviewEvalError):
    """A metric vector is missing one of its six scores."""


class ZeroUnified(ReviewEvalError):
    """Contribution percentages are undefined at a zero unified score."""


class InsufficientRows(ReviewEvalError):
    """Too few rows for the requested statistic."""
