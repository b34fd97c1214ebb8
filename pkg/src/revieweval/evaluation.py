"""Run configuration and full-report assembly.

Puts the individual metric modules together into one report for a
(paper, review) pair: the paper-only metrics always run; the
expert-relative pair runs only against provided expert reviews. Metric
undefined conditions become null scores with a recorded reason rather
than failures.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from statistics import fmean

from . import rubric
from .alignment import CoverageConfig, alignment_report
from .corpus import ChunkConfig, CorpusIndex, ingest
from .errors import MetricUndefined
from .factual import factual_report
from .gateway import Gateway

SCHEMA_VERSION = 1

MODE_WITH_EXPERT = "with_expert"
MODE_STANDALONE = "standalone"

# Timestamp written into reports for deterministic backends, so that a
# scripted run and its replay produce identical bytes.
FIXED_TIMESTAMP = "1970-01-01T00:00:00Z"


@dataclass
class RunConfig:
    backend: str = "live"  # live | scripted | replay
    script_path: str | None = None
    transcript_path: str | None = None
    mode: str = MODE_WITH_EXPERT
    tau: int = 2
    chunk: ChunkConfig = field(default_factory=ChunkConfig)
    retrieval_k: int = 4
    depth_panel_size: int = 1
    refine_rounds: int = 1
    improve_rounds: int = 1
    out_dir: str = "out"
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    embed_model: str = "text-embedding-3-small"
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.backend not in ("live", "scripted", "replay"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.mode not in (MODE_WITH_EXPERT, MODE_STANDALONE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.tau not in (1, 2, 3):
            raise ValueError("tau must be 1, 2, or 3")
        for name in ("retrieval_k", "depth_panel_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("refine_rounds", "improve_rounds"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def semantic_fields(self) -> dict:
        """The fields that define what was computed, not where or how it ran.

        Backend kind and file paths are excluded so a replayed run
        hashes identically to the run that recorded it.
        """
        return {
            "mode": self.mode,
            "tau": self.tau,
            "chunk": self.chunk.to_dict(),
            "retrieval_k": self.retrieval_k,
            "depth_panel_size": self.depth_panel_size,
            "refine_rounds": self.refine_rounds,
            "improve_rounds": self.improve_rounds,
        }


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.semantic_fields(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _timestamp(config: RunConfig) -> str:
    if config.backend in ("scripted", "replay"):
        return FIXED_TIMESTAMP
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def paper_only_scores(
    review_text: str,
    index: CorpusIndex,
    guidelines_text: str | None,
    gateway: Gateway,
    config: RunConfig,
    strict: bool = False,
) -> dict:
    """The four metrics computable without an expert review.

    With ``strict`` set, metric-undefined conditions raise instead of
    being recorded as nulls; the improvement loop needs the hard error.
    """
    scores: dict[str, float | None] = {}
    details: dict[str, dict] = {}
    omitted: dict[str, str] = {}

    # factual
    try:
        f_report = factual_report(review_text, index, gateway, k=config.retrieval_k)
        scores["factual"] = f_report.s_factual
        details["factual"] = f_report.to_dict()
    except MetricUndefined as exc:
        if strict:
            raise
        scores["factual"] = None
        omitted["factual"] = str(exc)

    # constructiveness
    try:
        c_report = rubric.constructiveness_report(review_text, gateway)
        scores["actionable"] = c_report.s_actionable
        details["actionable"] = c_report.to_dict()
    except MetricUndefined as exc:
        if strict:
            raise
        scores["actionable"] = None
        omitted["actionable"] = str(exc)

    # depth
    panel = [gateway] * config.depth_panel_size
    d_report = rubric.depth_scores(review_text, panel)
    scores["depth"] = d_report.s_depth
    details["depth"] = d_report.to_dict()

    # adherence
    if guidelines_text is None:
        scores["adherence"] = None
        omitted["adherence"] = "no guidelines provided"
    else:
        try:
            a_report = rubric.adherence_report(review_text, guidelines_text, gateway)
            scores["adherence"] = a_report.s_adherence
            details["adherence"] = a_report.to_dict()
        except MetricUndefined as exc:
            if strict:
                raise
            scores["adherence"] = None
            omitted["adherence"] = str(exc)

    return {"scores": scores, "details": details, "omitted": omitted}


def evaluate_review(
    paper_text: str,
    review_text: str,
    expert_texts: list[str],
    guidelines_text: str | None,
    gateway: Gateway,
    config: RunConfig,
    inputs: dict[str, str] | None = None,
    index: CorpusIndex | None = None,
) -> dict:
    """Full metric report for one review of one paper.

    In standalone mode the expert-relative keys are absent entirely. In
    with-expert mode alignment runs once per expert review; the
    top-level scores are the means over experts and the per-expert
    reports are retained.
    """
    if index is None:
        index = ingest(paper_text, gateway, config=config.chunk)
    base = paper_only_scores(review_text, index, guidelines_text, gateway, config)
    scores = base["scores"]
    details = base["details"]
    omitted = base["omitted"]

    if config.mode == MODE_WITH_EXPERT:
        per_expert = []
        try:
            for expert_text in expert_texts:
                per_expert.append(
                    alignment_report(
                        review_text,
                        expert_text,
                        gateway,
                        CoverageConfig(tau=config.tau),
                    )
                )
            scores["semantic"] = fmean(r.s_semantic for r in per_expert)
            scores["coverage"] = fmean(r.s_coverage for r in per_expert)
            details["alignment"] = {
                "semantic": scores["semantic"],
                "coverage": scores["coverage"],
                "per_expert": [r.to_dict() for r in per_expert],
            }
        except MetricUndefined as exc:
            scores["semantic"] = None
            scores["coverage"] = None
            omitted["semantic"] = str(exc)
            omitted["coverage"] = str(exc)

    present = [scores.get(name) for name in ("depth", "actionable", "adherence",
                                             "coverage", "semantic", "factual")]
    if config.mode == MODE_WITH_EXPERT and all(v is not None for v in present):
        unified = fmean(present)
    else:
        unified = None
        omitted["unified"] = (
            "requires all six metrics"
            if config.mode == MODE_WITH_EXPERT
            else "standalone mode computes no expert-relative metrics"
        )

    return {
        "schema_version": SCHEMA_VERSION,
        "scores": scores,
        "unified": unified,
        "details": details,
        "omitted": omitted,
        "run": {
            "config": config.semantic_fields(),
            "config_hash": config_hash(config),
            "created_at": _timestamp(config),
            "transcript": "transcript.jsonl",
            "inputs": inputs or {},
        },
    }


def report_bytes(report: dict) -> bytes:
    """Canonical serialization of a report; hashed by the golden tests."""
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode("utf-8")


def report_markdown(report: dict) -> str:
    lines = ["# Review evaluation", "", "| Metric | Score |", "| --- | --- |"]
    for name in ("depth", "actionable", "adherence", "coverage", "semantic", "factual"):
        if name not in report["scores"]:
            continue
        value = report["scores"][name]
        rendered = "n/a" if value is None else f"{value:.4f}"
        lines.append(f"| {name} | {rendered} |")
    unified = report.get("unified")
    lines.append(f"| unified | {'n/a' if unified is None else f'{unified:.4f}'} |")
    omitted = report.get("omitted", {})
    if omitted:
        lines.append("")
        lines.append("Omitted metrics:")
        for name in sorted(omitted):
            lines.append(f"- {name}: {omitted[name]}")
    return "\n".join(lines) + "\n"
