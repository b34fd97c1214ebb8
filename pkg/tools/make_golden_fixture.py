"""Regenerate the golden CLI fixture.

Drives the evaluate and review pipelines with a deterministic rule
backend, converts the recorded transcripts into one script table, then
runs the real CLI against that script and freezes the output hashes.

Run from the repository root:

    python3 tools/make_golden_fixture.py
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from revieweval.agent import generate_review, split_enumeration
from revieweval.cli import main
from revieweval.corpus import ChunkConfig, ingest
from revieweval.evaluation import (
    MODE_STANDALONE,
    RunConfig,
    evaluate_review,
    paper_only_scores,
)
from revieweval.gateway import CallableBackend, ChatRequest, Gateway

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "golden"

CHUNK = ChunkConfig(child_tokens=64, parent_tokens=256, overlap_fraction=0.1)
RETRIEVAL_K = 2
DEPTH_PANEL = 2

DEPTH_DIMENSIONS = (
    "literature_comparison",
    "logical_gaps",
    "methodological_scrutiny",
    "results_interpretation",
    "theoretical_contribution",
)

GRADES = ("none", "weak", "moderate", "strong")

OBJECTIVE_HINTS = ("scale", "structure", "section", "rate")


def digest(*parts: str) -> bytes:
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()


def sentences(text: str, minimum_words: int = 8) -> list[str]:
    pieces = [piece.strip() for piece in re.split(r"(?<=\.)\s+", text)]
    return [
        piece
        for piece in pieces
        if piece.endswith(".") and "\n" not in piece and len(piece.split()) >= minimum_words
    ]


def long_words(text: str, count: int) -> list[str]:
    seen: list[str] = []
    for word in re.findall(r"[a-z]{8,}", text.lower()):
        if word not in seen:
            seen.append(word)
        if len(seen) == count:
            break
    return seen or ["methodology"]


def rule(request: ChatRequest) -> str:
    v = request.variables
    t = request.template_id

    if t == "claim_segment":
        found = sentences(v["review"])[:3]
        return "\n".join(found) if found else "NONE"
    if t == "verification_question":
        return f"Does the paper substantiate the reviewer statement that {v['claim'].rstrip('.')}?"
    if t == "question_decompose":
        stem = " ".join(v["question"].rstrip("?").split()[-8:])
        return (
            f"What evidence does the paper give about {stem}?\n"
            f"Where does the paper discuss {stem}?"
        )
    if t == "subquestion_answer":
        match = re.search(r"\[([^\]]+)\]", v["context"])
        source = match.group(1) if match else "the retrieved context"
        lead = " ".join(v["question"].split()[:6]).rstrip("?")
        return f"Drawing on {source}, the paper speaks to {lead.lower()} directly."
    if t == "answer_aggregate":
        return f"Combined answer: {v['answers'].splitlines()[0]}"
    if t == "rebuttal":
        ids = re.findall(r"\[(claim-\d+)\] Q:", v["evidence"])
        rows = "\n".join(
            f"{cid}: {('supports', 'counters', 'insufficient')[digest(cid, v['review'])[0] % 3]}"
            for cid in ids
        )
        return f"We thank the reviewer for the careful reading.\n\nSTANCES:\n{rows}"
    if t == "topic_extract":
        return "\n".join(long_words(v["review"], 4))
    if t == "topic_judge":
        return GRADES[digest(v["topic_a"], v["topic_b"])[0] % 4]
    if t == "insight_extract":
        found = sentences(v["review"])[1:4]
        if not found:
            return "NONE"
        labels = ("cp", "mf", "si")
        return "\n".join(f"{labels[i % 3]}: {s}" for i, s in enumerate(found))
    if t == "insight_score":
        d = digest(v["category"], v["insight"])
        return (
            f"specificity: {d[0] % 2}\n"
            f"feasibility: {d[1] % 2}\n"
            f"implementation_details: {d[2] % 2}"
        )
    if t == "depth_judge":
        d = digest(v["judge_id"], v["review"])
        return "\n".join(
            f"{dim}: {d[i] % 4}" for i, dim in enumerate(DEPTH_DIMENSIONS)
        )
    if t == "criteria_extract":
        items = split_enumeration(v["guidelines"])[:4]
        if not items:
            return "NONE"
        lines = []
        for item in items:
            kind = (
                "objective"
                if any(hint in item.lower() for hint in OBJECTIVE_HINTS)
                else "subjective"
            )
            lines.append(f"{kind}: {item}")
        return "\n".join(lines)
    if t == "criterion_judge":
        d = digest(v["kind"], v["criterion"], v["review"])[0]
        return str((0, 3)[d % 2] if v["kind"] == "objective" else d % 4)
    if t == "guidelines_parse":
        return re.sub(r"<[^>]+>", " ", v["html"]).strip()
    if t == "section_map":
        names = [n for n in v["sections"].splitlines() if n]
        d = digest(v["guideline"])[0]
        picked = [names[d % len(names)]]
        if d % 2 == 0:
            second = names[(d + 1) % len(names)]
            if second not in picked:
                picked.append(second)
        return "\n".join(picked)
    if t == "section_instructions":
        return (
            f"When reviewing {v['section']}, check whether the paper satisfies this"
            f" guideline: {v['guideline']} Point at concrete passages as evidence."
        )
    if t == "refine_feedback":
        lead = " ".join(v["problem"].split()[:10])
        return f"Sharpen the draft so it squarely addresses: {lead}"
    if t == "refine_revise":
        word = ("numerical", "methodological", "theoretical", "empirical")[
            digest(v["feedback"])[0] % 4
        ]
        return (
            v["artifact"]
            + f"\nThe revision additionally checks {word} claims against the cited evidence."
        )
    if t == "section_review":
        lead = " ".join(v["section_text"].split()[:5])
        word = ("scaling", "baseline", "variance", "ablation")[
            digest(v["section_name"], v["instructions"])[0] % 4
        ]
        return (
            f"The {v['section_name']} part beginning with {lead} holds up under the"
            f" given instructions.\n"
            f"A remaining concern is that the {word} treatment in"
            f" {v['section_name']} leaves key assumptions implicit."
        )
    if t == "review_format":
        bodies = [
            line
            for line in v["reviews"].splitlines()
            if line.strip() and not re.match(r"^\[.*\] \(prompt-.*\)$", line)
        ]
        return (
            "Formatted venue review.\n\n"
            + " ".join(bodies)
            + "\n\nOverall the submission is promising but the revisions noted"
            " above are needed before acceptance."
        )
    if t == "review_improve":
        return (
            v["review"]
            + "\n\nAdded after metric feedback: the review now cites the exact"
            " tables supporting each criticism."
        )
    raise ValueError(f"no rule for template {t!r}")


def run_mirrors(paper: str, review: str, expert: str, guidelines: str) -> list:
    """Replay the CLI flows against the rule backend, collecting transcripts."""
    eval_gateway = Gateway(CallableBackend(rule, embed_dim=16))
    eval_config = RunConfig(
        backend="scripted",
        script_path="script.json",
        chunk=CHUNK,
        retrieval_k=RETRIEVAL_K,
        depth_panel_size=DEPTH_PANEL,
    )
    evaluate_review(
        paper,
        review,
        [expert],
        guidelines,
        eval_gateway,
        eval_config,
        inputs={
            "paper": "paper.md",
            "review": "review.md",
            "experts": ["expert.md"],
            "guidelines": "guidelines.txt",
        },
    )

    review_gateway = Gateway(CallableBackend(rule, embed_dim=16))
    review_config = dataclasses.replace(eval_config)
    index = ingest(paper, review_gateway, config=CHUNK)
    standalone = dataclasses.replace(review_config, mode=MODE_STANDALONE)

    def evaluator(generated) -> dict:
        return paper_only_scores(
            generated.formatted_text,
            index,
            guidelines,
            review_gateway,
            standalone,
            strict=True,
        )

    generated, _ = generate_review(
        paper,
        guidelines,
        review_gateway,
        refine_rounds=1,
        improve_rounds=1,
        evaluator=evaluator,
    )
    evaluate_review(
        paper,
        generated.formatted_text,
        [],
        guidelines,
        review_gateway,
        standalone,
        inputs={"paper": "paper.md", "guidelines": "guidelines.txt"},
        index=index,
    )
    return list(eval_gateway.transcript.records) + list(review_gateway.transcript.records)


def records_to_script(records) -> dict:
    chat_by_fingerprint: dict[str, dict] = {}
    entries = []
    for record in records:
        if record.kind != "chat":
            continue
        entry = {
            "template_id": record.request["template_id"],
            "variables": record.request["variables"],
            "response": record.response["text"],
        }
        previous = chat_by_fingerprint.get(record.fingerprint)
        if previous is None:
            chat_by_fingerprint[record.fingerprint] = entry
            entries.append(entry)
        elif previous["response"] != entry["response"]:
            raise RuntimeError(
                f"non-deterministic rule for {entry['template_id']}"
            )
    return {"chat": entries, "hashed_embeddings": {"dim": 16}}


def common_flags(script_path: Path) -> list[str]:
    return [
        "--backend",
        "scripted",
        "--script",
        str(script_path),
        "--chunk-child",
        str(CHUNK.child_tokens),
        "--chunk-parent",
        str(CHUNK.parent_tokens),
        "--overlap",
        str(CHUNK.overlap_fraction),
        "--retrieval-k",
        str(RETRIEVAL_K),
        "--depth-panel",
        str(DEPTH_PANEL),
    ]


def sha256_of(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def tokenize_args(args: list[str]) -> list[str]:
    tokens = []
    for arg in args:
        arg = arg.replace(str(FIXTURE_DIR), "{FIX}")
        tokens.append(arg)
    return tokens


def main_tool() -> int:
    paper = (FIXTURE_DIR / "paper.md").read_text("utf-8")
    review = (FIXTURE_DIR / "review.md").read_text("utf-8")
    expert = (FIXTURE_DIR / "expert.md").read_text("utf-8")
    guidelines = (FIXTURE_DIR / "guidelines.txt").read_text("utf-8")

    records = run_mirrors(paper, review, expert, guidelines)
    script_payload = records_to_script(records)
    script_path = FIXTURE_DIR / "script.json"
    script_path.write_text(
        json.dumps(script_payload, sort_keys=True, indent=2) + "\n", "utf-8"
    )
    print(f"wrote {script_path} ({len(script_payload['chat'])} chat entries)")

    with tempfile.TemporaryDirectory() as tmp:
        eval_out = Path(tmp) / "eval"
        eval_args = [
            "evaluate",
            str(FIXTURE_DIR / "paper.md"),
            str(FIXTURE_DIR / "review.md"),
            "--expert",
            str(FIXTURE_DIR / "expert.md"),
            "--guidelines",
            str(FIXTURE_DIR / "guidelines.txt"),
            *common_flags(script_path),
            "--out",
            str(eval_out),
        ]
        if main(eval_args) != 0:
            raise RuntimeError("scripted evaluate run failed")

        review_out = Path(tmp) / "review"
        review_args = [
            "review",
            str(FIXTURE_DIR / "paper.md"),
            str(FIXTURE_DIR / "guidelines.txt"),
            *common_flags(script_path),
            "--refine-rounds",
            "1",
            "--improve-rounds",
            "1",
            "--out",
            str(review_out),
        ]
        if main(review_args) != 0:
            raise RuntimeError("scripted review run failed")

        expected = {
            "evaluate": {
                "args": tokenize_args(eval_args[:-1]) + ["{OUT}"],
                "report_sha256": sha256_of(eval_out / "report.json"),
            },
            "review": {
                "args": tokenize_args(review_args[:-1]) + ["{OUT}"],
                "report_sha256": sha256_of(review_out / "report.json"),
                "review_md_sha256": sha256_of(review_out / "review.md"),
                "review_json_sha256": sha256_of(review_out / "review.json"),
            },
        }
        report = json.loads((eval_out / "report.json").read_text("utf-8"))
        expected["evaluate"]["unified"] = report["unified"]
        expected["evaluate"]["scores"] = report["scores"]

    expected_path = FIXTURE_DIR / "expected.json"
    expected_path.write_text(
        json.dumps(expected, sort_keys=True, indent=2) + "\n", "utf-8"
    )
    print(f"wrote {expected_path}")
    print(json.dumps(expected["evaluate"]["scores"], indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main_tool())
