"""Command line interface.

Subcommands: evaluate (score a review), review (generate one), analyze
(cross-run tables), ingest (build a corpus index). A config file of
``key = value`` lines can provide any flag; explicit flags win.

Exit codes: 0 success, 2 input or configuration error, 3 backend error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import analytics
from .agent import GeneratedReview, generate_review
from .corpus import ChunkConfig, ingest, save_index
from .errors import GatewayFailure, ReviewEvalError
from .evaluation import (
    MODE_STANDALONE,
    MODE_WITH_EXPERT,
    RunConfig,
    evaluate_review,
    paper_only_scores,
    report_bytes,
    report_markdown,
)
from .gateway import (
    Gateway,
    LiveBackend,
    LiveConfig,
    ScriptedBackend,
    ScriptTable,
    Transcript,
    replay_backend,
)

logger = logging.getLogger(__name__)

DEFAULTS = {
    "backend": "live",
    "script": None,
    "transcript": None,
    "mode": MODE_WITH_EXPERT,
    "tau": 2,
    "chunk_child": 1000,
    "chunk_parent": 4000,
    "overlap": 0.10,
    "refine_rounds": 1,
    "improve_rounds": 1,
    "out": "out",
    "base_url": "https://api.openai.com/v1",
    "model": "gpt-4o",
    "embed_model": "text-embedding-3-small",
    "depth_panel": 1,
    "retrieval_k": 4,
    "timeout": 60.0,
}

_INT_KEYS = {
    "tau",
    "chunk_child",
    "chunk_parent",
    "refine_rounds",
    "improve_rounds",
    "depth_panel",
    "retrieval_k",
}
_FLOAT_KEYS = {"overlap", "timeout"}


def load_config_file(path: str) -> dict:
    """Parse a ``key = value`` config file; keys mirror the long flags."""
    values: dict[str, object] = {}
    for line_number, raw in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_number}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in DEFAULTS:
            raise ValueError(f"{path}:{line_number}: unknown key {key!r}")
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


def _merge_settings(args: argparse.Namespace) -> dict:
    explicit = {
        key: value
        for key, value in vars(args).items()
        if key in DEFAULTS and value is not None
    }
    settings = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        settings.update(load_config_file(config_path))
    settings.update(explicit)
    return settings


def make_run_config(settings: dict) -> RunConfig:
    return RunConfig(
        backend=settings["backend"],
        script_path=settings["script"],
        transcript_path=settings["transcript"],
        mode=settings["mode"],
        tau=settings["tau"],
        chunk=ChunkConfig(
            child_tokens=settings["chunk_child"],
            parent_tokens=settings["chunk_parent"],
            overlap_fraction=settings["overlap"],
        ),
        retrieval_k=settings["retrieval_k"],
        depth_panel_size=settings["depth_panel"],
        refine_rounds=settings["refine_rounds"],
        improve_rounds=settings["improve_rounds"],
        out_dir=settings["out"],
        base_url=settings["base_url"],
        model=settings["model"],
        embed_model=settings["embed_model"],
        timeout=settings["timeout"],
    )


def make_gateway(config: RunConfig) -> Gateway:
    if config.backend == "scripted":
        if not config.script_path:
            raise ValueError("scripted backend requires --script")
        backend = ScriptedBackend(ScriptTable.from_file(config.script_path))
    elif config.backend == "replay":
        if not config.transcript_path:
            raise ValueError("replay backend requires --transcript")
        backend = replay_backend(Transcript.load(config.transcript_path))
    else:
        backend = LiveBackend(
            LiveConfig(
                base_url=config.base_url,
                model=config.model,
                embed_model=config.embed_model,
                timeout=config.timeout,
            )
        )
    return Gateway(backend)


def _read(path: str) -> str:
    return Path(path).read_text("utf-8")


def _write_report(out_dir: Path, report: dict, gateway: Gateway) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_bytes(report_bytes(report))
    (out_dir / "report.md").write_text(report_markdown(report), "utf-8")
    gateway.transcript.save(out_dir / "transcript.jsonl")
    return report_path


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    config = make_run_config(settings)
    paper_text = _read(args.paper)
    review_text = _read(args.review)
    expert_paths = args.expert or []
    expert_texts = [_read(path) for path in expert_paths]
    guidelines_text = _read(args.guidelines) if args.guidelines else None

    if config.mode == MODE_WITH_EXPERT and not expert_texts:
        raise ValueError("with_expert mode requires at least one --expert review")
    if config.mode == MODE_STANDALONE and expert_texts:
        raise ValueError("standalone mode does not accept --expert reviews")

    gateway = make_gateway(config)
    report = evaluate_review(
        paper_text,
        review_text,
        expert_texts,
        guidelines_text,
        gateway,
        config,
        inputs={
            "paper": Path(args.paper).name,
            "review": Path(args.review).name,
            "experts": [Path(path).name for path in expert_paths],
            "guidelines": Path(args.guidelines).name if args.guidelines else None,
        },
    )
    report_path = _write_report(Path(config.out_dir), report, gateway)
    print(f"wrote {report_path}")
    return 0


def cmd_review(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    config = make_run_config(settings)
    paper_text = _read(args.paper)
    guidelines_source = _read(args.guidelines)

    gateway = make_gateway(config)
    index = ingest(paper_text, gateway, config=config.chunk)
    standalone = dataclasses.replace(config, mode=MODE_STANDALONE)

    def evaluator(review: GeneratedReview) -> dict:
        return paper_only_scores(
            review.formatted_text,
            index,
            guidelines_source,
            gateway,
            standalone,
            strict=True,
        )

    generated, warnings = generate_review(
        paper_text,
        guidelines_source,
        gateway,
        refine_rounds=config.refine_rounds,
        improve_rounds=config.improve_rounds,
        evaluator=evaluator if config.improve_rounds > 0 else None,
    )
    for warning in warnings:
        logger.warning(warning)

    report = evaluate_review(
        paper_text,
        generated.formatted_text,
        [],
        guidelines_source,
        gateway,
        standalone,
        inputs={
            "paper": Path(args.paper).name,
            "guidelines": Path(args.guidelines).name,
        },
        index=index,
    )
    out_dir = Path(config.out_dir)
    report_path = _write_report(out_dir, report, gateway)
    (out_dir / "review.md").write_text(generated.formatted_text, "utf-8")
    (out_dir / "review.json").write_text(
        json.dumps(generated.to_dict(), sort_keys=True, indent=2) + "\n", "utf-8"
    )
    print(f"wrote {out_dir / 'review.md'} and {report_path}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    out_dir = Path(settings["out"])
    rows, skipped = analytics.load_rows(args.rows)
    if not rows:
        raise ValueError(f"no usable rows in {args.rows} ({skipped} skipped)")
    out_dir.mkdir(parents=True, exist_ok=True)

    table = analytics.averaging_table(rows)
    (out_dir / "averaging.csv").write_text(analytics.averaging_csv(table), "utf-8")
    (out_dir / "averaging.md").write_text(analytics.averaging_markdown(table), "utf-8")

    stats: dict[str, object] = {"rows": len(rows), "skipped": skipped}
    if args.group_by == "model":
        sections = []
        for model_id, group in sorted(analytics.group_by_model(rows).items()):
            label = model_id or "(unlabeled)"
            sections.append(
                f"## {label} ({len(group)} rows)\n\n"
                + analytics.averaging_markdown(analytics.averaging_table(group))
            )
        (out_dir / "averaging_by_model.md").write_text("\n".join(sections), "utf-8")

    if len(rows) >= analytics.MIN_CORRELATION_ROWS:
        matrix = analytics.correlation_matrix(rows)
        for field in ("r", "p"):
            (out_dir / f"correlations_{field}.csv").write_text(
                analytics.correlation_csv(matrix, field), "utf-8"
            )
            (out_dir / f"correlations_{field}.md").write_text(
                analytics.correlation_markdown(matrix, field), "utf-8"
            )
        stats["correlations"] = "ok"
    else:
        stats["correlations"] = (
            f"skipped: need {analytics.MIN_CORRELATION_ROWS} rows, got {len(rows)}"
        )
        logger.warning(stats["correlations"])
    (out_dir / "stats.json").write_text(
        json.dumps(stats, sort_keys=True, indent=2) + "\n", "utf-8"
    )
    print(f"wrote tables to {out_dir}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    config = make_run_config(settings)
    paper_text = _read(args.paper)
    gateway = make_gateway(config)
    index = ingest(paper_text, gateway, config=config.chunk)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_index(index, out_dir / "index.json")
    gateway.transcript.save(out_dir / "transcript.jsonl")
    print(f"wrote {out_dir / 'index.json'} ({len(index.children)} chunks)")
    return 0


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value file mirroring the flags")
    parser.add_argument("--backend", choices=["live", "scripted", "replay"])
    parser.add_argument("--script", help="script table JSON for the scripted backend")
    parser.add_argument("--transcript", help="transcript JSONL for the replay backend")
    parser.add_argument("--tau", type=int, choices=[1, 2, 3])
    parser.add_argument("--chunk-child", type=int, dest="chunk_child")
    parser.add_argument("--chunk-parent", type=int, dest="chunk_parent")
    parser.add_argument("--overlap", type=float)
    parser.add_argument("--refine-rounds", type=int, dest="refine_rounds")
    parser.add_argument("--improve-rounds", type=int, dest="improve_rounds")
    parser.add_argument("--depth-panel", type=int, dest="depth_panel")
    parser.add_argument("--retrieval-k", type=int, dest="retrieval_k")
    parser.add_argument("--out")
    parser.add_argument("--base-url", dest="base_url")
    parser.add_argument("--model")
    parser.add_argument("--embed-model", dest="embed_model")
    parser.add_argument("--timeout", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revieweval",
        description="Score, generate, and analyze research-paper peer reviews.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    evaluate = commands.add_parser("evaluate", help="score one review of one paper")
    evaluate.add_argument("paper")
    evaluate.add_argument("review")
    evaluate.add_argument("--expert", action="append", help="expert review, repeatable")
    evaluate.add_argument("--guidelines", help="venue guidelines for adherence")
    evaluate.add_argument("--mode", choices=[MODE_WITH_EXPERT, MODE_STANDALONE])
    _add_common_flags(evaluate)
    evaluate.set_defaults(func=cmd_evaluate)

    review = commands.add_parser("review", help="generate a review for a paper")
    review.add_argument("paper")
    review.add_argument("guidelines")
    review.add_argument("--mode", choices=[MODE_WITH_EXPERT, MODE_STANDALONE])
    _add_common_flags(review)
    review.set_defaults(func=cmd_review)

    analyze = commands.add_parser("analyze", help="aggregate metric vectors")
    analyze.add_argument("rows", help="CSV or JSONL of metric vectors")
    analyze.add_argument("--group-by", choices=["none", "model"], default="model")
    analyze.add_argument("--config")
    analyze.add_argument("--out")
    analyze.set_defaults(func=cmd_analyze)

    ingest_cmd = commands.add_parser("ingest", help="build a corpus index for a paper")
    ingest_cmd.add_argument("paper")
    _add_common_flags(ingest_cmd)
    ingest_cmd.set_defaults(func=cmd_ingest)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GatewayFailure as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except (ReviewEvalError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
