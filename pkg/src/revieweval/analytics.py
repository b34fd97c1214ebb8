"""Cross-run analytics over metric vectors.

A metric vector holds the six scores of one (model, paper) evaluation.
This module computes the unified score, leave-one-out averaging,
contribution percentages, and pairwise Pearson correlations with
two-sided p-values from the Student-t distribution, then renders the
results as CSV and markdown tables.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean
from typing import Sequence

from .errors import IncompleteVector, InsufficientRows, ZeroUnified

METRICS = ("depth", "actionable", "adherence", "coverage", "semantic", "factual")

MIN_CORRELATION_ROWS = 3


@dataclass(frozen=True)
class MetricVector:
    depth: float
    actionable: float
    adherence: float
    coverage: float
    semantic: float
    factual: float
    model_id: str = ""
    paper_id: str = ""

    def __post_init__(self) -> None:
        for name in METRICS:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise IncompleteVector(f"{name} is missing or non-finite")
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in METRICS)


@dataclass(frozen=True)
class LeaveOneOut:
    metric: str
    adjusted: float
    abs_change: float
    rel_change: float | None  # None when the unified score is zero


@dataclass(frozen=True)
class PearsonResult:
    r: float | None
    p: float | None
    n: int
    undefined_reason: str | None = None


@dataclass(frozen=True)
class AveragingRow:
    metric: str
    mean_abs_change: float
    mean_rel_change_pct: float | None
    mean_contribution_pct: float


def unified_score(vector: MetricVector) -> float:
    """Arithmetic mean of the six scores."""
    return fmean(vector.values())


def leave_one_out(vector: MetricVector) -> dict[str, LeaveOneOut]:
    """Per metric: the mean of the other five and its change vs the mean of six.

    The change is positive exactly when the removed metric scored below
    the unified mean. Relative change is undefined at a zero unified
    score and reported as None.
    """
    unified = unified_score(vector)
    results = {}
    for name in METRICS:
        others = [value for metric, value in zip(METRICS, vector.values()) if metric != name]
        adjusted = fmean(others)
        abs_change = adjusted - unified
        rel_change = abs_change / unified if unified != 0.0 else None
        results[name] = LeaveOneOut(
            metric=name, adjusted=adjusted, abs_change=abs_change, rel_change=rel_change
        )
    return results


def contributions(vector: MetricVector) -> dict[str, float]:
    """Percentage share of each metric in the unified score; sums to 100."""
    unified = unified_score(vector)
    if unified == 0.0:
        raise ZeroUnified("contributions undefined at zero unified score")
    return {
        name: (value / len(METRICS)) / unified * 100.0
        for name, value in zip(METRICS, vector.values())
    }


# --- Pearson correlation -----------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iterations = 300
    eps = 3e-16
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iterations + 1):
        m2 = 2 * m
        numerator = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        numerator = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + numerator * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + numerator / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) via the continued fraction, split at the symmetry point."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided tail probability of Student's t with ``dof`` degrees."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))


def pearson(x: Sequence[float], y: Sequence[float]) -> PearsonResult:
    """Pearson r with a two-sided p-value from the t statistic.

    Constant input makes r undefined; the result then carries None for
    both r and p plus a reason, never a silent zero.

    Raises:
        InsufficientRows: fewer than three points.
        ValueError: mismatched lengths.
    """
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < MIN_CORRELATION_ROWS:
        raise InsufficientRows(f"need at least {MIN_CORRELATION_ROWS} points, got {n}")
    mean_x = fmean(x)
    mean_y = fmean(y)
    sxy = sum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    sxx = sum((a - mean_x) ** 2 for a in x)
    syy = sum((b - mean_y) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        return PearsonResult(r=None, p=None, n=n, undefined_reason="constant input")
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    dof = n - 2
    if 1.0 - r * r <= 0.0:
        return PearsonResult(r=r, p=0.0, n=n)
    t = r * math.sqrt(dof / (1.0 - r * r))
    return PearsonResult(r=r, p=student_t_two_sided_p(abs(t), dof), n=n)


# --- row loading ---------------------------------------------------------------


def _row_to_vector(row: dict) -> MetricVector | None:
    values = {}
    for name in METRICS:
        raw = row.get(name)
        if raw is None or raw == "":
            return None
        try:
            value = float(raw)
        except (TypeError, ValueError):
            return None
        if not math.isfinite(value):
            return None
        values[name] = value
    try:
        return MetricVector(
            model_id=str(row.get("model_id", "") or ""),
            paper_id=str(row.get("paper_id", "") or ""),
            **values,
        )
    except (ValueError, IncompleteVector):
        return None


def load_rows(path: str | Path) -> tuple[list[MetricVector], int]:
    """Load metric vectors from a CSV or JSON-lines file.

    Rows with missing or non-numeric scores are dropped (listwise
    deletion); the count of dropped rows is returned alongside.
    """
    path = Path(path)
    raw_rows: list[dict] = []
    text = path.read_text("utf-8")
    if path.suffix.lower() in (".jsonl", ".ndjson") or text.lstrip()[:1] == "{":
        for line in text.splitlines():
            line = line.strip()
            if line:
                raw_rows.append(json.loads(line))
    else:
        raw_rows.extend(csv.DictReader(io.StringIO(text)))
    vectors = []
    skipped = 0
    for row in raw_rows:
        vector = _row_to_vector(row)
        if vector is None:
            skipped += 1
        else:
            vectors.append(vector)
    return vectors, skipped


# --- tables ---------------------------------------------------------------------


def averaging_table(rows: Sequence[MetricVector]) -> list[AveragingRow]:
    """Mean leave-one-out changes and contribution shares across rows."""
    if not rows:
        raise InsufficientRows("no rows to average")
    table = []
    for name in METRICS:
        abs_changes = []
        rel_changes = []
        shares = []
        for vector in rows:
            loo = leave_one_out(vector)[name]
            abs_changes.append(loo.abs_change)
            if loo.rel_change is not None:
                rel_changes.append(loo.rel_change * 100.0)
            shares.append(contributions(vector)[name])
        table.append(
            AveragingRow(
                metric=name,
                mean_abs_change=fmean(abs_changes),
                mean_rel_change_pct=fmean(rel_changes) if rel_changes else None,
                mean_contribution_pct=fmean(shares),
            )
        )
    return table


def correlation_matrix(rows: Sequence[MetricVector]) -> dict[str, dict[str, PearsonResult]]:
    """Pairwise Pearson results for all six metrics.

    Raises:
        InsufficientRows: fewer than three rows.
    """
    if len(rows) < MIN_CORRELATION_ROWS:
        raise InsufficientRows(
            f"correlations need at least {MIN_CORRELATION_ROWS} rows, got {len(rows)}"
        )
    columns = {name: [getattr(vector, name) for vector in rows] for name in METRICS}
    return {
        a: {b: pearson(columns[a], columns[b]) for b in METRICS} for a in METRICS
    }


def group_by_model(rows: Sequence[MetricVector]) -> dict[str, list[MetricVector]]:
    groups: dict[str, list[MetricVector]] = {}
    for vector in rows:
        groups.setdefault(vector.model_id, []).append(vector)
    return groups


# --- rendering ------------------------------------------------------------------


def _format_cell(value: float | None, digits: int = 6) -> str:
    if value is None:
        return ""
    return f"{value:.{digits}f}"


def averaging_csv(table: Sequence[AveragingRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["metric", "mean_abs_change", "mean_rel_change_pct", "mean_contribution_pct"]
    )
    for row in table:
        writer.writerow(
            [
                row.metric,
                _format_cell(row.mean_abs_change),
                _format_cell(row.mean_rel_change_pct),
                _format_cell(row.mean_contribution_pct),
            ]
        )
    return buffer.getvalue()


def averaging_markdown(table: Sequence[AveragingRow]) -> str:
    lines = [
        "| Metric | Mean abs change | Mean rel change (%) | Contribution (%) |",
        "| --- | --- | --- | --- |",
    ]
    for row in table:
        rel = _format_cell(row.mean_rel_change_pct, 4) or "n/a"
        lines.append(
            f"| {row.metric} | {row.mean_abs_change:+.4f} | {rel} "
            f"| {row.mean_contribution_pct:.4f} |"
        )
    return "\n".join(lines) + "\n"


def correlation_csv(
    matrix: dict[str, dict[str, PearsonResult]], field: str
) -> str:
    """Render the r or p values of a correlation matrix as CSV."""
    if field not in ("r", "p"):
        raise ValueError("field must be 'r' or 'p'")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["metric", *METRICS])
    for a in METRICS:
        row = [a]
        for b in METRICS:
            cell = getattr(matrix[a][b], field)
            row.append("" if cell is None else f"{cell:.9g}")
        writer.writerow(row)
    return buffer.getvalue()


def correlation_markdown(matrix: dict[str, dict[str, PearsonResult]], field: str) -> str:
    header = "| |" + "|".join(f" {name} " for name in METRICS) + "|"
    rule = "| --- |" + "|".join(" --- " for _ in METRICS) + "|"
    lines = [header, rule]
    for a in METRICS:
        cells = []
        for b in METRICS:
            value = getattr(matrix[a][b], field)
            cells.append("n/a" if value is None else f"{value:.4g}")
        lines.append(f"| {a} |" + "|".join(f" {c} " for c in cells) + "|")
    return "\n".join(lines) + "\n"
