"""Benchmark reports over recorded turns and annotations.

A report aggregates one configuration's completed turns: per-stage
worker-reported latency and hub overhead, end-to-end latency, and an
accuracy block (annotation scores, WER/CER against reference
transcripts). Reports are pure functions of a records snapshot with
fixed field order and half-even 3-decimal rounding, so identical
snapshots export byte-identically.

Word and character error rates are reported in both conventions, and
labeled: pooled (total edits over total reference length) and macro
(mean of per-turn rates). They differ in general; neither is "the" WER.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Any

from .domain import (
    PipelineConfig,
    StageKind,
    TaskState,
    TurnTask,
    validate_pipeline,
)
from .metrics import (
    LatencyStats,
    corpus_error_rates,
    end_to_end_latency,
    latency_stats,
    mean_score,
    normalize_text,
    tokenize_chars,
    tokenize_words,
)

CSV_COLUMNS = (
    "config",
    "stage",
    "count",
    "mean_ms",
    "stddev_ms",
    "min_ms",
    "max_ms",
    "p50_ms",
    "p95_ms",
    "overhead_mean_ms",
)

COMPARISON_CSV_COLUMNS = (
    "config",
    "e2e_mean_ms",
    "e2e_p95_ms",
    "dominant_stage",
    "mean_overall_score",
)

#: Fixed context every report carries about how its numbers were made.
REPORT_NOTES = (
    "durations are worker-reported milliseconds; hub stage span minus the "
    "worker's measure is reported separately as overhead",
    "profiles run at desk scale: one millisecond stands in for one second "
    "of full-scale model time (scale factor 1/1000)",
    "WER/CER appear in both conventions: pooled = total edits / total "
    "reference length, macro = mean of per-turn rates",
    "end_to_end is hub receipt to terminal completion; client round trips "
    "measured by a replayer additionally include upload and polling",
)


class ReportError(Exception):
    pass


class NoMatchingTurns(ReportError):
    """No completed turn matches the report filters."""


class InsufficientReports(ReportError):
    """Comparison needs at least two reports."""


def round3(value: float) -> float:
    """Half-even rounding to 3 decimals, for byte-stable exports."""
    return float(Decimal(repr(float(value))).quantize(Decimal("0.001"), ROUND_HALF_EVEN))


def _rounded_stats(samples: list[int]) -> LatencyStats:
    s = latency_stats(samples)
    return LatencyStats(
        count=s.count,
        mean=round3(s.mean),
        stddev=round3(s.stddev),
        min=s.min,
        max=s.max,
        p50=s.p50,
        p95=s.p95,
    )


def critical_path(config: PipelineConfig, weights: dict[str, float]) -> tuple[str, ...]:
    """Heaviest source-to-terminal stage path; ties break lexicographically."""
    order = validate_pipeline(config).order
    best: dict[str, float] = {}
    parent: dict[str, str | None] = {}
    for stage_id in order:
        ups = sorted(u for u in config.stage(stage_id).upstream_ids() if u in best)
        if ups:
            chosen = max(ups, key=lambda u: best[u])
            base, parent[stage_id] = best[chosen], chosen
        else:
            base, parent[stage_id] = 0.0, None
        best[stage_id] = base + float(weights.get(stage_id, 0.0))
    path: list[str] = []
    cursor: str | None = config.terminal_stage
    while cursor is not None:
        path.append(cursor)
        cursor = parent[cursor]
    return tuple(reversed(path))


@dataclass(frozen=True)
class StageLatency:
    stage_id: str
    kind: str
    worker: LatencyStats
    overhead: LatencyStats


@dataclass(frozen=True)
class AnnotatorStats:
    annotator_id: str
    annotation_count: int
    mean_overall_score: float


@dataclass(frozen=True)
class TurnComment:
    task_id: str
    annotator_id: str
    comment: str


@dataclass(frozen=True)
class AccuracyBlock:
    annotation_count: int
    mean_overall_score: float | None
    per_stage_mean_scores: dict[str, float]
    transcript_turn_count: int
    wer_pooled: float | None
    wer_macro: float | None
    cer_pooled: float | None
    cer_macro: float | None
    comments: tuple[TurnComment, ...]
    per_annotator: tuple[AnnotatorStats, ...]


@dataclass(frozen=True)
class BenchmarkReport:
    config_name: str
    generated_ts: int
    turn_count: int
    stages: tuple[StageLatency, ...]
    end_to_end: LatencyStats
    critical_path: tuple[str, ...]
    critical_path_mean_ms: float
    overhead_mean_ms: float
    accuracy: AccuracyBlock
    notes: tuple[str, ...]

    def stage(self, stage_id: str) -> StageLatency:
        for s in self.stages:
            if s.stage_id == stage_id:
                return s
        raise KeyError(stage_id)


def hub_snapshot(hub, config_name: str | None = None, **filters) -> dict[str, Any]:
    """Records snapshot plus the configurations needed to interpret it."""
    snapshot = hub.query_records(config_name=config_name, **filters)
    snapshot["configs"] = hub.list_configs()
    return snapshot


def _config_from_snapshot(snapshot: dict[str, Any], config_name: str) -> PipelineConfig:
    configs = snapshot.get("configs") or []
    if isinstance(configs, dict):
        configs = list(configs.values())
    for config in configs:
        if config.config_name == config_name:
            return config
    raise ReportError(f"snapshot carries no configuration named {config_name!r}")


def _matching_tasks(
    snapshot: dict[str, Any],
    config_name: str,
    track_id: str | None,
    since_ts: int | None,
    until_ts: int | None,
) -> list[TurnTask]:
    out = []
    for task in snapshot.get("tasks", []):
        if task.config_name != config_name or task.state is not TaskState.COMPLETED:
            continue
        if track_id is not None and task.track_id != track_id:
            continue
        if since_ts is not None and task.client_capture_ts < since_ts:
            continue
        if until_ts is not None and task.client_capture_ts >= until_ts:
            continue
        out.append(task)
    return out


def _reference_transcript(task: TurnTask, annotations: list) -> str | None:
    """Annotator-supplied transcript wins; submission metadata is the fallback."""
    for a in sorted(annotations, key=lambda a: a.annotation_id, reverse=True):
        if a.task_id == task.task_id and a.reference_transcript:
            return a.reference_transcript
    return task.metadata.get("reference_transcript") or None


def _transcript_pairs(
    tasks: list[TurnTask],
    annotations: list,
    config: PipelineConfig,
) -> list[tuple[str, str]]:
    s2t_stages = [
        s.stage_id
        for s in config.stages
        if s.enabled and s.kind is StageKind.SPEECH2TEXT
    ]
    pairs = []
    for task in tasks:
        reference = _reference_transcript(task, annotations)
        if reference is None or not normalize_text(reference):
            continue
        hypothesis = " ".join(
            task.record(sid).output_text or "" for sid in s2t_stages
        ).strip()
        if s2t_stages:
            pairs.append((reference, hypothesis))
    return pairs


def _accuracy_block(
    tasks: list[TurnTask], annotations: list, config: PipelineConfig
) -> AccuracyBlock:
    task_ids = {t.task_id for t in tasks}
    matched = sorted(
        (a for a in annotations if a.task_id in task_ids),
        key=lambda a: a.annotation_id,
    )
    overall = [a.overall_score for a in matched]
    stage_scores: dict[str, list[int]] = {}
    for a in matched:
        for stage_id, score in a.stage_scores.items():
            stage_scores.setdefault(stage_id, []).append(score)
    stage_order = validate_pipeline(config).order
    per_stage = {
        sid: round3(mean_score(stage_scores[sid]))
        for sid in stage_order
        if sid in stage_scores
    }

    by_annotator: dict[str, list[int]] = {}
    for a in matched:
        by_annotator.setdefault(a.annotator_id, []).append(a.overall_score)

    pairs = _transcript_pairs(tasks, matched, config)
    wer = corpus_error_rates(pairs, tokenize_words) if pairs else None
    cer = corpus_error_rates(pairs, tokenize_chars) if pairs else None

    return AccuracyBlock(
        annotation_count=len(matched),
        mean_overall_score=round3(mean_score(overall)) if overall else None,
        per_stage_mean_scores=per_stage,
        transcript_turn_count=len(pairs),
        wer_pooled=round3(wer.pooled) if wer else None,
        wer_macro=round3(wer.macro) if wer else None,
        cer_pooled=round3(cer.pooled) if cer else None,
        cer_macro=round3(cer.macro) if cer else None,
        comments=tuple(
            TurnComment(a.task_id, a.annotator_id, a.comment)
            for a in matched
            if a.comment
        ),
        per_annotator=tuple(
            AnnotatorStats(
                annotator_id=annotator,
                annotation_count=len(scores),
                mean_overall_score=round3(mean_score(scores)),
            )
            for annotator, scores in sorted(by_annotator.items())
        ),
    )


def build_report(
    snapshot: dict[str, Any],
    config_name: str,
    track_id: str | None = None,
    since_ts: int | None = None,
    until_ts: int | None = None,
    generated_ts: int | None = None,
) -> BenchmarkReport:
    """Deterministic report over a snapshot's completed turns.

    ``generated_ts`` defaults to the newest timestamp in the matched
    records, not the wall clock, so the same snapshot always produces
    the same report.
    """
    config = _config_from_snapshot(snapshot, config_name)
    tasks = _matching_tasks(snapshot, config_name, track_id, since_ts, until_ts)
    if not tasks:
        raise NoMatchingTurns(
            f"no completed turns for {config_name!r} match the filters"
        )
    annotations = list(snapshot.get("annotations", []))

    stage_order = validate_pipeline(config).order
    raw_worker_means: dict[str, float] = {}
    stages: list[StageLatency] = []
    for stage_id in stage_order:
        worker_samples = [t.record(stage_id).worker_reported_duration for t in tasks]
        overhead_samples = [t.record(stage_id).overhead_ms() for t in tasks]
        raw_worker_means[stage_id] = sum(worker_samples) / len(worker_samples)
        stages.append(
            StageLatency(
                stage_id=stage_id,
                kind=config.stage(stage_id).kind.value,
                worker=_rounded_stats(worker_samples),
                overhead=_rounded_stats(overhead_samples),
            )
        )

    e2e_samples = [end_to_end_latency(t) for t in tasks]
    e2e_raw_mean = sum(e2e_samples) / len(e2e_samples)
    path = critical_path(config, raw_worker_means)
    cp_raw_mean = sum(raw_worker_means[sid] for sid in path)
    if cp_raw_mean > e2e_raw_mean + 1e-9:
        raise ReportError(
            f"critical-path worker mean {cp_raw_mean} exceeds end-to-end mean "
            f"{e2e_raw_mean}; records are inconsistent"
        )

    if generated_ts is None:
        generated_ts = max(
            [t.completed_ts or t.client_capture_ts for t in tasks]
            + [a.created_ts for a in annotations if a.task_id in {t.task_id for t in tasks}]
        )

    return BenchmarkReport(
        config_name=config_name,
        generated_ts=generated_ts,
        turn_count=len(tasks),
        stages=tuple(stages),
        end_to_end=_rounded_stats(e2e_samples),
        critical_path=path,
        critical_path_mean_ms=round3(cp_raw_mean),
        overhead_mean_ms=round3(e2e_raw_mean - cp_raw_mean),
        accuracy=_accuracy_block(tasks, annotations, config),
        notes=REPORT_NOTES,
    )


# -- comparison -------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    config_name: str
    e2e_mean_ms: float
    e2e_p95_ms: int
    dominant_stage: str
    mean_overall_score: float | None


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]


def compare_configs(reports: list[BenchmarkReport]) -> ComparisonTable:
    """Rank reports by end-to-end mean, ascending; ties keep input order."""
    if len(reports) < 2:
        raise InsufficientReports(f"need at least 2 reports, got {len(reports)}")
    rows = []
    for report in sorted(reports, key=lambda r: r.end_to_end.mean):
        dominant = max(
            sorted(report.critical_path),
            key=lambda sid: report.stage(sid).worker.mean,
        )
        rows.append(
            ComparisonRow(
                config_name=report.config_name,
                e2e_mean_ms=report.end_to_end.mean,
                e2e_p95_ms=report.end_to_end.p95,
                dominant_stage=dominant,
                mean_overall_score=report.accuracy.mean_overall_score,
            )
        )
    return ComparisonTable(rows=tuple(rows))


# -- export -----------------------------------------------------------------


def _stats_doc(s: LatencyStats) -> dict[str, Any]:
    return {
        "count": s.count,
        "mean_ms": s.mean,
        "stddev_ms": s.stddev,
        "min_ms": s.min,
        "max_ms": s.max,
        "p50_ms": s.p50,
        "p95_ms": s.p95,
    }


def _stats_from_doc(doc: dict[str, Any]) -> LatencyStats:
    return LatencyStats(
        count=doc["count"],
        mean=doc["mean_ms"],
        stddev=doc["stddev_ms"],
        min=doc["min_ms"],
        max=doc["max_ms"],
        p50=doc["p50_ms"],
        p95=doc["p95_ms"],
    )


def report_to_doc(report: BenchmarkReport) -> dict[str, Any]:
    return {
        "config_name": report.config_name,
        "generated_ts": report.generated_ts,
        "turn_count": report.turn_count,
        "critical_path": list(report.critical_path),
        "critical_path_mean_ms": report.critical_path_mean_ms,
        "overhead_mean_ms": report.overhead_mean_ms,
        "end_to_end": _stats_doc(report.end_to_end),
        "stages": [
            {
                "stage_id": s.stage_id,
                "kind": s.kind,
                "worker": _stats_doc(s.worker),
                "overhead": _stats_doc(s.overhead),
            }
            for s in report.stages
        ],
        "accuracy": {
            "annotation_count": report.accuracy.annotation_count,
            "mean_overall_score": report.accuracy.mean_overall_score,
            "per_stage_mean_scores": dict(report.accuracy.per_stage_mean_scores),
            "transcript_turn_count": report.accuracy.transcript_turn_count,
            "wer_pooled": report.accuracy.wer_pooled,
            "wer_macro": report.accuracy.wer_macro,
            "cer_pooled": report.accuracy.cer_pooled,
            "cer_macro": report.accuracy.cer_macro,
            "comments": [
                {
                    "task_id": c.task_id,
                    "annotator_id": c.annotator_id,
                    "comment": c.comment,
                }
                for c in report.accuracy.comments
            ],
            "per_annotator": [
                {
                    "annotator_id": a.annotator_id,
                    "annotation_count": a.annotation_count,
                    "mean_overall_score": a.mean_overall_score,
                }
                for a in report.accuracy.per_annotator
            ],
        },
        "notes": list(report.notes),
    }


def report_from_doc(doc: dict[str, Any]) -> BenchmarkReport:
    acc = doc["accuracy"]
    return BenchmarkReport(
        config_name=doc["config_name"],
        generated_ts=doc["generated_ts"],
        turn_count=doc["turn_count"],
        stages=tuple(
            StageLatency(
                stage_id=s["stage_id"],
                kind=s["kind"],
                worker=_stats_from_doc(s["worker"]),
                overhead=_stats_from_doc(s["overhead"]),
            )
            for s in doc["stages"]
        ),
        end_to_end=_stats_from_doc(doc["end_to_end"]),
        critical_path=tuple(doc["critical_path"]),
        critical_path_mean_ms=doc["critical_path_mean_ms"],
        overhead_mean_ms=doc["overhead_mean_ms"],
        accuracy=AccuracyBlock(
            annotation_count=acc["annotation_count"],
            mean_overall_score=acc["mean_overall_score"],
            per_stage_mean_scores=dict(acc["per_stage_mean_scores"]),
            transcript_turn_count=acc["transcript_turn_count"],
            wer_pooled=acc["wer_pooled"],
            wer_macro=acc["wer_macro"],
            cer_pooled=acc["cer_pooled"],
            cer_macro=acc["cer_macro"],
            comments=tuple(
                TurnComment(c["task_id"], c["annotator_id"], c["comment"])
                for c in acc["comments"]
            ),
            per_annotator=tuple(
                AnnotatorStats(
                    annotator_id=a["annotator_id"],
                    annotation_count=a["annotation_count"],
                    mean_overall_score=a["mean_overall_score"],
                )
                for a in acc["per_annotator"]
            ),
        ),
        notes=tuple(doc["notes"]),
    )


def comparison_to_doc(table: ComparisonTable) -> dict[str, Any]:
    return {
        "rows": [
            {
                "config": r.config_name,
                "e2e_mean_ms": r.e2e_mean_ms,
                "e2e_p95_ms": r.e2e_p95_ms,
                "dominant_stage": r.dominant_stage,
                "mean_overall_score": r.mean_overall_score,
            }
            for r in table.rows
        ]
    }


def comparison_from_doc(doc: dict[str, Any]) -> ComparisonTable:
    return ComparisonTable(
        rows=tuple(
            ComparisonRow(
                config_name=r["config"],
                e2e_mean_ms=r["e2e_mean_ms"],
                e2e_p95_ms=r["e2e_p95_ms"],
                dominant_stage=r["dominant_stage"],
                mean_overall_score=r["mean_overall_score"],
            )
            for r in doc["rows"]
        )
    )


def _json_bytes(doc: dict[str, Any]) -> bytes:
    return (json.dumps(doc, indent=2) + "\n").encode()


def export_report(report: BenchmarkReport, format: str = "json") -> bytes:
    """Serialize a report; 'json' round-trips losslessly, 'csv' is tabular."""
    if format == "json":
        return _json_bytes(report_to_doc(report))
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for s in report.stages:
            writer.writerow(
                [
                    report.config_name,
                    s.stage_id,
                    s.worker.count,
                    s.worker.mean,
                    s.worker.stddev,
                    s.worker.min,
                    s.worker.max,
                    s.worker.p50,
                    s.worker.p95,
                    s.overhead.mean,
                ]
            )
        e2e = report.end_to_end
        writer.writerow(
            [
                report.config_name,
                "end_to_end",
                e2e.count,
                e2e.mean,
                e2e.stddev,
                e2e.min,
                e2e.max,
                e2e.p50,
                e2e.p95,
                report.overhead_mean_ms,
            ]
        )
        return out.getvalue().encode()
    raise ReportError(f"unknown export format {format!r}")


def export_comparison(table: ComparisonTable, format: str = "json") -> bytes:
    if format == "json":
        return _json_bytes(comparison_to_doc(table))
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(COMPARISON_CSV_COLUMNS)
        for r in table.rows:
            writer.writerow(
                [
                    r.config_name,
                    r.e2e_mean_ms,
                    r.e2e_p95_ms,
                    r.dominant_stage,
                    "" if r.mean_overall_score is None else r.mean_overall_score,
                ]
            )
        return out.getvalue().encode()
    raise ReportError(f"unknown export format {format!r}")
