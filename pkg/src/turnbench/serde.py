"""Dict converters between domain objects and JSON-safe documents.

One canonical document shape per type, used by the sqlite store, the
HTTP layer, and file exports, so the three never drift apart. Documents
use plain strings for enums and omit nothing: absent optionals are
explicit nulls, keeping exports byte-stable.
"""

from __future__ import annotations

from typing import Any

from .domain import (
    AnnotationRecord,
    InputBinding,
    OutputChannel,
    PipelineConfig,
    SourceInput,
    StageInput,
    StageKind,
    StageRecord,
    StageSpec,
    StageState,
    SourceChannel,
    TaskState,
    TurnTask,
)


def input_to_doc(binding: InputBinding) -> dict[str, Any]:
    if isinstance(binding, SourceInput):
        return {"source": binding.channel.value}
    return {"stage": binding.stage_id}


def input_from_doc(doc: dict[str, Any]) -> InputBinding:
    if "source" in doc:
        return SourceInput(SourceChannel(doc["source"]))
    if "stage" in doc:
        return StageInput(str(doc["stage"]))
    raise ValueError(f"input binding needs 'source' or 'stage': {doc!r}")


def stage_spec_to_doc(spec: StageSpec) -> dict[str, Any]:
    return {
        "stage_id": spec.stage_id,
        "kind": spec.kind.value,
        "inputs": [input_to_doc(b) for b in spec.inputs],
        "output_channel": spec.output_channel.value if spec.output_channel else None,
        "enabled": spec.enabled,
        "binding": spec.binding,
    }


def stage_spec_from_doc(doc: dict[str, Any]) -> StageSpec:
    return StageSpec(
        stage_id=str(doc["stage_id"]),
        kind=StageKind(doc["kind"]),
        inputs=tuple(input_from_doc(b) for b in doc.get("inputs", [])),
        output_channel=(
            OutputChannel(doc["output_channel"]) if doc.get("output_channel") else None
        ),
        enabled=bool(doc.get("enabled", True)),
        binding=str(doc.get("binding", "mock")),
    )


def config_to_doc(config: PipelineConfig) -> dict[str, Any]:
    return {
        "config_name": config.config_name,
        "stages": [stage_spec_to_doc(s) for s in config.stages],
        "terminal_stage": config.terminal_stage,
    }


def config_from_doc(doc: dict[str, Any]) -> PipelineConfig:
    return PipelineConfig(
        config_name=str(doc["config_name"]),
        stages=tuple(stage_spec_from_doc(s) for s in doc.get("stages", [])),
        terminal_stage=str(doc["terminal_stage"]),
    )


def record_to_doc(record: StageRecord) -> dict[str, Any]:
    return {
        "task_id": record.task_id,
        "stage_id": record.stage_id,
        "state": record.state.value,
        "input_blob_hashes": list(record.input_blob_hashes),
        "output_blob_hash": record.output_blob_hash,
        "output_text": record.output_text,
        "hub_dispatch_ts": record.hub_dispatch_ts,
        "hub_complete_ts": record.hub_complete_ts,
        "worker_reported_duration": record.worker_reported_duration,
        "attempt": record.attempt,
        "last_error": record.last_error,
        "lease": (
            {
                "worker_id": record.lease_worker_id,
                "lease_expiry_ts": record.lease_expiry_ts,
            }
            if record.lease_worker_id is not None
            else None
        ),
    }


def record_from_doc(doc: dict[str, Any]) -> StageRecord:
    return StageRecord(
        task_id=str(doc["task_id"]),
        stage_id=str(doc["stage_id"]),
        state=StageState(doc["state"]),
        input_blob_hashes=list(doc.get("input_blob_hashes", [])),
        output_blob_hash=doc.get("output_blob_hash"),
        output_text=doc.get("output_text"),
        hub_dispatch_ts=doc.get("hub_dispatch_ts"),
        hub_complete_ts=doc.get("hub_complete_ts"),
        worker_reported_duration=doc.get("worker_reported_duration"),
        attempt=int(doc.get("attempt", 1)),
        last_error=doc.get("last_error"),
        lease_worker_id=(doc.get("lease") or {}).get("worker_id"),
        lease_expiry_ts=(doc.get("lease") or {}).get("lease_expiry_ts"),
    )


def task_to_doc(task: TurnTask) -> dict[str, Any]:
    return {
        "task_id": task.task_id,
        "config_name": task.config_name,
        "track_id": task.track_id,
        "client_capture_ts": task.client_capture_ts,
        "source_blobs": dict(task.source_blobs),
        "metadata": dict(task.metadata),
        "state": task.state.value,
        "stage_records": [record_to_doc(r) for r in task.stage_records],
        "failing_stage": task.failing_stage,
        "submission_seq": task.submission_seq,
        "completed_ts": task.completed_ts,
    }


def task_from_doc(doc: dict[str, Any]) -> TurnTask:
    return TurnTask(
        task_id=str(doc["task_id"]),
        config_name=str(doc["config_name"]),
        track_id=str(doc.get("track_id", "")),
        client_capture_ts=int(doc.get("client_capture_ts", 0)),
        source_blobs={str(k): str(v) for k, v in doc.get("source_blobs", {}).items()},
        metadata={str(k): str(v) for k, v in doc.get("metadata", {}).items()},
        state=TaskState(doc["state"]),
        stage_records=[record_from_doc(r) for r in doc.get("stage_records", [])],
        failing_stage=doc.get("failing_stage"),
        submission_seq=int(doc.get("submission_seq", 0)),
        completed_ts=doc.get("completed_ts"),
    )


def claim_to_doc(work) -> dict[str, Any]:
    return {
        "task_id": work.task_id,
        "stage_id": work.stage_id,
        "kind": work.kind,
        "binding": work.binding,
        "config_name": work.config_name,
        "track_id": work.track_id,
        "attempt": work.attempt,
        "lease_token": work.lease_token,
        "lease_expires_ts": work.lease_expires_ts,
        "inputs": [
            {
                "ref": i.ref,
                "channel": i.channel,
                "text": i.text,
                "blob_hash": i.blob_hash,
            }
            for i in work.inputs
        ],
        "metadata": dict(work.metadata),
        "output_channel": work.output_channel,
    }


def claim_from_doc(doc: dict[str, Any]):
    from .hub.core import ClaimedWork, WorkInput

    return ClaimedWork(
        task_id=str(doc["task_id"]),
        stage_id=str(doc["stage_id"]),
        kind=str(doc["kind"]),
        binding=str(doc.get("binding", "mock")),
        config_name=str(doc["config_name"]),
        track_id=str(doc.get("track_id", "")),
        attempt=int(doc.get("attempt", 1)),
        lease_token=int(doc["lease_token"]),
        lease_expires_ts=int(doc.get("lease_expires_ts", 0)),
        inputs=tuple(
            WorkInput(
                ref=str(i["ref"]),
                channel=str(i["channel"]),
                text=i.get("text"),
                blob_hash=i.get("blob_hash"),
            )
            for i in doc.get("inputs", [])
        ),
        metadata={str(k): str(v) for k, v in doc.get("metadata", {}).items()},
        output_channel=str(doc["output_channel"]),
    )


def annotation_to_doc(a: AnnotationRecord) -> dict[str, Any]:
    return {
        "annotation_id": a.annotation_id,
        "task_id": a.task_id,
        "annotator_id": a.annotator_id,
        "overall_score": a.overall_score,
        "stage_scores": dict(a.stage_scores),
        "comment": a.comment,
        "reference_transcript": a.reference_transcript,
        "created_ts": a.created_ts,
    }


def annotation_from_doc(doc: dict[str, Any]) -> AnnotationRecord:
    return AnnotationRecord(
        annotation_id=str(doc["annotation_id"]),
        task_id=str(doc["task_id"]),
        annotator_id=str(doc.get("annotator_id", "")),
        overall_score=int(doc["overall_score"]),
        stage_scores={str(k): int(v) for k, v in doc.get("stage_scores", {}).items()},
        comment=str(doc.get("comment", "")),
        reference_transcript=doc.get("reference_transcript"),
        created_ts=int(doc.get("created_ts", 0)),
    )
