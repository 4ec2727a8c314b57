"""Shared data model: pipeline configurations, turn tasks, stage records.

A pipeline configuration is a DAG of stages. Each stage consumes either
source channels of the submitted turn (audio, video, turn metadata) or the
outputs of upstream stages, and emits on a channel fixed by its kind. A
conversation turn moving through a configuration owns one stage record per
enabled stage; those records carry the timing data every benchmark report
is built from.

Everything in this module is pure data plus validation; nothing here has
side effects, so all of it is safe to use from any thread.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union


class StageKind(str, enum.Enum):
    SPEECH2TEXT = "speech2text"
    IMAGE2TEXT = "image2text"
    EMOTION = "emotion"
    LLM = "llm"
    VISION_LLM = "vision_llm"
    TTS = "tts"
    E2E_VOICE = "e2e_voice"
    SAFEGUARD = "safeguard"
    CUSTOM = "custom"


class SourceChannel(str, enum.Enum):
    AUDIO = "audio"
    VIDEO = "video"
    TEXT_METADATA = "text-metadata"


class OutputChannel(str, enum.Enum):
    TEXT = "text"
    AUDIO = "audio"
    IMAGE = "image"


#: Output channel is fixed by stage kind; ``custom`` must declare its own.
KIND_OUTPUT_CHANNEL: dict[StageKind, OutputChannel] = {
    StageKind.SPEECH2TEXT: OutputChannel.TEXT,
    StageKind.IMAGE2TEXT: OutputChannel.TEXT,
    StageKind.EMOTION: OutputChannel.TEXT,
    StageKind.LLM: OutputChannel.TEXT,
    StageKind.VISION_LLM: OutputChannel.TEXT,
    StageKind.SAFEGUARD: OutputChannel.TEXT,
    StageKind.TTS: OutputChannel.AUDIO,
    StageKind.E2E_VOICE: OutputChannel.AUDIO,
}

#: Channels that are carried as media blobs on the turn (metadata is inline).
BLOB_CHANNELS = (SourceChannel.AUDIO, SourceChannel.VIDEO)

#: Inline text payloads above this size must go through the blob store.
INLINE_TEXT_LIMIT = 64 * 1024


@dataclass(frozen=True)
class SourceInput:
    """Stage input fed from a channel of the submitted turn."""

    channel: SourceChannel


@dataclass(frozen=True)
class StageInput:
    """Stage input fed from the output of an upstream stage."""

    stage_id: str


InputBinding = Union[SourceInput, StageInput]


def source(channel: str | SourceChannel) -> SourceInput:
    return SourceInput(SourceChannel(channel))


def upstream(stage_id: str) -> StageInput:
    return StageInput(stage_id)


@dataclass(frozen=True)
class StageSpec:
    stage_id: str
    kind: StageKind
    inputs: tuple[InputBinding, ...]
    output_channel: OutputChannel | None = None
    enabled: bool = True
    binding: str = "mock"

    def resolved_output_channel(self) -> OutputChannel | None:
        """Channel this stage emits on, derived from kind unless custom."""
        if self.kind is StageKind.CUSTOM:
            return self.output_channel
        return KIND_OUTPUT_CHANNEL[self.kind]

    def upstream_ids(self) -> list[str]:
        return [b.stage_id for b in self.inputs if isinstance(b, StageInput)]

    def source_channels(self) -> list[SourceChannel]:
        return [b.channel for b in self.inputs if isinstance(b, SourceInput)]


@dataclass(frozen=True)
class PipelineConfig:
    config_name: str
    stages: tuple[StageSpec, ...]
    terminal_stage: str

    def stage(self, stage_id: str) -> StageSpec:
        for s in self.stages:
            if s.stage_id == stage_id:
                return s
        raise KeyError(stage_id)

    def enabled_stages(self) -> list[StageSpec]:
        return [s for s in self.stages if s.enabled]

    def required_blob_channels(self) -> set[SourceChannel]:
        """Media channels a turn must carry for the enabled stages."""
        needed: set[SourceChannel] = set()
        for stage in self.enabled_stages():
            for channel in stage.source_channels():
                if channel in BLOB_CHANNELS:
                    needed.add(channel)
        return needed


class TaskState(str, enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class StageState(str, enum.Enum):
    BLOCKED = "blocked"
    READY = "ready"
    LEASED = "leased"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class StageRecord:
    """Execution record for one stage of one turn.

    All timestamps are hub-clock UTC epoch milliseconds; the worker only
    ever reports a monotonic duration, never a wall-clock time.
    """

    task_id: str
    stage_id: str
    state: StageState = StageState.BLOCKED
    input_blob_hashes: list[str] = field(default_factory=list)
    output_blob_hash: str | None = None
    output_text: str | None = None
    hub_dispatch_ts: int | None = None
    hub_complete_ts: int | None = None
    worker_reported_duration: int | None = None
    attempt: int = 1
    last_error: str | None = None
    lease_worker_id: str | None = None
    lease_expiry_ts: int | None = None

    def overhead_ms(self) -> int | None:
        """Hub-observed stage wall time minus the worker's own measure."""
        if (
            self.hub_dispatch_ts is None
            or self.hub_complete_ts is None
            or self.worker_reported_duration is None
        ):
            return None
        return (self.hub_complete_ts - self.hub_dispatch_ts) - self.worker_reported_duration


@dataclass
class TurnTask:
    """One conversation turn moving through a pipeline configuration.

    ``client_capture_ts`` is stamped by the hub when it accepts the turn,
    so every latency figure lives on the single hub clock; submitters and
    workers never contribute wall-clock times of their own.
    """

    task_id: str
    config_name: str
    track_id: str
    client_capture_ts: int
    source_blobs: dict[str, str] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)
    state: TaskState = TaskState.PENDING
    stage_records: list[StageRecord] = field(default_factory=list)
    failing_stage: str | None = None
    submission_seq: int = 0
    completed_ts: int | None = None

    def e2e_latency_ms(self) -> int | None:
        """Hub receipt to terminal completion, on the hub clock."""
        if self.completed_ts is None:
            return None
        return self.completed_ts - self.client_capture_ts

    def record(self, stage_id: str) -> StageRecord:
        for r in self.stage_records:
            if r.stage_id == stage_id:
                return r
        raise KeyError(stage_id)


@dataclass(frozen=True)
class AnnotationRecord:
    """Human judgment of one completed turn. Scores are integers 0-5."""

    annotation_id: str
    task_id: str
    annotator_id: str
    overall_score: int
    stage_scores: Mapping[str, int] = field(default_factory=dict)
    comment: str = ""
    reference_transcript: str | None = None
    created_ts: int = 0


SCORE_RANGE = range(0, 6)


@dataclass(frozen=True)
class ValidationIssue:
    """One violation found while validating a pipeline configuration."""

    code: str
    stage_id: str | None = None
    detail: str = ""

    def __str__(self) -> str:
        where = f" [{self.stage_id}]" if self.stage_id else ""
        return f"{self.code}{where}: {self.detail}"


class PipelineValidationError(ValueError):
    """Raised when a configuration violates the DAG/channel contract."""

    def __init__(self, config_name: str, issues: list[ValidationIssue]):
        self.config_name = config_name
        self.issues = issues
        summary = "; ".join(str(i) for i in issues)
        super().__init__(f"invalid pipeline {config_name!r}: {summary}")


@dataclass(frozen=True)
class ValidatedPipeline:
    """A configuration that passed validation, with its computed stage order."""

    config: PipelineConfig
    order: tuple[str, ...]


def collect_issues(config: PipelineConfig) -> list[ValidationIssue]:
    """Gather every violation in the config instead of stopping at the first."""
    issues: list[ValidationIssue] = []

    seen: set[str] = set()
    for s in config.stages:
        if s.stage_id in seen:
            issues.append(
                ValidationIssue("DuplicateStageId", s.stage_id, "stage_id repeats")
            )
        seen.add(s.stage_id)

    by_id = {s.stage_id: s for s in config.stages}
    enabled = {s.stage_id: s for s in config.stages if s.enabled}

    for s in enabled.values():
        if s.resolved_output_channel() is None:
            issues.append(
                ValidationIssue(
                    "MissingOutputChannel", s.stage_id, "custom stage must declare one"
                )
            )
        elif (
            s.output_channel is not None
            and s.output_channel is not s.resolved_output_channel()
        ):
            issues.append(
                ValidationIssue(
                    "OutputChannelMismatch",
                    s.stage_id,
                    f"kind {s.kind.value} emits {s.resolved_output_channel().value}",
                )
            )
        for ref in s.upstream_ids():
            if ref not in by_id:
                issues.append(
                    ValidationIssue(
                        "DanglingInput", s.stage_id, f"references unknown stage {ref!r}"
                    )
                )
            elif ref not in enabled:
                issues.append(
                    ValidationIssue(
                        "DanglingInput", s.stage_id, f"references disabled stage {ref!r}"
                    )
                )

    terminal = by_id.get(config.terminal_stage)
    if terminal is None or not terminal.enabled:
        issues.append(
            ValidationIssue(
                "TerminalNotAudio",
                config.terminal_stage,
                "terminal stage missing or disabled",
            )
        )
    elif terminal.resolved_output_channel() is not OutputChannel.AUDIO:
        issues.append(
            ValidationIssue(
                "TerminalNotAudio",
                config.terminal_stage,
                "terminal stage must emit audio",
            )
        )

    order, cycle = _topological_order(enabled)
    if cycle:
        issues.append(
            ValidationIssue("CycleDetected", None, "cycle among " + ",".join(cycle))
        )
    elif terminal is not None and terminal.enabled:
        for stage_id in _unreachable_stages(enabled, config.terminal_stage):
            issues.append(
                ValidationIssue(
                    "UnreachableStage",
                    stage_id,
                    "not on any source-to-terminal path",
                )
            )

    return issues


def validate_pipeline(config: PipelineConfig) -> ValidatedPipeline:
    """Validate a configuration and compute a deterministic stage order.

    The returned order is a topological order of the enabled stages with
    lexicographic tie-breaking, so it is stable across runs. Raises
    :class:`PipelineValidationError` carrying the full violation list.
    """
    issues = collect_issues(config)
    if issues:
        raise PipelineValidationError(config.config_name, issues)
    enabled = {s.stage_id: s for s in config.stages if s.enabled}
    order, cycle = _topological_order(enabled)
    assert not cycle
    return ValidatedPipeline(config=config, order=tuple(order))


def _topological_order(
    enabled: Mapping[str, StageSpec],
) -> tuple[list[str], list[str]]:
    """Kahn's algorithm with a sorted frontier; returns (order, cycle_members)."""
    indegree: dict[str, int] = {sid: 0 for sid in enabled}
    downstream: dict[str, list[str]] = {sid: [] for sid in enabled}
    for s in enabled.values():
        for ref in s.upstream_ids():
            if ref in enabled:
                indegree[s.stage_id] += 1
                downstream[ref].append(s.stage_id)

    frontier = sorted(sid for sid, deg in indegree.items() if deg == 0)
    order: list[str] = []
    while frontier:
        sid = frontier.pop(0)
        order.append(sid)
        opened = []
        for nxt in downstream[sid]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                opened.append(nxt)
        if opened:
            frontier = sorted(frontier + opened)
    if len(order) != len(enabled):
        cycle = sorted(set(enabled) - set(order))
        return order, cycle
    return order, []


def _unreachable_stages(
    enabled: Mapping[str, StageSpec], terminal_id: str
) -> list[str]:
    """Enabled stages not on any path from a source channel to the terminal."""
    # A stage is source-fed if any input chain bottoms out at a channel.
    source_fed: set[str] = set()
    changed = True
    while changed:
        changed = False
        for s in enabled.values():
            if s.stage_id in source_fed:
                continue
            if s.source_channels() or any(
                ref in source_fed for ref in s.upstream_ids() if ref in enabled
            ):
                source_fed.add(s.stage_id)
                changed = True

    # Reverse reachability from the terminal along enabled edges.
    feeds_terminal: set[str] = set()
    stack = [terminal_id]
    while stack:
        sid = stack.pop()
        if sid in feeds_terminal or sid not in enabled:
            continue
        feeds_terminal.add(sid)
        stack.extend(ref for ref in enabled[sid].upstream_ids() if ref in enabled)

    return sorted(
        sid for sid in enabled if sid not in source_fed or sid not in feeds_terminal
    )


def ready_stages(task: TurnTask, config: PipelineConfig) -> list[str]:
    """Enabled stages whose dependencies are complete and that can be claimed.

    Excludes anything already leased, completed, or permanently failed;
    a stage waiting on a retry is ready again. Sorted for deterministic
    claim tie-breaking.
    """
    records = {r.stage_id: r for r in task.stage_records}
    out: list[str] = []
    for stage in config.enabled_stages():
        record = records.get(stage.stage_id)
        if record is None or record.state not in (StageState.BLOCKED, StageState.READY):
            continue
        deps = [records.get(ref) for ref in stage.upstream_ids()]
        if all(d is not None and d.state is StageState.COMPLETED for d in deps):
            out.append(stage.stage_id)
    return sorted(out)


def new_stage_records(task_id: str, config: PipelineConfig) -> list[StageRecord]:
    """Fresh records for every enabled stage, in the config's declared order."""
    return [
        StageRecord(task_id=task_id, stage_id=s.stage_id) for s in config.enabled_stages()
    ]


def chain(config_name: str, *specs: StageSpec) -> PipelineConfig:
    """Convenience for tests and presets: last stage is terminal."""
    return PipelineConfig(
        config_name=config_name, stages=tuple(specs), terminal_stage=specs[-1].stage_id
    )
