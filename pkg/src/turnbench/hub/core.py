"""The orchestration hub: config registry, lease-based task queue, records.

All mutating operations run under one condition variable, which makes
every transition linearizable and lets claim requests long-poll until
work appears. Timing is hub-authoritative: the hub stamps turn receipt,
dispatch, and completion from its own clock, workers only ever report
the monotonic duration of their own compute, and the difference between
the two is surfaced separately as orchestration overhead.

Lease rules:

* A claim leases one ready stage to one worker for a bounded time
  (default 120 s, configurable per stage kind).
* Completion and failure must present the lease token they were issued;
  anything else is rejected, so a stage can never be completed twice.
* An expired lease silently returns the stage to the ready queue. Expiry
  is not the worker's fault and does not consume a retry attempt; only an
  explicit failure report does, and the third such failure is permanent.
* Expiry is evaluated lazily on every claim and by the serve loop's
  periodic sweep.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Callable, Iterable

from ..blobstore import BlobStore
from ..domain import (
    BLOB_CHANNELS,
    INLINE_TEXT_LIMIT,
    SCORE_RANGE,
    AnnotationRecord,
    OutputChannel,
    PipelineConfig,
    SourceInput,
    StageRecord,
    StageSpec,
    StageState,
    TaskState,
    TurnTask,
    ValidatedPipeline,
    new_stage_records,
    ready_stages,
    validate_pipeline,
)
from .. import serde
from .storage import MemoryStore, MetadataStore

import threading

Clock = Callable[[], int]


def real_clock() -> int:
    """UTC epoch milliseconds."""
    return time.time_ns() // 1_000_000


MAX_ATTEMPTS = 3
DEFAULT_LEASE_MS = 120_000


class HubError(Exception):
    """Base for request-level failures; ``code`` is the wire error code."""

    code = "hub_error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class UnknownConfig(HubError):
    code = "unknown_config"


class UnknownTask(HubError):
    code = "unknown_task"


class UnknownStage(HubError):
    code = "unknown_stage"


class UnknownWorker(HubError):
    code = "unknown_worker"


class StaleLease(HubError):
    """The presented lease is not the live one for this stage."""

    code = "stale_lease"


class LeaseExpired(StaleLease):
    """The presented lease lapsed; the stage was already requeued."""

    code = "lease_expired"


class NotLeaseHolder(StaleLease):
    """A live lease exists but belongs to a different worker."""

    code = "not_lease_holder"


class InvalidOutput(HubError):
    code = "invalid_output"


class MissingChannel(HubError):
    """The configuration needs a source channel the submission lacks."""

    code = "missing_channel"


class BlobNotFound(HubError):
    """A referenced blob hash is not present in the blob store."""

    code = "blob_not_found"


class ScoreOutOfRange(HubError):
    code = "score_out_of_range"


class TaskNotCompleted(HubError):
    code = "task_not_completed"


@dataclass(frozen=True)
class WorkInput:
    """One resolved input handed to a worker with a claim."""

    ref: str
    channel: str
    text: str | None = None
    blob_hash: str | None = None


@dataclass(frozen=True)
class ClaimedWork:
    """Everything a worker needs to execute one stage attempt."""

    task_id: str
    stage_id: str
    kind: str
    binding: str
    config_name: str
    track_id: str
    attempt: int
    lease_token: int
    lease_expires_ts: int
    inputs: tuple[WorkInput, ...]
    metadata: dict[str, str]
    output_channel: str


@dataclass
class WorkerInfo:
    worker_id: str
    display_name: str
    capabilities: tuple[str, ...]
    registered_ts: int
    last_seen_ts: int
    claim_count: int = 0


@dataclass(frozen=True)
class Lease:
    token: int
    worker_id: str
    granted_ts: int
    expiry_ts: int
    attempt: int


def capability_matches(capabilities: Iterable[str], kind: str, binding: str) -> bool:
    """Bare kind matches any binding; ``kind:binding`` matches only that one."""
    for cap in capabilities:
        if cap == kind:
            return True
        if cap == f"{kind}:{binding}":
            return True
    return False


class Hub:
    """In-process orchestration core; the HTTP layer is a thin veneer."""

    def __init__(
        self,
        blobs: BlobStore,
        store: MetadataStore | None = None,
        clock: Clock = real_clock,
        default_lease_ms: int = DEFAULT_LEASE_MS,
        lease_ms_by_kind: dict[str, int] | None = None,
        max_attempts: int = MAX_ATTEMPTS,
        inline_limit: int = INLINE_TEXT_LIMIT,
    ):
        self.blobs = blobs
        self.clock = clock
        self.default_lease_ms = default_lease_ms
        self.lease_ms_by_kind = dict(lease_ms_by_kind or {})
        self.max_attempts = max_attempts
        self.inline_limit = inline_limit
        self._store: MetadataStore = store if store is not None else MemoryStore()
        self._cond = threading.Condition(threading.RLock())

        self._configs: dict[str, ValidatedPipeline] = {}
        self._tasks: dict[str, TurnTask] = {}
        self._task_order: list[str] = []
        self._workers: dict[str, WorkerInfo] = {}
        self._annotations: dict[str, AnnotationRecord] = {}
        self._leases: dict[tuple[str, str], Lease] = {}
        self._completion_tokens: dict[tuple[str, str], int] = {}
        self._log: list[dict[str, Any]] = []
        self._counters = {"task": 0, "worker": 0, "annotation": 0, "lease": 0, "log": 0}
        self._load()

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        state = self._store.load_state()
        for doc in state["configs"].values():
            config = serde.config_from_doc(doc)
            self._configs[config.config_name] = validate_pipeline(config)
        tasks = [serde.task_from_doc(doc) for doc in state["tasks"].values()]
        for task in sorted(tasks, key=lambda t: t.submission_seq):
            # Leases are volatile: work that was in flight is ready again.
            for record in task.stage_records:
                if record.state is StageState.LEASED:
                    record.state = StageState.READY
                    record.hub_dispatch_ts = None
                    record.lease_worker_id = None
                    record.lease_expiry_ts = None
            self._tasks[task.task_id] = task
            self._task_order.append(task.task_id)
        for doc in state["annotations"].values():
            a = serde.annotation_from_doc(doc)
            self._annotations[a.annotation_id] = a
        for doc in state["workers"].values():
            w = WorkerInfo(
                worker_id=doc["worker_id"],
                display_name=doc.get("display_name", ""),
                capabilities=tuple(doc.get("capabilities", [])),
                registered_ts=int(doc.get("registered_ts", 0)),
                last_seen_ts=int(doc.get("last_seen_ts", 0)),
                claim_count=int(doc.get("claim_count", 0)),
            )
            self._workers[w.worker_id] = w
        self._log = list(state["log"])
        self._counters.update(state["counters"])

    def _persist_task(self, task: TurnTask) -> None:
        self._store.save_task(task.task_id, serde.task_to_doc(task))

    def _persist_worker(self, w: WorkerInfo) -> None:
        self._store.save_worker(
            w.worker_id,
            {
                "worker_id": w.worker_id,
                "display_name": w.display_name,
                "capabilities": list(w.capabilities),
                "registered_ts": w.registered_ts,
                "last_seen_ts": w.last_seen_ts,
                "claim_count": w.claim_count,
            },
        )

    def _next(self, counter: str) -> int:
        self._counters[counter] += 1
        self._store.save_counters({counter: self._counters[counter]})
        return self._counters[counter]

    def _emit(
        self,
        event: str,
        task_id: str | None = None,
        stage_id: str | None = None,
        worker_id: str | None = None,
        detail: str = "",
    ) -> None:
        doc = {
            "seq": self._next("log"),
            "ts": self.clock(),
            "event": event,
            "task_id": task_id,
            "stage_id": stage_id,
            "worker_id": worker_id,
            "detail": detail,
        }
        self._log.append(doc)
        self._store.append_log(doc["seq"], doc)

    # -- configs -----------------------------------------------------------

    def put_config(self, config: PipelineConfig) -> ValidatedPipeline:
        """Register or replace a configuration; raises on an invalid DAG.

        Replacing a configuration that has tasks in flight makes those
        tasks follow the new definition, so replace only between runs.
        """
        vp = validate_pipeline(config)
        with self._cond:
            self._configs[config.config_name] = vp
            self._store.save_config(config.config_name, serde.config_to_doc(config))
            self._emit("config_registered", detail=config.config_name)
            return vp

    def get_config(self, name: str) -> PipelineConfig:
        with self._cond:
            try:
                return self._configs[name].config
            except KeyError:
                raise UnknownConfig(f"no configuration named {name!r}") from None

    def list_configs(self) -> list[PipelineConfig]:
        with self._cond:
            return [vp.config for _, vp in sorted(self._configs.items())]

    def stage_order(self, name: str) -> tuple[str, ...]:
        with self._cond:
            try:
                return self._configs[name].order
            except KeyError:
                raise UnknownConfig(f"no configuration named {name!r}") from None

    # -- workers -----------------------------------------------------------

    def register_worker(
        self, display_name: str, capabilities: Iterable[str]
    ) -> WorkerInfo:
        caps = tuple(capabilities)
        if not caps:
            raise HubError("worker must declare at least one capability")
        with self._cond:
            now = self.clock()
            worker_id = f"w{self._next('worker'):04d}"
            info = WorkerInfo(
                worker_id=worker_id,
                display_name=display_name,
                capabilities=caps,
                registered_ts=now,
                last_seen_ts=now,
            )
            self._workers[worker_id] = info
            self._persist_worker(info)
            self._emit("worker_registered", worker_id=worker_id, detail=display_name)
            return info

    def get_worker(self, worker_id: str) -> WorkerInfo:
        with self._cond:
            try:
                return self._workers[worker_id]
            except KeyError:
                raise UnknownWorker(f"no worker {worker_id!r}") from None

    def list_workers(self) -> list[WorkerInfo]:
        with self._cond:
            return [w for _, w in sorted(self._workers.items())]

    # -- turns -------------------------------------------------------------

    def submit_turn(
        self,
        config_name: str,
        track_id: str,
        source_blobs: dict[str, str] | None = None,
        metadata: dict[str, str] | None = None,
    ) -> TurnTask:
        """Accept a turn; ``client_capture_ts`` is stamped from the hub clock."""
        source_blobs = dict(source_blobs or {})
        metadata = dict(metadata or {})
        with self._cond:
            vp = self._configs.get(config_name)
            if vp is None:
                raise UnknownConfig(f"no configuration named {config_name!r}")
            for channel in sorted(
                c.value for c in vp.config.required_blob_channels()
            ):
                blob_hash = source_blobs.get(channel)
                if blob_hash is None:
                    raise MissingChannel(
                        f"configuration needs a {channel!r} source blob"
                    )
                if not self.blobs.has(blob_hash):
                    raise BlobNotFound(
                        f"{channel!r} blob {blob_hash} is not in the blob store"
                    )
            seq = self._next("task")
            task = TurnTask(
                task_id=f"t{seq:06d}",
                config_name=config_name,
                track_id=track_id,
                client_capture_ts=self.clock(),
                source_blobs=source_blobs,
                metadata=metadata,
                submission_seq=seq,
            )
            task.stage_records = new_stage_records(task.task_id, vp.config)
            self._tasks[task.task_id] = task
            self._task_order.append(task.task_id)
            self._persist_task(task)
            self._emit("task_submitted", task_id=task.task_id, detail=config_name)
            self._cond.notify_all()
            return task

    def get_task(self, task_id: str) -> TurnTask:
        with self._cond:
            return self._task(task_id)

    def _task(self, task_id: str) -> TurnTask:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise UnknownTask(f"no task {task_id!r}") from None

    def get_response(self, task_id: str) -> dict[str, Any]:
        """Current state of a turn; terminal output is present iff completed."""
        with self._cond:
            task = self._task(task_id)
            stages = {
                r.stage_id: {
                    "state": r.state.value,
                    "output_text": r.output_text,
                    "output_blob_hash": r.output_blob_hash,
                }
                for r in task.stage_records
            }
            out: dict[str, Any] = {
                "task_id": task.task_id,
                "config_name": task.config_name,
                "state": task.state.value,
                "failing_stage": task.failing_stage,
                "terminal_stage": None,
                "output_blob_hash": None,
                "output_text": None,
                "e2e_latency_ms": task.e2e_latency_ms(),
                "stages": stages,
            }
            vp = self._configs.get(task.config_name)
            if vp is not None:
                out["terminal_stage"] = vp.config.terminal_stage
                if task.state is TaskState.COMPLETED:
                    terminal = task.record(vp.config.terminal_stage)
                    out["output_blob_hash"] = terminal.output_blob_hash
                    out["output_text"] = terminal.output_text
            return out

    def list_tasks(
        self,
        config_name: str | None = None,
        track_id: str | None = None,
        state: TaskState | None = None,
        since_ts: int | None = None,
        until_ts: int | None = None,
    ) -> list[TurnTask]:
        """Tasks in submission order; time range is half-open over receipt."""
        with self._cond:
            out = []
            for task_id in self._task_order:
                task = self._tasks[task_id]
                if config_name is not None and task.config_name != config_name:
                    continue
                if track_id is not None and task.track_id != track_id:
                    continue
                if state is not None and task.state is not state:
                    continue
                if since_ts is not None and task.client_capture_ts < since_ts:
                    continue
                if until_ts is not None and task.client_capture_ts >= until_ts:
                    continue
                out.append(task)
            return out

    def query_records(
        self,
        config_name: str | None = None,
        track_id: str | None = None,
        state: TaskState | None = None,
        since_ts: int | None = None,
        until_ts: int | None = None,
    ) -> dict[str, Any]:
        """Consistent snapshot of matching tasks and their annotations.

        Returned objects are deep copies, so callers can aggregate at
        leisure while the hub keeps mutating its own records.
        """
        with self._cond:
            tasks = self.list_tasks(config_name, track_id, state, since_ts, until_ts)
            task_ids = {t.task_id for t in tasks}
            annotations = [
                a
                for _, a in sorted(self._annotations.items())
                if a.task_id in task_ids
            ]
            return {
                "tasks": [serde.task_from_doc(serde.task_to_doc(t)) for t in tasks],
                "annotations": [
                    serde.annotation_from_doc(serde.annotation_to_doc(a))
                    for a in annotations
                ],
            }

    # -- leases and claims ---------------------------------------------------

    def _lease_ms_for(self, spec: StageSpec) -> int:
        return self.lease_ms_by_kind.get(spec.kind.value, self.default_lease_ms)

    def _expire_due_leases(self, now: int) -> None:
        for key, lease in list(self._leases.items()):
            if lease.expiry_ts > now:
                continue
            del self._leases[key]
            task_id, stage_id = key
            task = self._tasks.get(task_id)
            if task is None:
                continue
            record = task.record(stage_id)
            if record.state is StageState.LEASED:
                record.state = StageState.READY
                record.hub_dispatch_ts = None
                record.lease_worker_id = None
                record.lease_expiry_ts = None
                self._persist_task(task)
                self._emit(
                    "lease_expired",
                    task_id=task_id,
                    stage_id=stage_id,
                    worker_id=lease.worker_id,
                )

    def _next_lease_expiry(self) -> int | None:
        if not self._leases:
            return None
        return min(l.expiry_ts for l in self._leases.values())

    def _find_claim(
        self, worker: WorkerInfo
    ) -> tuple[TurnTask, StageSpec, StageRecord] | None:
        for task_id in self._task_order:
            task = self._tasks[task_id]
            if task.state not in (TaskState.PENDING, TaskState.RUNNING):
                continue
            config = self._configs.get(task.config_name)
            if config is None:
                continue
            for stage_id in ready_stages(task, config.config):
                spec = config.config.stage(stage_id)
                if capability_matches(worker.capabilities, spec.kind.value, spec.binding):
                    return task, spec, task.record(stage_id)
        return None

    def _assemble_inputs(
        self, task: TurnTask, spec: StageSpec
    ) -> tuple[tuple[WorkInput, ...], list[str]]:
        inputs: list[WorkInput] = []
        blob_hashes: list[str] = []
        for binding in spec.inputs:
            if isinstance(binding, SourceInput):
                if binding.channel in BLOB_CHANNELS:
                    h = task.source_blobs[binding.channel.value]
                    inputs.append(
                        WorkInput(
                            ref=binding.channel.value,
                            channel=binding.channel.value,
                            blob_hash=h,
                        )
                    )
                    blob_hashes.append(h)
                else:
                    inputs.append(
                        WorkInput(
                            ref=binding.channel.value,
                            channel=binding.channel.value,
                            text=task.metadata.get("text", ""),
                        )
                    )
            else:
                upstream = task.record(binding.stage_id)
                channel = "text" if upstream.output_text is not None else "blob"
                if upstream.output_blob_hash is not None:
                    blob_hashes.append(upstream.output_blob_hash)
                inputs.append(
                    WorkInput(
                        ref=binding.stage_id,
                        channel=channel,
                        text=upstream.output_text,
                        blob_hash=upstream.output_blob_hash,
                    )
                )
        return tuple(inputs), blob_hashes

    def claim(self, worker_id: str, wait_ms: int = 0) -> ClaimedWork | None:
        """Claim the next ready stage this worker can run.

        Tasks are served in submission order; within a task, ready stages
        go in lexicographic order. Blocks up to ``wait_ms`` real
        milliseconds when nothing is claimable, waking as soon as work
        appears or a lease expires. Lease duration comes from the stage
        kind's configured value.
        """
        deadline = time.monotonic() + wait_ms / 1000.0
        with self._cond:
            worker = self._workers.get(worker_id)
            if worker is None:
                raise UnknownWorker(f"no worker {worker_id!r}")
            while True:
                now = self.clock()
                self._expire_due_leases(now)
                found = self._find_claim(worker)
                if found is not None:
                    task, spec, record = found
                    token = self._next("lease")
                    lease = Lease(
                        token=token,
                        worker_id=worker_id,
                        granted_ts=now,
                        expiry_ts=now + self._lease_ms_for(spec),
                        attempt=record.attempt,
                    )
                    self._leases[(task.task_id, spec.stage_id)] = lease
                    inputs, blob_hashes = self._assemble_inputs(task, spec)
                    record.state = StageState.LEASED
                    record.hub_dispatch_ts = now
                    record.input_blob_hashes = blob_hashes
                    record.lease_worker_id = worker_id
                    record.lease_expiry_ts = lease.expiry_ts
                    if task.state is TaskState.PENDING:
                        task.state = TaskState.RUNNING
                    worker.last_seen_ts = now
                    worker.claim_count += 1
                    self._persist_task(task)
                    self._persist_worker(worker)
                    self._emit(
                        "stage_claimed",
                        task_id=task.task_id,
                        stage_id=spec.stage_id,
                        worker_id=worker_id,
                        detail=f"attempt={record.attempt} token={token}",
                    )
                    return ClaimedWork(
                        task_id=task.task_id,
                        stage_id=spec.stage_id,
                        kind=spec.kind.value,
                        binding=spec.binding,
                        config_name=task.config_name,
                        track_id=task.track_id,
                        attempt=record.attempt,
                        lease_token=token,
                        lease_expires_ts=lease.expiry_ts,
                        inputs=inputs,
                        metadata=dict(task.metadata),
                        output_channel=(spec.resolved_output_channel() or OutputChannel.TEXT).value,
                    )
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                timeout = remaining
                next_expiry = self._next_lease_expiry()
                if next_expiry is not None:
                    until_expiry = max(0.001, (next_expiry - self.clock()) / 1000.0)
                    timeout = min(timeout, until_expiry)
                self._cond.wait(timeout)

    def _checked_lease(
        self, task_id: str, stage_id: str, worker_id: str, lease_token: int
    ) -> tuple[TurnTask, StageRecord]:
        task = self._task(task_id)
        try:
            record = task.record(stage_id)
        except KeyError:
            raise UnknownStage(f"task {task_id} has no stage {stage_id!r}") from None
        self._expire_due_leases(self.clock())
        lease = self._leases.get((task_id, stage_id))
        if lease is None:
            raise LeaseExpired(
                f"no live lease for {task_id}/{stage_id}; the stage was requeued "
                "or already resolved"
            )
        if lease.worker_id != worker_id:
            raise NotLeaseHolder(
                f"{task_id}/{stage_id} is leased to {lease.worker_id}, not {worker_id}"
            )
        if lease.token != lease_token:
            raise LeaseExpired(
                f"lease token {lease_token} for {task_id}/{stage_id} was superseded"
            )
        return task, record

    def _validate_output(
        self,
        spec: StageSpec,
        output_text: str | None,
        output_blob_hash: str | None,
    ) -> None:
        channel = spec.resolved_output_channel()
        if output_text is not None and len(output_text.encode()) > self.inline_limit:
            raise InvalidOutput(
                f"inline text exceeds {self.inline_limit} bytes; store it as a blob"
            )
        if output_blob_hash is not None and not self.blobs.has(output_blob_hash):
            raise InvalidOutput(f"output blob {output_blob_hash} is not in the store")
        if channel in (OutputChannel.AUDIO, OutputChannel.IMAGE):
            if output_blob_hash is None:
                raise InvalidOutput(
                    f"stage {spec.stage_id} emits {channel.value}; a blob is required"
                )
        else:
            if output_text is None and output_blob_hash is None:
                raise InvalidOutput(f"stage {spec.stage_id} produced no output")

    def complete_stage(
        self,
        task_id: str,
        stage_id: str,
        worker_id: str,
        lease_token: int,
        worker_duration_ms: int,
        output_text: str | None = None,
        output_blob_hash: str | None = None,
    ) -> StageRecord:
        """Accept a stage result; exactly one completion can ever succeed.

        A replay of the accepted call (same lease token) returns the
        record again without logging a second completion; anything else
        after acceptance is a dead lease.
        """
        if worker_duration_ms < 0:
            raise InvalidOutput("worker duration cannot be negative")
        with self._cond:
            task = self._task(task_id)
            key = (task_id, stage_id)
            if self._completion_tokens.get(key) == lease_token:
                return task.record(stage_id)
            task, record = self._checked_lease(task_id, stage_id, worker_id, lease_token)
            config = self._configs[task.config_name].config
            spec = config.stage(stage_id)
            self._validate_output(spec, output_text, output_blob_hash)

            now = self.clock()
            del self._leases[key]
            self._completion_tokens[key] = lease_token
            record.state = StageState.COMPLETED
            record.output_text = output_text
            record.output_blob_hash = output_blob_hash
            record.hub_complete_ts = now
            record.worker_reported_duration = worker_duration_ms
            record.last_error = None
            record.lease_worker_id = None
            record.lease_expiry_ts = None
            worker = self._workers.get(worker_id)
            if worker is not None:
                worker.last_seen_ts = now
                self._persist_worker(worker)
            self._emit(
                "stage_completed",
                task_id=task_id,
                stage_id=stage_id,
                worker_id=worker_id,
                detail=f"attempt={record.attempt} duration_ms={worker_duration_ms}",
            )
            if task.state is TaskState.RUNNING and all(
                r.state is StageState.COMPLETED for r in task.stage_records
            ):
                task.state = TaskState.COMPLETED
                task.completed_ts = now
                self._emit("task_completed", task_id=task_id)
            self._persist_task(task)
            self._cond.notify_all()
            return record

    def fail_stage(
        self,
        task_id: str,
        stage_id: str,
        worker_id: str,
        lease_token: int,
        error: str,
    ) -> StageRecord:
        """Record an explicit failure; the third failed attempt is permanent."""
        with self._cond:
            task, record = self._checked_lease(task_id, stage_id, worker_id, lease_token)
            now = self.clock()
            del self._leases[(task_id, stage_id)]
            record.last_error = error
            record.hub_dispatch_ts = None
            record.lease_worker_id = None
            record.lease_expiry_ts = None
            worker = self._workers.get(worker_id)
            if worker is not None:
                worker.last_seen_ts = now
                self._persist_worker(worker)
            if record.attempt >= self.max_attempts:
                record.state = StageState.FAILED
                task.state = TaskState.FAILED
                task.failing_stage = stage_id
                self._emit(
                    "stage_failed_permanent",
                    task_id=task_id,
                    stage_id=stage_id,
                    worker_id=worker_id,
                    detail=f"attempt={record.attempt}: {error}",
                )
                self._emit("task_failed", task_id=task_id, stage_id=stage_id)
            else:
                record.attempt += 1
                record.state = StageState.READY
                self._emit(
                    "stage_failed_attempt",
                    task_id=task_id,
                    stage_id=stage_id,
                    worker_id=worker_id,
                    detail=f"attempt={record.attempt - 1}: {error}",
                )
            self._persist_task(task)
            self._cond.notify_all()
            return record

    def expire_leases_now(self) -> None:
        """Force an expiry sweep; claims also do this on their own."""
        with self._cond:
            self._expire_due_leases(self.clock())
            self._cond.notify_all()

    # -- annotations ---------------------------------------------------------

    def annotate(
        self,
        task_id: str,
        annotator_id: str,
        overall_score: int,
        stage_scores: dict[str, int] | None = None,
        comment: str = "",
        reference_transcript: str | None = None,
    ) -> AnnotationRecord:
        """Attach a human judgment to a completed turn. Scores are 0..5."""
        stage_scores = dict(stage_scores or {})
        with self._cond:
            task = self._task(task_id)
            if task.state is not TaskState.COMPLETED:
                raise TaskNotCompleted(
                    f"task {task_id} is {task.state.value}; only completed turns "
                    "can be annotated"
                )
            if overall_score not in SCORE_RANGE:
                raise ScoreOutOfRange(f"overall_score {overall_score} outside 0..5")
            known = {r.stage_id for r in task.stage_records}
            for sid, score in stage_scores.items():
                if sid not in known:
                    raise UnknownStage(f"task has no stage {sid!r}")
                if score not in SCORE_RANGE:
                    raise ScoreOutOfRange(f"score {score} for {sid!r} outside 0..5")
            record = AnnotationRecord(
                annotation_id=f"a{self._next('annotation'):06d}",
                task_id=task_id,
                annotator_id=annotator_id,
                overall_score=overall_score,
                stage_scores=stage_scores,
                comment=comment,
                reference_transcript=reference_transcript,
                created_ts=self.clock(),
            )
            self._annotations[record.annotation_id] = record
            self._store.save_annotation(
                record.annotation_id, serde.annotation_to_doc(record)
            )
            self._emit(
                "annotation_added",
                task_id=task_id,
                detail=f"{record.annotation_id} score={overall_score}",
            )
            return record

    def list_annotations(self, task_id: str | None = None) -> list[AnnotationRecord]:
        with self._cond:
            out = [
                a
                for _, a in sorted(self._annotations.items())
                if task_id is None or a.task_id == task_id
            ]
            return out

    # -- introspection ---------------------------------------------------------

    def get_log(
        self, event: str | None = None, task_id: str | None = None
    ) -> list[dict[str, Any]]:
        with self._cond:
            return [
                dict(e)
                for e in self._log
                if (event is None or e["event"] == event)
                and (task_id is None or e["task_id"] == task_id)
            ]

    def counts(self) -> dict[str, int]:
        with self._cond:
            states = {s.value: 0 for s in TaskState}
            for task in self._tasks.values():
                states[task.state.value] += 1
            return {
                "configs": len(self._configs),
                "workers": len(self._workers),
                "tasks": len(self._tasks),
                "annotations": len(self._annotations),
                "live_leases": len(self._leases),
                **{f"tasks_{k}": v for k, v in states.items()},
            }
