"""Deterministic virtual-time driver for benchmark runs.

Runs a real hub against a virtual millisecond clock: turn submissions
and stage completions are heap events, workers are bookkeeping entries
that claim through the normal hub API, and stage "compute" advances the
clock by the profile-sampled delay instead of sleeping. Two runs with
the same configs, schedule, profiles, and seed therefore produce
identical records down to every timestamp, which is what report
determinism is measured against.

Claims happen the instant a stage becomes ready and a capable worker is
idle, so hub-side overhead is exactly zero and a turn's end-to-end time
equals its critical path through the sampled stage delays.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any

from .blobstore import BlobStore, MediaKind
from .domain import PipelineConfig
from .hub.core import ClaimedWork, Hub
from .workers import ProfileSet, sample_delay_ms, synthesize_output


class VirtualClock:
    """Monotone millisecond clock advanced only by the event loop."""

    def __init__(self, start_ms: int = 1_000_000_000_000):
        self.now_ms = start_ms

    def __call__(self) -> int:
        return self.now_ms

    def advance_to(self, ts: int) -> None:
        if ts < self.now_ms:
            raise ValueError(f"clock cannot go backwards: {ts} < {self.now_ms}")
        self.now_ms = ts


@dataclass
class _SimWorker:
    worker_id: str
    name: str
    busy: bool = False


@dataclass(order=True)
class _Event:
    ts: int
    seq: int
    action: Any = field(compare=False)


class Simulation:
    """Event loop owning a hub, a virtual clock, and synthetic workers."""

    def __init__(
        self,
        profiles: ProfileSet | None = None,
        seed: int = 0,
        start_ms: int = 1_000_000_000_000,
        store: BlobStore | None = None,
        hub: Hub | None = None,
    ):
        self.clock = VirtualClock(start_ms)
        self.hub = hub or Hub(store or BlobStore(), clock=self.clock)
        self.profiles = profiles or ProfileSet()
        self.seed = seed
        self._workers: list[_SimWorker] = []
        self._events: list[_Event] = []
        self._seq = 0

    # -- setup ------------------------------------------------------------

    def add_worker(self, name: str, capabilities: list[str]) -> str:
        worker_id = self.hub.register_worker(name, capabilities).worker_id
        self._workers.append(_SimWorker(worker_id, name))
        self._workers.sort(key=lambda w: w.name)
        return worker_id

    def add_workers_per_capability(self, kinds: list[str], count: int = 2) -> None:
        for kind in kinds:
            for i in range(count):
                self.add_worker(f"sim-{kind}-{i}", [kind])

    def put_config(self, config: PipelineConfig) -> None:
        self.hub.put_config(config)

    def put_blob(self, data: bytes, media_kind: MediaKind = MediaKind.OTHER) -> str:
        return self.hub.blobs.put(data, media_kind).hash

    # -- schedule -----------------------------------------------------------

    def submit_at(
        self,
        ts: int,
        config_name: str,
        track_id: str,
        source_blobs: dict[str, str],
        metadata: dict[str, str] | None = None,
    ) -> None:
        def action() -> None:
            self.hub.submit_turn(
                config_name,
                track_id=track_id,
                source_blobs=source_blobs,
                metadata=metadata,
            )

        self._push(ts, action)

    def _push(self, ts: int, action) -> None:
        if ts < self.clock.now_ms:
            raise ValueError(f"event in the past: {ts} < {self.clock.now_ms}")
        heapq.heappush(self._events, _Event(ts, self._seq, action))
        self._seq += 1

    # -- event loop ---------------------------------------------------------

    def run(self) -> None:
        """Drain every event; returns with all schedulable work finished."""
        self._pump()
        while self._events:
            event = heapq.heappop(self._events)
            self.clock.advance_to(event.ts)
            event.action()
            self._pump()

    def _pump(self) -> None:
        """Hand ready stages to idle workers until nothing more is claimable."""
        granted = True
        while granted:
            granted = False
            for worker in self._workers:
                if worker.busy:
                    continue
                work = self.hub.claim(worker.worker_id)
                if work is None:
                    continue
                worker.busy = True
                granted = True
                delay = sample_delay_ms(self.profiles, self.seed, work)
                self._push(
                    self.clock.now_ms + delay,
                    lambda w=worker, wk=work, d=delay: self._complete(w, wk, d),
                )

    def _complete(self, worker: _SimWorker, work: ClaimedWork, delay: int) -> None:
        text, payload = synthesize_output(work)
        blob_hash = None
        if payload is not None:
            blob_hash = self.hub.blobs.put(payload, MediaKind.AUDIO).hash
        self.hub.complete_stage(
            work.task_id,
            work.stage_id,
            worker.worker_id,
            work.lease_token,
            worker_duration_ms=delay,
            output_text=text,
            output_blob_hash=blob_hash,
        )
        worker.busy = False
