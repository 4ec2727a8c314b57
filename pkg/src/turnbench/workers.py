"""Synthetic stage workers with seeded latency profiles.

A synthetic worker claims stages from a hub, waits out a latency sample
drawn from the stage's profile, produces a deterministic mock output for
its kind, and reports the sampled delay as its compute duration. Every
random stream is derived from (seed, stream key), so two runs with the
same seeds sample identical delays regardless of thread interleaving or
which worker ends up executing a stage.

Mock outputs follow fixed per-kind rules: speech-to-text echoes the
turn's reference transcript from metadata, the LLM kinds fill a response
template, emotion emits a constant label, and the audio-emitting kinds
return one fixed pre-registered blob. Real model inference is exactly
what this module exists to avoid.

The worker loop talks to the hub through a small port interface, so the
same loop runs against an in-process hub or over HTTP.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol

from .domain import StageKind
from .hub.core import ClaimedWork, Hub, HubError, StaleLease, WorkInput

logger = logging.getLogger(__name__)

#: Log-space spread putting 95% of lognormal mass within +-30% of the median.
LOGNORMAL_SIGMA = math.log(1.3) / 1.96


def stream_rng(seed: int, key: str) -> random.Random:
    """Independent RNG stream derived from a run seed and a stream key."""
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class LatencyProfile:
    """Distribution of a stage's compute time in milliseconds.

    ``constant`` always yields the mean and ignores ``sigma``.
    ``gaussian`` draws from a normal with stddev ``sigma`` (in ms).
    ``lognormal`` treats ``sigma`` as the log-space spread and fixes its
    location so the distribution's mean is ``mean_ms``. All draws clamp
    to ``floor_ms`` and round to whole milliseconds.
    """

    distribution: str
    mean_ms: float
    sigma: float = 0.0
    seed: int = 0
    floor_ms: int = 0

    def __post_init__(self) -> None:
        if self.distribution not in ("constant", "gaussian", "lognormal"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.mean_ms < 0:
            raise ValueError("mean_ms cannot be negative")
        if self.sigma < 0:
            raise ValueError("sigma cannot be negative")
        if self.floor_ms < 0:
            raise ValueError("floor_ms cannot be negative")

    def sample(self, rng: random.Random) -> int:
        if self.distribution == "constant":
            value = self.mean_ms
        elif self.distribution == "gaussian":
            value = rng.gauss(self.mean_ms, self.sigma)
        else:
            # mean of lognormal(mu, sigma) is exp(mu + sigma^2 / 2)
            mu = math.log(max(self.mean_ms, 1e-9)) - self.sigma**2 / 2
            value = rng.lognormvariate(mu, self.sigma)
        return max(self.floor_ms, round(value))

    def to_json(self) -> dict:
        return {
            "distribution": self.distribution,
            "mean_ms": self.mean_ms,
            "sigma": self.sigma,
            "seed": self.seed,
            "floor_ms": self.floor_ms,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LatencyProfile":
        return cls(
            distribution=str(doc["distribution"]),
            mean_ms=float(doc["mean_ms"]),
            sigma=float(doc.get("sigma", 0.0)),
            seed=int(doc.get("seed", 0)),
            floor_ms=int(doc.get("floor_ms", 0)),
        )


def constant(mean_ms: float) -> LatencyProfile:
    return LatencyProfile(distribution="constant", mean_ms=mean_ms)


def gaussian(mean_ms: float, sigma: float, seed: int = 0) -> LatencyProfile:
    return LatencyProfile(distribution="gaussian", mean_ms=mean_ms, sigma=sigma, seed=seed)


def lognormal(
    mean_ms: float, sigma: float = LOGNORMAL_SIGMA, seed: int = 0
) -> LatencyProfile:
    return LatencyProfile(distribution="lognormal", mean_ms=mean_ms, sigma=sigma, seed=seed)


DEFAULT_PROFILE = constant(5)


class ProfileSet:
    """Stage profile lookup: exact (config, stage) first, then kind, then default."""

    def __init__(
        self,
        by_stage: dict[str, dict[str, LatencyProfile]] | None = None,
        by_kind: dict[str, LatencyProfile] | None = None,
        default: LatencyProfile = DEFAULT_PROFILE,
    ):
        self._by_stage = by_stage or {}
        self._by_kind = by_kind or {}
        self._default = default

    def profile_for(self, config_name: str, stage_id: str, kind: str) -> LatencyProfile:
        stage_map = self._by_stage.get(config_name, {})
        if stage_id in stage_map:
            return stage_map[stage_id]
        if kind in self._by_kind:
            return self._by_kind[kind]
        return self._default

    def to_json(self) -> dict:
        return {
            "by_stage": {
                cfg: {sid: p.to_json() for sid, p in stages.items()}
                for cfg, stages in self._by_stage.items()
            },
            "by_kind": {k: p.to_json() for k, p in self._by_kind.items()},
            "default": self._default.to_json(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ProfileSet":
        return cls(
            by_stage={
                cfg: {
                    sid: LatencyProfile.from_json(p) for sid, p in stages.items()
                }
                for cfg, stages in doc.get("by_stage", {}).items()
            },
            by_kind={
                k: LatencyProfile.from_json(p)
                for k, p in doc.get("by_kind", {}).items()
            },
            default=LatencyProfile.from_json(
                doc.get("default", DEFAULT_PROFILE.to_json())
            ),
        )


class HubPort(Protocol):
    """What a worker needs from a hub, local or remote."""

    def register_worker(self, display_name: str, capabilities: list[str]) -> str: ...

    def claim(self, worker_id: str, wait_ms: int = 0) -> ClaimedWork | None: ...

    def complete_stage(
        self,
        task_id: str,
        stage_id: str,
        worker_id: str,
        lease_token: int,
        worker_duration_ms: int,
        output_text: str | None = None,
        output_blob_hash: str | None = None,
    ) -> None: ...

    def fail_stage(
        self, task_id: str, stage_id: str, worker_id: str, lease_token: int, error: str
    ) -> None: ...

    def put_blob(self, data: bytes, media_kind: str = "other") -> str: ...

    def get_blob(self, blob_hash: str) -> bytes: ...


class LocalPort:
    """Direct in-process adapter over a hub and its blob store."""

    def __init__(self, hub: Hub):
        self._hub = hub

    def register_worker(self, display_name: str, capabilities: list[str]) -> str:
        return self._hub.register_worker(display_name, capabilities).worker_id

    def claim(self, worker_id, wait_ms=0):
        return self._hub.claim(worker_id, wait_ms=wait_ms)

    def complete_stage(self, task_id, stage_id, worker_id, lease_token,
                       worker_duration_ms, output_text=None, output_blob_hash=None):
        self._hub.complete_stage(
            task_id,
            stage_id,
            worker_id,
            lease_token,
            worker_duration_ms,
            output_text=output_text,
            output_blob_hash=output_blob_hash,
        )

    def fail_stage(self, task_id, stage_id, worker_id, lease_token, error):
        self._hub.fail_stage(task_id, stage_id, worker_id, lease_token, error)

    def put_blob(self, data: bytes, media_kind: str = "other") -> str:
        from .blobstore import MediaKind

        return self._hub.blobs.put(data, MediaKind(media_kind)).hash

    def get_blob(self, blob_hash: str) -> bytes:
        return self._hub.blobs.get(blob_hash)


ALL_KINDS = tuple(k.value for k in StageKind)

#: Output rule per stage kind; the rule must emit on the kind's channel.
OUTPUT_RULES: dict[str, str] = {
    StageKind.SPEECH2TEXT.value: "echo_metadata",
    StageKind.IMAGE2TEXT.value: "template",
    StageKind.EMOTION.value: "constant_label",
    StageKind.LLM.value: "template",
    StageKind.VISION_LLM.value: "template",
    StageKind.SAFEGUARD.value: "template",
    StageKind.TTS.value: "fixed_blob",
    StageKind.E2E_VOICE.value: "fixed_blob",
    StageKind.CUSTOM.value: "template",
}

_TEXT_RULES = ("echo_metadata", "template", "constant_label")


@dataclass(frozen=True)
class MockBehavior:
    """How a mock worker fabricates a stage output."""

    kind: str
    rule: str

    def __post_init__(self) -> None:
        if self.rule not in ("echo_metadata", "template", "fixed_blob", "constant_label"):
            raise ValueError(f"unknown output rule {self.rule!r}")
        audio_kind = self.kind in (StageKind.TTS.value, StageKind.E2E_VOICE.value)
        if audio_kind and self.rule in _TEXT_RULES:
            raise ValueError(f"{self.kind} emits audio; rule {self.rule!r} emits text")
        if not audio_kind and self.kind != StageKind.CUSTOM.value and self.rule == "fixed_blob":
            raise ValueError(f"{self.kind} emits text; rule 'fixed_blob' emits a blob")


CONSTANT_EMOTION_LABEL = "neutral"

#: The one audio blob every mock TTS/e2e-voice completion returns.
FIXED_AUDIO_BLOB = bytes(stream_rng(0, "fixed-audio-blob").randbytes(240))


def joined_input_text(inputs: Iterable[WorkInput]) -> str:
    parts = [w.text for w in inputs if w.text]
    return " ".join(parts)


def synthesize_output(work: ClaimedWork) -> tuple[str | None, bytes | None]:
    """(inline text, blob bytes) a mock stage produces for this claim.

    Pure function of the claim's kind, inputs, and metadata, so replays
    regenerate identical outputs and identical blob hashes.
    """
    rule = OUTPUT_RULES.get(work.kind, "template")
    if work.output_channel in ("audio", "image"):
        rule = "fixed_blob"
    if rule == "echo_metadata":
        spoken = work.metadata.get("reference_transcript") or work.metadata.get("text", "")
        return spoken or f"utterance {work.task_id}", None
    if rule == "constant_label":
        return CONSTANT_EMOTION_LABEL, None
    if rule == "fixed_blob":
        return None, FIXED_AUDIO_BLOB
    text_in = joined_input_text(work.inputs)
    if work.kind == StageKind.IMAGE2TEXT.value:
        return "a frame from the speaker's camera", None
    if work.kind == StageKind.SAFEGUARD.value:
        return text_in, None
    return f"response({work.kind}): {text_in}"[:512], None


@dataclass
class WorkerStats:
    claims: int = 0
    completions: int = 0
    failures: int = 0
    crashes: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "claims": self.claims,
            "completions": self.completions,
            "failures": self.failures,
            "crashes": self.crashes,
        }


class SyntheticWorker:
    """Claim/execute/complete loop around a hub port.

    ``time_scale`` multiplies the real sleep (0 disables sleeping without
    touching reported durations). ``crash_rate`` is the seeded probability
    of abandoning a claim without reporting anything, which models a
    worker process dying mid-stage; the hub's lease expiry is what
    recovers those. ``max_tasks`` stops the loop after that many claims.
    """

    def __init__(
        self,
        port: HubPort,
        name: str,
        capabilities: Iterable[str] = ALL_KINDS,
        profiles: ProfileSet | None = None,
        seed: int = 0,
        time_scale: float = 1.0,
        crash_rate: float = 0.0,
        max_tasks: int | None = None,
        poll_ms: int = 200,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.port = port
        self.name = name
        self.capabilities = list(capabilities)
        self.profiles = profiles or ProfileSet()
        self.seed = seed
        self.time_scale = time_scale
        self.crash_rate = crash_rate
        self.max_tasks = max_tasks
        self.poll_ms = poll_ms
        self.sleep = sleep
        self.stats = WorkerStats()
        self.worker_id: str | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._crash_rng = stream_rng(seed, f"crash:{name}")

    # -- lifecycle --------------------------------------------------------

    def start(self) -> "SyntheticWorker":
        self._thread = threading.Thread(target=self.run, name=self.name, daemon=True)
        self._thread.start()
        return self

    def stop(self, join_timeout: float = 10.0) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(join_timeout)

    @property
    def stopped(self) -> bool:
        return self._stop.is_set()

    # -- main loop ----------------------------------------------------------

    def run(self) -> WorkerStats:
        if self.worker_id is None:
            self.worker_id = self.port.register_worker(self.name, self.capabilities)
        while not self._stop.is_set():
            if self.max_tasks is not None and self.stats.claims >= self.max_tasks:
                break
            try:
                work = self.port.claim(self.worker_id, wait_ms=self.poll_ms)
            except HubError as err:
                logger.warning("%s: claim failed: %s", self.name, err)
                continue
            if work is None:
                if self.max_tasks is not None:
                    break
                continue
            self.stats.claims += 1
            if self.crash_rate and self._crash_rng.random() < self.crash_rate:
                # Simulated crash: say nothing, let the lease expire.
                self.stats.crashes += 1
                continue
            self.execute(work)
        return self.stats

    def execute(self, work: ClaimedWork) -> None:
        delay_ms = sample_delay_ms(self.profiles, self.seed, work)
        if self.time_scale > 0:
            self.sleep(delay_ms * self.time_scale / 1000.0)
        text, payload = synthesize_output(work)
        blob_hash = None
        try:
            if payload is not None:
                blob_hash = self.port.put_blob(payload, media_kind="audio")
            self.port.complete_stage(
                work.task_id,
                work.stage_id,
                self.worker_id or "",
                work.lease_token,
                worker_duration_ms=delay_ms,
                output_text=text,
                output_blob_hash=blob_hash,
            )
            self.stats.completions += 1
        except StaleLease:
            # Lease expired while we slept; someone else owns the stage now.
            logger.info("%s: stale lease for %s/%s", self.name, work.task_id, work.stage_id)
        except HubError as err:
            logger.warning("%s: completion rejected: %s", self.name, err)
            try:
                self.port.fail_stage(
                    work.task_id,
                    work.stage_id,
                    self.worker_id or "",
                    work.lease_token,
                    error=str(err),
                )
                self.stats.failures += 1
            except HubError:
                pass


def sample_delay_ms(profiles: ProfileSet, seed: int, work: ClaimedWork) -> int:
    """Latency sample for one stage execution.

    The stream key covers task, stage, and attempt, so the same seeds
    yield the same delay for the same execution no matter which worker
    runs it or in what order claims happen. The profile's own seed and
    the worker run seed both feed the stream.
    """
    profile = profiles.profile_for(work.config_name, work.stage_id, work.kind)
    key = (
        f"delay:{profile.seed}:{work.config_name}:{work.stage_id}"
        f":{work.task_id}:{work.attempt}"
    )
    return profile.sample(stream_rng(seed, key))


def run_worker_pool(
    make_port: Callable[[], HubPort],
    count: int,
    profiles: ProfileSet | None = None,
    seed: int = 0,
    capabilities: Iterable[str] = ALL_KINDS,
    name_prefix: str = "worker",
    time_scale: float = 1.0,
    crash_rate: float = 0.0,
    poll_ms: int = 200,
) -> list[SyntheticWorker]:
    """Start ``count`` workers; caller is responsible for stopping them."""
    workers = []
    for k in range(count):
        worker = SyntheticWorker(
            port=make_port(),
            name=f"{name_prefix}-{k}",
            capabilities=capabilities,
            profiles=profiles,
            seed=seed,
            time_scale=time_scale,
            crash_rate=crash_rate,
            poll_ms=poll_ms,
        )
        workers.append(worker.start())
    return workers
