"""Reference worker speaking the hub's REST worker protocol.

One adapter process serves one stage kind with one model hook. The loop
is deliberately synchronous: register, claim, fetch inputs, invoke the
hook under a monotonic timer, upload the output, complete. Everything
here is standard library so a real model integration starts from zero
dependencies.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

# Stage kinds the hub schedules. The hub is the authority; this list only
# catches typos before a claim loop spins on an impossible capability.
KNOWN_KINDS = (
    "speech2text",
    "image2text",
    "emotion",
    "llm",
    "vision_llm",
    "tts",
    "e2e_voice",
    "safeguard",
    "custom",
)

HUB_ENV = "TURNBENCH_HUB"
TOKEN_ENV = "TURNBENCH_TOKEN"

DECLARED_HASH_HEADER = "x-blob-hash"
MEDIA_KIND_HEADER = "x-media-kind"


class AdapterError(Exception):
    pass


class HubHttpError(AdapterError):
    """Non-2xx hub response, carrying the hub's error code when present."""

    def __init__(self, status: int, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.status = status
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class StageInput:
    """What the model hook receives for one claimed stage."""

    kind: str
    stage_id: str
    output_channel: str
    texts: tuple[str, ...]
    blobs: tuple[bytes, ...]
    metadata: Mapping[str, str]


@dataclass(frozen=True)
class StageOutput:
    """What the model hook returns: inline text or raw bytes, not both."""

    text: str | None = None
    data: bytes | None = None

    def __post_init__(self) -> None:
        if (self.text is None) == (self.data is None):
            raise AdapterError("hook must return exactly one of text or data")


ModelHook = Callable[[StageInput], StageOutput]


@dataclass(frozen=True)
class AdapterConfig:
    hub_url: str
    capability: str
    token: str | None = None
    name: str = "adapter"
    claim_wait_ms: int = 2_000
    media_kind: str = "audio"

    def __post_init__(self) -> None:
        if self.capability not in KNOWN_KINDS:
            raise AdapterError(
                f"unknown capability {self.capability!r}; one of {KNOWN_KINDS}"
            )

    @classmethod
    def from_file(cls, path: str) -> "AdapterConfig":
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
        unknown = set(doc) - {
            "hub_url",
            "capability",
            "token",
            "name",
            "claim_wait_ms",
            "media_kind",
        }
        if unknown:
            raise AdapterError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def with_env(self, env: Mapping[str, str] | None = None) -> "AdapterConfig":
        """Environment beats the file for deploy-time fields."""
        env = os.environ if env is None else env
        updates = {}
        if env.get(HUB_ENV):
            updates["hub_url"] = env[HUB_ENV]
        if env.get(TOKEN_ENV):
            updates["token"] = env[TOKEN_ENV]
        return replace(self, **updates) if updates else self


class HubConnection:
    """Minimal urllib client for the worker-facing endpoints."""

    def __init__(self, base_url: str, token: str | None = None, timeout_s: float = 35.0):
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout_s = timeout_s

    def _request(
        self,
        method: str,
        path: str,
        body: bytes | None = None,
        headers: Mapping[str, str] | None = None,
    ) -> tuple[int, bytes, Mapping[str, str]]:
        request = urllib.request.Request(
            self.base_url + path, data=body, method=method
        )
        if self.token:
            request.add_header("Authorization", f"Bearer {self.token}")
        for key, value in (headers or {}).items():
            request.add_header(key, value)
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_s) as response:
                return response.status, response.read(), dict(response.headers)
        except urllib.error.HTTPError as exc:
            payload = exc.read()
            try:
                doc = json.loads(payload)
            except ValueError:
                doc = {}
            raise HubHttpError(
                exc.code,
                str(doc.get("error", "http_error")),
                str(doc.get("detail", payload[:200])),
            ) from None

    def _json(self, method: str, path: str, doc: dict | None = None) -> dict:
        body = None if doc is None else json.dumps(doc).encode()
        headers = {} if doc is None else {"Content-Type": "application/json"}
        _, payload, _ = self._request(method, path, body, headers)
        return json.loads(payload)

    def register(self, display_name: str, capabilities: list[str]) -> str:
        doc = self._json(
            "POST",
            "/workers/register",
            {"display_name": display_name, "capabilities": capabilities},
        )
        return doc["worker_id"]

    def claim(self, worker_id: str, wait_ms: int) -> dict | None:
        doc = self._json("POST", f"/workers/{worker_id}/claim", {"wait_ms": wait_ms})
        return doc["work"]

    def complete(
        self,
        task_id: str,
        stage_id: str,
        worker_id: str,
        lease_token: int,
        duration_ms: int,
        output_text: str | None,
        output_blob_hash: str | None,
    ) -> None:
        self._json(
            "POST",
            f"/tasks/{task_id}/stages/{stage_id}/complete",
            {
                "worker_id": worker_id,
                "lease_token": lease_token,
                "worker_duration_ms": duration_ms,
                "output_text": output_text,
                "output_blob_hash": output_blob_hash,
            },
        )

    def fail(
        self, task_id: str, stage_id: str, worker_id: str, lease_token: int, error: str
    ) -> None:
        self._json(
            "POST",
            f"/tasks/{task_id}/stages/{stage_id}/fail",
            {"worker_id": worker_id, "lease_token": lease_token, "error": error},
        )

    def get_blob(self, blob_hash: str) -> bytes:
        _, payload, _ = self._request("GET", f"/blobs/{blob_hash}")
        return payload

    def put_blob(self, data: bytes, media_kind: str) -> str:
        _, payload, _ = self._request(
            "POST",
            "/blobs",
            data,
            {
                "Content-Type": "application/octet-stream",
                DECLARED_HASH_HEADER: hashlib.sha256(data).hexdigest(),
                MEDIA_KIND_HEADER: media_kind,
            },
        )
        return json.loads(payload)["hash"]


def echo_model(stage: StageInput) -> StageOutput:
    """Dependency-free stand-in: echo what the stage received.

    Speech-to-text echoes the reference transcript from the turn metadata
    (the bundled datasets carry one), text stages echo their input text,
    and audio/image stages return a small fixed payload.
    """
    if stage.output_channel in ("audio", "image"):
        return StageOutput(data=b"ADAPTER-AUDIO\x00" + stage.kind.encode())
    if stage.kind == "speech2text":
        spoken = stage.metadata.get("reference_transcript", "")
        return StageOutput(text=spoken or f"utterance for {stage.stage_id}")
    joined = " ".join(t for t in stage.texts if t)
    return StageOutput(text=f"echo({stage.kind}): {joined}"[:512])


@dataclass
class AdapterStats:
    claims: int = 0
    completions: int = 0
    failures: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "claims": self.claims,
            "completions": self.completions,
            "failures": self.failures,
        }


@dataclass
class Adapter:
    """Single-threaded claim loop around one model hook."""

    config: AdapterConfig
    hook: ModelHook = echo_model
    stats: AdapterStats = field(default_factory=AdapterStats)

    def __post_init__(self) -> None:
        self._hub = HubConnection(self.config.hub_url, self.config.token)
        self._worker_id: str | None = None
        self._stop = False

    def stop(self) -> None:
        self._stop = True

    def run(self, max_turns: int | None = None) -> AdapterStats:
        """Serve until stopped; with max_turns, exit once that many stages
        completed or the backlog drains."""
        self._worker_id = self._hub.register(
            self.config.name, [self.config.capability]
        )
        while not self._stop:
            if max_turns is not None and self.stats.completions >= max_turns:
                break
            work = self._hub.claim(self._worker_id, self.config.claim_wait_ms)
            if work is None:
                if max_turns is not None:
                    break
                continue
            self.stats.claims += 1
            self._serve_one(work)
        return self.stats

    def _serve_one(self, work: dict) -> None:
        task_id = work["task_id"]
        stage_id = work["stage_id"]
        lease_token = work["lease_token"]
        try:
            stage = self._stage_input(work)
            started = time.monotonic()
            output = self.hook(stage)
            duration_ms = round((time.monotonic() - started) * 1000)
            blob_hash = None
            if output.data is not None:
                blob_hash = self._hub.put_blob(output.data, self.config.media_kind)
            self._hub.complete(
                task_id,
                stage_id,
                self._worker_id,
                lease_token,
                duration_ms,
                output.text,
                blob_hash,
            )
            self.stats.completions += 1
        except HubHttpError as exc:
            # The hub already decided (stale lease, duplicate, ...); nothing
            # to report back.
            self.stats.failures += 1
            if exc.code not in ("stale_lease", "lease_expired"):
                raise
        except Exception as exc:  # model hook failures are the hub's to retry
            self.stats.failures += 1
            self._hub.fail(task_id, stage_id, self._worker_id, lease_token, repr(exc))

    def _stage_input(self, work: dict) -> StageInput:
        texts = []
        blobs = []
        for item in work.get("inputs", []):
            if item.get("text") is not None:
                texts.append(item["text"])
            elif item.get("blob_hash"):
                blobs.append(self._hub.get_blob(item["blob_hash"]))
        return StageInput(
            kind=work["kind"],
            stage_id=work["stage_id"],
            output_channel=work["output_channel"],
            texts=tuple(texts),
            blobs=tuple(blobs),
            metadata=dict(work.get("metadata", {})),
        )
