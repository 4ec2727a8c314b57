"""HTTP client for the hub: the worker port and the replay client.

Transport failures (connection refused, resets, timeouts) are retried
with exponential backoff, base 100 ms capped at 5 s; the protocol is
at-least-once safe, so retrying any verb is sound — completions are
idempotent per lease token and duplicate claims just grant a lease that
lapses. Once the retry budget is spent the error surfaces as
``HubUnreachable``. HTTP-level errors are rebuilt into the same
exception types the in-process hub raises, so worker code cannot tell
the transports apart.
"""

from __future__ import annotations

import time
from typing import Any, Callable

import httpx

from .. import serde
from ..blobstore import (
    BlobStoreError,
    ChunkDigestMismatch,
    ChunkManifest,
    IntegrityViolation,
    IoFailure,
    ManifestConflict,
    StorageFull,
    UploadNotFound,
    iter_chunks,
    manifest_for,
)
from ..domain import PipelineValidationError
from ..replayer import HubUnreachable
from .api import DECLARED_HASH_HEADER, MEDIA_KIND_HEADER
from .core import (
    BlobNotFound,
    ClaimedWork,
    HubError,
    InvalidOutput,
    LeaseExpired,
    MissingChannel,
    NotLeaseHolder,
    ScoreOutOfRange,
    StaleLease,
    TaskNotCompleted,
    UnknownConfig,
    UnknownStage,
    UnknownTask,
    UnknownWorker,
)

BACKOFF_BASE_MS = 100
BACKOFF_CAP_MS = 5_000
DEFAULT_TRANSPORT_ATTEMPTS = 8

_ERROR_CLASSES: dict[str, type[Exception]] = {
    "unknown_config": UnknownConfig,
    "unknown_task": UnknownTask,
    "unknown_stage": UnknownStage,
    "unknown_worker": UnknownWorker,
    "stale_lease": StaleLease,
    "lease_expired": LeaseExpired,
    "not_lease_holder": NotLeaseHolder,
    "invalid_output": InvalidOutput,
    "missing_channel": MissingChannel,
    "blob_not_found": BlobNotFound,
    "score_out_of_range": ScoreOutOfRange,
    "task_not_completed": TaskNotCompleted,
    "hub_error": HubError,
    "upload_not_found": UploadNotFound,
    "manifest_conflict": ManifestConflict,
    "chunk_digest_mismatch": ChunkDigestMismatch,
    "integrity_violation": IntegrityViolation,
    "storage_full": StorageFull,
    "io_failure": IoFailure,
    "blob_error": BlobStoreError,
    "invalid_pipeline": PipelineValidationError,
}


def _raise_for(response: httpx.Response) -> None:
    if response.status_code < 400:
        return
    code, detail = "bad_request", response.text
    try:
        doc = response.json()
        code = doc.get("error", code)
        detail = doc.get("detail", detail)
    except ValueError:
        pass
    exc_class = _ERROR_CLASSES.get(code)
    if exc_class is not None:
        raise exc_class(detail)
    raise HubError(f"HTTP {response.status_code} ({code}): {detail}")


class HubClient:
    """One hub connection; usable as a worker port and a replay client."""

    def __init__(
        self,
        base_url: str,
        token: str | None = None,
        timeout: float = 60.0,
        transport_attempts: int = DEFAULT_TRANSPORT_ATTEMPTS,
        sleep: Callable[[float], None] = time.sleep,
    ):
        headers = {}
        if token:
            headers["authorization"] = f"Bearer {token}"
        self._http = httpx.Client(
            base_url=base_url, headers=headers, timeout=timeout
        )
        self._attempts = max(1, transport_attempts)
        self._sleep = sleep

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "HubClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _request(
        self, method: str, path: str, raise_for_status: bool = True, **kwargs
    ) -> httpx.Response:
        delay_ms = BACKOFF_BASE_MS
        for attempt in range(1, self._attempts + 1):
            try:
                response = self._http.request(method, path, **kwargs)
            except httpx.TransportError as exc:
                if attempt == self._attempts:
                    raise HubUnreachable(
                        f"{method} {path} failed after {attempt} attempts: {exc}"
                    ) from exc
                self._sleep(delay_ms / 1000.0)
                delay_ms = min(delay_ms * 2, BACKOFF_CAP_MS)
                continue
            if raise_for_status:
                _raise_for(response)
            return response
        raise AssertionError("unreachable")

    def _json(self, method: str, path: str, **kwargs) -> Any:
        return self._request(method, path, **kwargs).json()

    # -- worker port --------------------------------------------------------

    def register_worker(self, display_name: str, capabilities: list[str]) -> str:
        doc = self._json(
            "POST",
            "/workers/register",
            json={"display_name": display_name, "capabilities": list(capabilities)},
        )
        return doc["worker_id"]

    def claim(self, worker_id: str, wait_ms: int = 0) -> ClaimedWork | None:
        doc = self._json(
            "POST", f"/workers/{worker_id}/claim", json={"wait_ms": wait_ms}
        )
        work = doc.get("work")
        return serde.claim_from_doc(work) if work else None

    def complete_stage(
        self,
        task_id: str,
        stage_id: str,
        worker_id: str,
        lease_token: int,
        worker_duration_ms: int,
        output_text: str | None = None,
        output_blob_hash: str | None = None,
    ) -> None:
        self._json(
            "POST",
            f"/tasks/{task_id}/stages/{stage_id}/complete",
            json={
                "worker_id": worker_id,
                "lease_token": lease_token,
                "worker_duration_ms": worker_duration_ms,
                "output_text": output_text,
                "output_blob_hash": output_blob_hash,
            },
        )

    def fail_stage(
        self, task_id: str, stage_id: str, worker_id: str, lease_token: int, error: str
    ) -> None:
        self._json(
            "POST",
            f"/tasks/{task_id}/stages/{stage_id}/fail",
            json={
                "worker_id": worker_id,
                "lease_token": lease_token,
                "error": error,
            },
        )

    # -- blobs ----------------------------------------------------------------

    def put_blob(self, data: bytes, media_kind: str = "other") -> str:
        from ..blobstore import sha256_hex

        doc = self._json(
            "POST",
            "/blobs",
            content=data,
            headers={
                DECLARED_HASH_HEADER: sha256_hex(data),
                MEDIA_KIND_HEADER: media_kind,
            },
        )
        return doc["hash"]

    def get_blob(self, blob_hash: str) -> bytes:
        return self._request("GET", f"/blobs/{blob_hash}").content

    def has_blob(self, blob_hash: str) -> bool:
        # HEAD responses carry no body to rebuild an error from.
        response = self._request(
            "HEAD", f"/blobs/{blob_hash}", raise_for_status=False
        )
        return response.status_code == 200

    def begin_upload(
        self, manifest: ChunkManifest, media_kind: str = "other"
    ) -> list[int]:
        doc = manifest.to_json()
        doc["media_kind"] = media_kind
        return self._json("POST", "/blobs/manifest", json=doc)["missing"]

    def put_chunk(self, blob_hash: str, index: int, data: bytes) -> list[int]:
        return self._json(
            "PUT", f"/blobs/{blob_hash}/chunks/{index}", content=data
        )["missing"]

    def missing_chunks(self, blob_hash: str) -> list[int]:
        return self._json("GET", f"/blobs/{blob_hash}/missing")["missing"]

    def upload_chunked(
        self, data: bytes, chunk_size: int | None = None, media_kind: str = "other"
    ) -> str:
        """Manifest-then-chunks upload; resumes whatever is already there."""
        manifest = (
            manifest_for(data, chunk_size) if chunk_size else manifest_for(data)
        )
        missing = self.begin_upload(manifest, media_kind)
        chunks = dict(iter_chunks(data, manifest.chunk_size))
        while missing:
            for index in missing:
                missing = self.put_chunk(manifest.blob_hash, index, chunks[index])
        return manifest.blob_hash

    # -- replay client ----------------------------------------------------------

    def get_config_doc(self, name: str) -> dict[str, Any]:
        return self._json("GET", f"/configs/{name}")

    def submit_turn(
        self,
        config_name: str,
        track_id: str,
        source_blobs: dict[str, str],
        metadata: dict[str, str],
    ) -> str:
        doc = self._json(
            "POST",
            "/turns",
            json={
                "config_name": config_name,
                "track_id": track_id,
                "source_blobs": source_blobs,
                "metadata": metadata,
            },
        )
        return doc["task_id"]

    def get_response(self, task_id: str) -> dict[str, Any]:
        return self._json("GET", f"/turns/{task_id}/response")

    # -- queries and admin -------------------------------------------------------

    def get_task_doc(self, task_id: str) -> dict[str, Any]:
        return self._json("GET", f"/turns/{task_id}")

    def put_config_doc(self, doc: dict[str, Any]) -> dict[str, Any]:
        return self._json("PUT", f"/configs/{doc['config_name']}", json=doc)

    def list_config_docs(self) -> list[dict[str, Any]]:
        return self._json("GET", "/configs")["configs"]

    def annotate(
        self,
        task_id: str,
        annotator_id: str,
        overall_score: int,
        stage_scores: dict[str, int] | None = None,
        comment: str = "",
        reference_transcript: str | None = None,
    ) -> dict[str, Any]:
        return self._json(
            "POST",
            "/annotations",
            json={
                "task_id": task_id,
                "annotator_id": annotator_id,
                "overall_score": overall_score,
                "stage_scores": stage_scores or {},
                "comment": comment,
                "reference_transcript": reference_transcript,
            },
        )

    def query_records(self, **filters) -> dict[str, Any]:
        params = {k: v for k, v in filters.items() if v is not None}
        return self._json("GET", "/records", params=params)

    def counts(self) -> dict[str, int]:
        return self._json("GET", "/counts")

    def report_bytes(self, config_name: str, format: str = "json", **filters) -> bytes:
        params = {"format": format}
        params.update({k: v for k, v in filters.items() if v is not None})
        return self._request(
            "GET", f"/reports/{config_name}", params=params
        ).content

    def comparison_bytes(
        self, configs: list[str] | None = None, format: str = "json", **filters
    ) -> bytes:
        params: dict[str, Any] = {"format": format}
        if configs:
            params["configs"] = ",".join(configs)
        params.update({k: v for k, v in filters.items() if v is not None})
        return self._request("GET", "/reports/compare", params=params).content
