"""HTTP surface of the hub: turns, workers, blobs, annotations, reports.

Every body is a JSON document with a declared schema; unknown fields are
rejected. Blob content travels as raw bytes with the declared hash in a
header. Errors map to one JSON shape, ``{"error": code, "detail": msg}``,
with the code taken from the underlying exception so clients can rebuild
the exact failure.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .. import reportgen, serde
from ..blobstore import (
    BlobStoreError,
    ChunkDigestMismatch,
    ChunkManifest,
    IntegrityViolation,
    IoFailure,
    ManifestConflict,
    MediaKind,
    NotFound,
    StorageFull,
    UploadNotFound,
    sha256_hex,
)
from ..domain import PipelineValidationError, TaskState
from .core import Hub, HubError, StaleLease

#: Upper bound on long-poll claim waits, to keep requests short-lived.
MAX_CLAIM_WAIT_MS = 30_000

DECLARED_HASH_HEADER = "x-blob-hash"
MEDIA_KIND_HEADER = "x-media-kind"

#: Paths reachable without the bearer token: static UI and liveness.
PUBLIC_PREFIXES = ("/ui", "/healthz")

_FALLBACK_UI = """<!doctype html>
<html><head><title>turnbench hub</title></head>
<body>
<h1>turnbench hub</h1>
<p>The hub API is running. No dashboard assets are installed; start the
hub with <code>--ui-dir</code> pointing at a built dashboard to serve
one here.</p>
</body></html>
"""


def _status_for(exc: Exception) -> int:
    if isinstance(exc, (UploadNotFound, NotFound)):
        return 404
    if isinstance(exc, (ManifestConflict,)):
        return 409
    if isinstance(exc, StorageFull):
        return 507
    if isinstance(exc, (IntegrityViolation, IoFailure)):
        return 500
    if isinstance(exc, (ChunkDigestMismatch, BlobStoreError)):
        return 400
    if isinstance(exc, StaleLease):
        return 409
    if isinstance(exc, HubError):
        return {
            "unknown_config": 404,
            "unknown_task": 404,
            "unknown_worker": 404,
            "unknown_stage": 404,
            "blob_not_found": 404,
            "task_not_completed": 409,
        }.get(exc.code, 400)
    if isinstance(exc, reportgen.NoMatchingTurns):
        return 404
    if isinstance(exc, (reportgen.ReportError, PipelineValidationError, ValueError)):
        return 400
    return 500


def _error_code(exc: Exception) -> str:
    if isinstance(exc, HubError):
        return exc.code
    return {
        "NotFound": "blob_not_found",
        "UploadNotFound": "upload_not_found",
        "ManifestConflict": "manifest_conflict",
        "ChunkDigestMismatch": "chunk_digest_mismatch",
        "IntegrityViolation": "integrity_violation",
        "StorageFull": "storage_full",
        "IoFailure": "io_failure",
        "BlobStoreError": "blob_error",
        "PipelineValidationError": "invalid_pipeline",
        "NoMatchingTurns": "no_matching_turns",
        "InsufficientReports": "insufficient_reports",
        "ReportError": "report_error",
    }.get(type(exc).__name__, "bad_request")


def _error_response(exc: Exception) -> JSONResponse:
    return JSONResponse(
        status_code=_status_for(exc),
        content={"error": _error_code(exc), "detail": str(exc)},
    )


# -- request bodies ----------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SubmitTurnBody(_Strict):
    config_name: str
    track_id: str = ""
    source_blobs: dict[str, str] = Field(default_factory=dict)
    metadata: dict[str, str] = Field(default_factory=dict)


class RegisterWorkerBody(_Strict):
    display_name: str
    capabilities: list[str]


class ClaimBody(_Strict):
    wait_ms: int = 0


class CompleteBody(_Strict):
    worker_id: str
    lease_token: int
    worker_duration_ms: int
    output_text: str | None = None
    output_blob_hash: str | None = None


class FailBody(_Strict):
    worker_id: str
    lease_token: int
    error: str


class AnnotationBody(_Strict):
    task_id: str
    annotator_id: str
    overall_score: int
    stage_scores: dict[str, int] = Field(default_factory=dict)
    comment: str = ""
    reference_transcript: str | None = None


class InputDoc(_Strict):
    source: str | None = None
    stage: str | None = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "InputDoc":
        if (self.source is None) == (self.stage is None):
            raise ValueError("input binding needs exactly one of 'source'/'stage'")
        return self


class StageDoc(_Strict):
    stage_id: str
    kind: str
    inputs: list[InputDoc] = Field(default_factory=list)
    output_channel: str | None = None
    enabled: bool = True
    binding: str = "mock"


class ConfigDoc(_Strict):
    config_name: str
    stages: list[StageDoc]
    terminal_stage: str


class ManifestBody(_Strict):
    blob_hash: str
    total_size: int
    chunk_size: int
    chunk_digests: list[str]
    media_kind: str = "other"


def _worker_to_doc(info) -> dict[str, Any]:
    return {
        "worker_id": info.worker_id,
        "display_name": info.display_name,
        "capabilities": list(info.capabilities),
        "registered_ts": info.registered_ts,
        "last_seen_ts": info.last_seen_ts,
        "claim_count": info.claim_count,
    }


def create_app(
    hub: Hub,
    token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """The hub's HTTP application over an existing ``Hub`` instance."""
    app = FastAPI(title="turnbench hub", docs_url=None, redoc_url=None)

    @app.middleware("http")
    async def _require_token(request: Request, call_next):
        path = request.url.path
        public = path == "/" or any(path.startswith(p) for p in PUBLIC_PREFIXES)
        if token and not public:
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse(
                    status_code=401,
                    content={"error": "unauthorized", "detail": "bearer token required"},
                )
        return await call_next(request)

    @app.exception_handler(HubError)
    @app.exception_handler(BlobStoreError)
    @app.exception_handler(reportgen.ReportError)
    @app.exception_handler(PipelineValidationError)
    @app.exception_handler(ValueError)
    async def _domain_error(request: Request, exc: Exception):
        return _error_response(exc)

    @app.exception_handler(RequestValidationError)
    async def _body_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={"error": "invalid_body", "detail": str(exc.errors()[:3])},
        )

    @app.get("/healthz")
    def healthz() -> dict[str, Any]:
        return {"ok": True}

    # -- turns ---------------------------------------------------------

    @app.post("/turns")
    def submit_turn(body: SubmitTurnBody) -> dict[str, Any]:
        task = hub.submit_turn(
            body.config_name,
            track_id=body.track_id,
            source_blobs=body.source_blobs,
            metadata=body.metadata,
        )
        return serde.task_to_doc(task)

    @app.get("/turns/{task_id}")
    def get_turn(task_id: str) -> dict[str, Any]:
        return serde.task_to_doc(hub.get_task(task_id))

    @app.get("/turns/{task_id}/response")
    def get_response(task_id: str) -> dict[str, Any]:
        return hub.get_response(task_id)

    # -- workers -------------------------------------------------------

    @app.post("/workers/register")
    def register_worker(body: RegisterWorkerBody) -> dict[str, Any]:
        return _worker_to_doc(hub.register_worker(body.display_name, body.capabilities))

    @app.post("/workers/{worker_id}/claim")
    def claim(worker_id: str, body: ClaimBody) -> dict[str, Any]:
        wait_ms = min(max(body.wait_ms, 0), MAX_CLAIM_WAIT_MS)
        work = hub.claim(worker_id, wait_ms=wait_ms)
        return {"work": serde.claim_to_doc(work) if work else None}

    @app.post("/tasks/{task_id}/stages/{stage_id}/complete")
    def complete_stage(task_id: str, stage_id: str, body: CompleteBody) -> dict[str, Any]:
        record = hub.complete_stage(
            task_id,
            stage_id,
            body.worker_id,
            body.lease_token,
            worker_duration_ms=body.worker_duration_ms,
            output_text=body.output_text,
            output_blob_hash=body.output_blob_hash,
        )
        return {"ok": True, "record": serde.record_to_doc(record)}

    @app.post("/tasks/{task_id}/stages/{stage_id}/fail")
    def fail_stage(task_id: str, stage_id: str, body: FailBody) -> dict[str, Any]:
        hub.fail_stage(task_id, stage_id, body.worker_id, body.lease_token, body.error)
        return {"ok": True}

    # -- annotations and queries ----------------------------------------

    @app.post("/annotations")
    def annotate(body: AnnotationBody) -> dict[str, Any]:
        record = hub.annotate(
            body.task_id,
            body.annotator_id,
            body.overall_score,
            stage_scores=body.stage_scores,
            comment=body.comment,
            reference_transcript=body.reference_transcript,
        )
        return serde.annotation_to_doc(record)

    @app.get("/records")
    def records(
        config_name: str | None = None,
        track_id: str | None = None,
        state: str | None = None,
        since_ts: int | None = None,
        until_ts: int | None = None,
    ) -> dict[str, Any]:
        snapshot = hub.query_records(
            config_name=config_name,
            track_id=track_id,
            state=TaskState(state) if state else None,
            since_ts=since_ts,
            until_ts=until_ts,
        )
        return {
            "tasks": [serde.task_to_doc(t) for t in snapshot["tasks"]],
            "annotations": [
                serde.annotation_to_doc(a) for a in snapshot["annotations"]
            ],
        }

    @app.get("/counts")
    def counts() -> dict[str, int]:
        return hub.counts()

    # -- configs ---------------------------------------------------------

    @app.get("/configs")
    def list_configs() -> dict[str, Any]:
        return {"configs": [serde.config_to_doc(c) for c in hub.list_configs()]}

    @app.get("/configs/{name}")
    def get_config(name: str) -> dict[str, Any]:
        return serde.config_to_doc(hub.get_config(name))

    @app.put("/configs/{name}")
    def put_config(name: str, body: ConfigDoc) -> dict[str, Any]:
        if body.config_name != name:
            raise HubError(
                f"path names config {name!r} but body says {body.config_name!r}"
            )
        config = serde.config_from_doc(body.model_dump(exclude_none=True))
        hub.put_config(config)
        return serde.config_to_doc(hub.get_config(name))

    # -- blobs -----------------------------------------------------------

    @app.post("/blobs")
    async def put_blob(request: Request) -> dict[str, Any]:
        data = await request.body()
        declared = request.headers.get(DECLARED_HASH_HEADER)
        if declared is not None and declared != sha256_hex(data):
            raise ChunkDigestMismatch(
                f"body hashes to {sha256_hex(data)}, header declared {declared}"
            )
        kind = MediaKind(request.headers.get(MEDIA_KIND_HEADER, "other"))
        ref = hub.blobs.put(data, kind)
        return {
            "hash": ref.hash,
            "size_bytes": ref.size_bytes,
            "media_kind": ref.media_kind.value,
        }

    @app.get("/blobs/{blob_hash}")
    def get_blob(blob_hash: str) -> Response:
        data = hub.blobs.get(blob_hash)
        ref = hub.blobs.ref(blob_hash)
        return Response(
            content=data,
            media_type="application/octet-stream",
            headers={MEDIA_KIND_HEADER: ref.media_kind.value},
        )

    @app.head("/blobs/{blob_hash}")
    def has_blob(blob_hash: str) -> Response:
        if not hub.blobs.has(blob_hash):
            raise NotFound(f"no blob {blob_hash}")
        return Response(status_code=200)

    @app.post("/blobs/manifest")
    def begin_upload(body: ManifestBody) -> dict[str, Any]:
        manifest = ChunkManifest(
            blob_hash=body.blob_hash,
            total_size=body.total_size,
            chunk_size=body.chunk_size,
            chunk_digests=tuple(body.chunk_digests),
        )
        missing = hub.blobs.begin_upload(manifest, MediaKind(body.media_kind))
        return {"missing": missing}

    @app.put("/blobs/{blob_hash}/chunks/{index}")
    async def put_chunk(blob_hash: str, index: int, request: Request) -> dict[str, Any]:
        data = await request.body()
        return {"missing": hub.blobs.put_chunk(blob_hash, index, data)}

    @app.get("/blobs/{blob_hash}/missing")
    def missing_chunks(blob_hash: str) -> dict[str, Any]:
        return {"missing": hub.blobs.missing_chunks(blob_hash)}

    # -- reports ----------------------------------------------------------

    def _report_filters(track_id, since_ts, until_ts) -> dict[str, Any]:
        return {"track_id": track_id, "since_ts": since_ts, "until_ts": until_ts}

    @app.get("/reports/compare")
    def compare_report(
        configs: str | None = None,
        format: str = Query("json", pattern="^(json|csv)$"),
        track_id: str | None = None,
        since_ts: int | None = None,
        until_ts: int | None = None,
    ) -> Response:
        snapshot = reportgen.hub_snapshot(hub)
        if configs:
            names = [n for n in configs.split(",") if n]
        else:
            names = [
                c.config_name
                for c in hub.list_configs()
                if any(
                    t.state is TaskState.COMPLETED
                    for t in snapshot["tasks"]
                    if t.config_name == c.config_name
                )
            ]
        reports = [
            reportgen.build_report(
                snapshot, name, **_report_filters(track_id, since_ts, until_ts)
            )
            for name in names
        ]
        table = reportgen.compare_configs(reports)
        payload = reportgen.export_comparison(table, format)
        media = "application/json" if format == "json" else "text/csv"
        return Response(content=payload, media_type=media)

    @app.get("/reports/{config_name}")
    def report(
        config_name: str,
        format: str = Query("json", pattern="^(json|csv)$"),
        track_id: str | None = None,
        since_ts: int | None = None,
        until_ts: int | None = None,
    ) -> Response:
        hub.get_config(config_name)  # unknown names 404 here, not as report errors
        snapshot = reportgen.hub_snapshot(hub, config_name=config_name)
        built = reportgen.build_report(
            snapshot, config_name, **_report_filters(track_id, since_ts, until_ts)
        )
        payload = reportgen.export_report(built, format)
        media = "application/json" if format == "json" else "text/csv"
        return Response(content=payload, media_type=media)

    # -- static UI --------------------------------------------------------

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/ui")
        def ui_placeholder() -> HTMLResponse:
            return HTMLResponse(_FALLBACK_UI)

    @app.get("/")
    def root() -> Response:
        return Response(status_code=307, headers={"location": "/ui"})

    return app
