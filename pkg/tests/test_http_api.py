"""HTTP layer tests: endpoints, auth, error mapping, and wire conformance."""

import threading
import time

import pytest

from tests.conformance import (
    CONFORMANCE_CONFIG,
    conformance_config_doc,
    run_worker_conformance,
)
from turnbench import reportgen
from turnbench.blobstore import (
    BlobStore,
    ChunkDigestMismatch,
    ChunkManifest,
    ManifestConflict,
    manifest_for,
    sha256_hex,
)
from turnbench.hub.client import HubClient
from turnbench.hub.core import (
    BlobNotFound,
    Hub,
    ScoreOutOfRange,
    StaleLease,
    UnknownConfig,
    UnknownWorker,
)
from turnbench.hub.server import HubServer, run_server
from turnbench.presets import builtin_profile_set, install_presets
from turnbench.replayer import HubUnreachable
from turnbench.serde import config_to_doc
from turnbench.workers import SyntheticWorker


@pytest.fixture()
def served():
    hub = Hub(BlobStore())
    server = HubServer(hub, port=0).start()
    client = HubClient(server.url, transport_attempts=2)
    try:
        yield hub, server.url, client
    finally:
        client.close()
        server.stop()


def synthetic_workers(url: str, count: int = 2, **kwargs):
    # Full-scale sleeps: reported durations must not exceed real elapsed
    # time or report building rejects the records as inconsistent.
    def start():
        workers = [
            SyntheticWorker(
                HubClient(url),
                name=f"http-{k}",
                profiles=builtin_profile_set("constant"),
                poll_ms=10,
                **kwargs,
            ).start()
            for k in range(count)
        ]

        def stop():
            for w in workers:
                w.stop()

        return stop

    return start


def test_healthz_and_bearer_token_rules():
    hub = Hub(BlobStore())
    with run_server(hub, token="sesame", port=0) as url:
        import httpx

        assert httpx.get(f"{url}/healthz").json() == {"ok": True}
        assert httpx.get(f"{url}/ui").status_code == 200
        assert httpx.get(f"{url}/configs").status_code == 401
        assert (
            httpx.get(
                f"{url}/configs", headers={"authorization": "Bearer wrong"}
            ).status_code
            == 401
        )
        with HubClient(url, token="sesame") as client:
            assert client.list_config_docs() == []


def test_config_round_trip_and_validation(served):
    hub, url, client = served
    doc = conformance_config_doc()
    stored = client.put_config_doc(doc)
    assert stored == doc
    assert client.get_config_doc(CONFORMANCE_CONFIG) == doc
    assert client.list_config_docs() == [doc]

    import httpx

    bogus = dict(doc, color="red")
    assert httpx.put(f"{url}/configs/{doc['config_name']}", json=bogus).status_code == 422

    renamed = dict(doc, config_name="OTHER")
    mismatch = httpx.put(f"{url}/configs/{doc['config_name']}", json=renamed)
    assert mismatch.status_code == 400
    assert "path names config" in mismatch.json()["detail"]

    cyclic = dict(doc)
    cyclic["stages"] = [
        dict(s, inputs=[{"stage": "tts"}]) if s["stage_id"] == "speech2text" else s
        for s in doc["stages"]
    ]
    response = httpx.put(f"{url}/configs/{doc['config_name']}", json=cyclic)
    assert response.status_code == 400
    assert response.json()["error"] == "invalid_pipeline"


def test_blob_endpoints(served):
    hub, url, client = served
    payload = b"some media bytes"
    blob_hash = client.put_blob(payload, media_kind="audio")
    assert blob_hash == sha256_hex(payload)
    assert client.get_blob(blob_hash) == payload
    assert client.has_blob(blob_hash)
    assert not client.has_blob("0" * 64)
    with pytest.raises(BlobNotFound):
        client.get_blob("0" * 64)

    import httpx

    response = httpx.post(
        f"{url}/blobs", content=payload, headers={"x-blob-hash": "1" * 64}
    )
    assert response.status_code == 400
    assert response.json()["error"] == "chunk_digest_mismatch"

    got = httpx.get(f"{url}/blobs/{blob_hash}")
    assert got.headers["x-media-kind"] == "audio"


def test_chunked_upload_over_http(served):
    hub, url, client = served
    data = bytes(range(256)) * 40
    manifest = manifest_for(data, chunk_size=1024)
    missing = client.begin_upload(manifest, media_kind="video")
    assert missing == list(range(manifest.chunk_count))

    chunks = {i: data[i * 1024 : (i + 1) * 1024] for i in missing}
    client.put_chunk(manifest.blob_hash, 2, chunks[2])
    assert 2 not in client.missing_chunks(manifest.blob_hash)

    with pytest.raises(ChunkDigestMismatch):
        client.put_chunk(manifest.blob_hash, 0, b"wrong bytes")

    for index in client.missing_chunks(manifest.blob_hash):
        client.put_chunk(manifest.blob_hash, index, chunks[index])
    assert client.missing_chunks(manifest.blob_hash) == []
    assert client.get_blob(manifest.blob_hash) == data


def test_manifest_conflict_is_409(served):
    hub, url, client = served
    data = b"q" * 3_000
    client.begin_upload(manifest_for(data, chunk_size=1024))
    import httpx

    doc = manifest_for(data, chunk_size=1024).to_json()
    doc["chunk_digests"] = list(reversed(doc["chunk_digests"]))
    response = httpx.post(f"{url}/blobs/manifest", json=doc)
    assert response.status_code == 409
    assert response.json()["error"] == "manifest_conflict"
    with pytest.raises(ManifestConflict):
        client.begin_upload(ChunkManifest.from_json(doc))


def test_turn_flow_and_error_reconstruction(served):
    hub, url, client = served
    client.put_config_doc(conformance_config_doc())

    with pytest.raises(UnknownConfig):
        client.submit_turn("GHOST", "trk", {}, {})
    with pytest.raises(UnknownWorker):
        client.claim("w9999")

    audio = client.put_blob(b"pcm", media_kind="audio")
    task_id = client.submit_turn(
        CONFORMANCE_CONFIG, "trk", {"audio": audio}, {"reference_transcript": "hi"}
    )
    assert client.get_response(task_id)["state"] == "pending"

    worker_id = client.register_worker("manual", ["speech2text"])
    work = client.claim(worker_id)
    assert work is not None
    assert work.task_id == task_id and work.stage_id == "speech2text"
    assert work.inputs[0].blob_hash == audio

    with pytest.raises(StaleLease):
        client.complete_stage(
            task_id, "speech2text", worker_id, work.lease_token + 1, 5, "hi"
        )
    client.complete_stage(
        task_id, "speech2text", worker_id, work.lease_token, 5, "hi"
    )
    task = client.get_task_doc(task_id)
    records = {r["stage_id"]: r for r in task["stage_records"]}
    assert records["speech2text"]["state"] == "completed"

    # Readiness is computed at claim time, so llm is claimable now.
    llm_worker = client.register_worker("manual-llm", ["llm"])
    follow_up = client.claim(llm_worker)
    assert follow_up is not None and follow_up.stage_id == "llm"
    assert follow_up.inputs[0].text == "hi"


def test_claim_long_poll_wakes_on_submission(served):
    hub, url, client = served
    client.put_config_doc(conformance_config_doc())
    audio = client.put_blob(b"pcm", media_kind="audio")
    worker_id = client.register_worker("poller", ["speech2text"])

    def submit_later():
        time.sleep(0.15)
        with HubClient(url) as other:
            other.submit_turn(CONFORMANCE_CONFIG, "trk", {"audio": audio}, {})

    thread = threading.Thread(target=submit_later)
    started = time.monotonic()
    thread.start()
    work = client.claim(worker_id, wait_ms=5_000)
    waited = time.monotonic() - started
    thread.join()
    assert work is not None
    assert waited < 4.0


def test_records_annotations_and_counts(served):
    hub, url, client = served
    client.put_config_doc(conformance_config_doc())
    audio = client.put_blob(b"pcm", media_kind="audio")
    stop = synthetic_workers(url)()
    try:
        task_id = client.submit_turn(
            CONFORMANCE_CONFIG, "morning", {"audio": audio}, {}
        )
        deadline = time.monotonic() + 20
        while client.get_response(task_id)["state"] not in ("completed", "failed"):
            assert time.monotonic() < deadline
            time.sleep(0.02)
    finally:
        stop()
    assert client.get_response(task_id)["state"] == "completed"

    with pytest.raises(ScoreOutOfRange):
        client.annotate(task_id, "rater", 6)
    stored = client.annotate(task_id, "rater", 4, comment="crisp")
    assert stored["overall_score"] == 4

    snapshot = client.query_records(config_name=CONFORMANCE_CONFIG)
    assert [t["task_id"] for t in snapshot["tasks"]] == [task_id]
    assert snapshot["annotations"][0]["comment"] == "crisp"
    assert client.query_records(track_id="evening")["tasks"] == []
    counts = client.counts()
    assert counts["tasks_completed"] == 1 and counts["annotations"] == 1


def test_report_endpoint_matches_local_export(served):
    hub, url, client = served
    install_presets(hub)
    audio_blob = hub.blobs.put(b"pcm")
    stop = synthetic_workers(url)()
    try:
        ids = [
            client.submit_turn(
                "GPT35_ETE", "trk", {"audio": audio_blob.hash}, {}
            )
            for _ in range(3)
        ]
        deadline = time.monotonic() + 30
        while any(
            client.get_response(t)["state"] != "completed" for t in ids
        ):
            assert time.monotonic() < deadline
            time.sleep(0.02)
    finally:
        stop()

    via_http = client.report_bytes("GPT35_ETE", format="json")
    snapshot = reportgen.hub_snapshot(hub, config_name="GPT35_ETE")
    local = reportgen.export_report(
        reportgen.build_report(snapshot, "GPT35_ETE"), "json"
    )
    assert via_http == local

    csv_lines = client.report_bytes("GPT35_ETE", format="csv").decode().splitlines()
    assert csv_lines[0].startswith("config,stage,count,mean_ms")

    import httpx

    assert httpx.get(f"{url}/reports/NOPE_ETE").status_code == 404
    missing = httpx.get(f"{url}/reports/GPT4O_ETE")
    assert missing.status_code == 404
    assert missing.json()["error"] == "no_matching_turns"


def test_transport_retries_then_hub_unreachable():
    delays = []
    client = HubClient(
        "http://127.0.0.1:9",  # discard port; nothing listens
        transport_attempts=4,
        sleep=delays.append,
    )
    with pytest.raises(HubUnreachable, match="after 4 attempts"):
        client.counts()
    assert delays == [0.1, 0.2, 0.4]
    client.close()


def test_backoff_caps_at_five_seconds():
    delays = []
    client = HubClient(
        "http://127.0.0.1:9",
        transport_attempts=9,
        sleep=delays.append,
    )
    with pytest.raises(HubUnreachable):
        client.counts()
    assert delays == [0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 5.0, 5.0]
    client.close()


def test_mock_worker_passes_protocol_conformance():
    hub = Hub(BlobStore())
    with run_server(hub, port=0) as url:
        run_worker_conformance(url, synthetic_workers(url))
