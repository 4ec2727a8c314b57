"""Hub-side worker-protocol conformance checks.

Any worker implementation, in any language, passes by serving the
three-stage conformance pipeline over the HTTP protocol: register,
claim, execute, complete. The checks only inspect hub-side records, so
the same suite applies to the bundled mock workers and to external
adapters.
"""

from __future__ import annotations

import time
from typing import Callable

from turnbench.domain import (
    StageKind,
    StageSpec,
    TaskState,
    chain,
    source,
    upstream,
)
from turnbench.hub.client import HubClient
from turnbench.serde import config_to_doc

CONFORMANCE_CONFIG = "CONFORMANCE_ETE"


def conformance_config_doc() -> dict:
    config = chain(
        CONFORMANCE_CONFIG,
        StageSpec("speech2text", StageKind.SPEECH2TEXT, (source("audio"),)),
        StageSpec("llm", StageKind.LLM, (upstream("speech2text"),)),
        StageSpec("tts", StageKind.TTS, (upstream("llm"),)),
    )
    return config_to_doc(config)


def _wait_for_completion(client: HubClient, task_id: str, deadline_s: float) -> dict:
    deadline = time.monotonic() + deadline_s
    while time.monotonic() < deadline:
        response = client.get_response(task_id)
        if response["state"] in ("completed", "failed"):
            return response
        time.sleep(0.02)
    raise AssertionError(f"task {task_id} still {response['state']} after {deadline_s}s")


def run_worker_conformance(
    hub_url: str,
    start_workers: Callable[[], Callable[[], None]],
    token: str | None = None,
    turn_deadline_s: float = 30.0,
) -> None:
    """Drive two turns through a worker implementation and check the records.

    ``start_workers`` launches worker process(es)/thread(s) able to serve
    speech2text, llm, and tts against ``hub_url``, and returns a stop
    callable. Raises AssertionError on any protocol violation.
    """
    client = HubClient(hub_url, token=token)
    stop = start_workers()
    try:
        client.put_config_doc(conformance_config_doc())
        audio = client.put_blob(b"conformance-utterance", media_kind="audio")

        task_ids = []
        for i in range(2):
            task_ids.append(
                client.submit_turn(
                    CONFORMANCE_CONFIG,
                    track_id="conformance",
                    source_blobs={"audio": audio},
                    metadata={"reference_transcript": f"check one two {i}"},
                )
            )

        for task_id in task_ids:
            response = _wait_for_completion(client, task_id, turn_deadline_s)
            assert response["state"] == "completed", (
                f"turn {task_id} failed: {response.get('failing_stage')}"
            )
            assert response["output_blob_hash"], "terminal stage must emit audio"
            audio_out = client.get_blob(response["output_blob_hash"])
            assert len(audio_out) > 0

            task = client.get_task_doc(task_id)
            assert task["state"] == TaskState.COMPLETED.value
            records = {r["stage_id"]: r for r in task["stage_records"]}
            assert set(records) == {"speech2text", "llm", "tts"}
            for stage_id, record in records.items():
                assert record["state"] == "completed", stage_id
                assert record["attempt"] >= 1
                assert record["worker_reported_duration"] >= 0, stage_id
                assert record["lease"] is None, "lease must clear on completion"
                assert (
                    task["client_capture_ts"]
                    <= record["hub_dispatch_ts"]
                    <= record["hub_complete_ts"]
                ), f"clock ordering violated for {stage_id}"
            for stage_id in ("speech2text", "llm"):
                assert records[stage_id]["output_text"], (
                    f"{stage_id} must produce inline text"
                )
            assert records["tts"]["output_blob_hash"], "tts must produce a blob"
    finally:
        stop()
        client.close()
