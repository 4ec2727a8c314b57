"""CLI surface tests; the serve command gets a real subprocess round trip."""

import json
import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest
from click.testing import CliRunner

from turnbench import reportgen
from turnbench.blobstore import BlobStore
from turnbench.cli import main
from turnbench.hub.client import HubClient
from turnbench.hub.core import Hub
from turnbench.hub.server import run_server
from turnbench.presets import builtin_profile_set, install_presets
from turnbench.replayer import load_manifest
from turnbench.workers import ALL_KINDS, ProfileSet, SyntheticWorker


@pytest.fixture()
def runner():
    return CliRunner()


def test_profiles_export_round_trips(runner):
    result = runner.invoke(main, ["profiles", "export", "--bundle", "constant"])
    assert result.exit_code == 0, result.output
    doc = json.loads(result.output)
    bundle = ProfileSet.from_json(doc)
    assert bundle.profile_for("QuantizationLLM_ETE", "llm", "llm").mean_ms == 28


def test_dataset_sample_then_split(runner, tmp_path):
    result = runner.invoke(main, ["dataset", "sample", "--out", str(tmp_path / "ds")])
    assert result.exit_code == 0, result.output
    manifest_path = result.output.strip()
    manifest = load_manifest(manifest_path)
    assert len(manifest.segments) == 12

    cuts = {
        "cuts": [
            {"asset_id": manifest.assets[0].asset_id, "start_ms": 0, "end_ms": 900},
            [manifest.assets[1].asset_id, 0, 500],
        ]
    }
    cuts_path = tmp_path / "cuts.json"
    cuts_path.write_text(json.dumps(cuts))
    result = runner.invoke(
        main,
        [
            "split",
            "--manifest",
            manifest_path,
            "--cuts",
            str(cuts_path),
            "--out",
            str(tmp_path / "split"),
        ],
    )
    assert result.exit_code == 0, result.output
    split = load_manifest(tmp_path / "split" / "manifest.json")
    assert [s.end_ms for s in split.segments] == [900, 500]
    assert split.dataset.endswith("-split")
    # Asset paths were absolutized, so the split manifest loads from anywhere.
    assert all(Path(a.file_path).is_absolute() for a in split.assets)


def test_worker_replay_and_report_commands(runner, tmp_path):
    hub = Hub(BlobStore())
    install_presets(hub)
    sample = runner.invoke(main, ["dataset", "sample", "--out", str(tmp_path / "ds")])
    manifest_path = sample.output.strip()

    with run_server(hub, port=0, token="t0") as url:
        auth = ["--token", "t0"]

        # With --max-tasks the worker drains the backlog and exits on the
        # first empty claim, so the turns must exist before it starts.
        with HubClient(url, token="t0") as client:
            audio = client.put_blob(b"backlog-pcm", media_kind="audio")
            for _ in range(3):
                client.submit_turn(
                    "QuantizationLLM_ETE", "cli-backlog", {"audio": audio}, {}
                )
        drain = runner.invoke(
            main,
            ["worker", "run", "--hub", url, "--poll-ms", "10", "--max-tasks", "12", *auth],
        )
        assert drain.exit_code == 0, drain.output
        stats = json.loads(drain.output)
        assert stats["claims"] == 12 and stats["completions"] == 12

        # Full-scale sleeps keep reported durations truthful, which the
        # report's critical-path vs end-to-end consistency check demands.
        workers = [
            SyntheticWorker(
                HubClient(url, token="t0"),
                name=f"cli-{k}",
                profiles=builtin_profile_set("constant"),
                poll_ms=10,
            ).start()
            for k in range(2)
        ]
        try:
            replay_result = runner.invoke(
                main,
                [
                    "replay",
                    "--manifest",
                    manifest_path,
                    "--config",
                    "QuantizationLLM_ETE",
                    "--pacing",
                    "flood",
                    "--hub",
                    url,
                    "--scenario",
                    "debate",
                    "--out",
                    str(tmp_path / "summary.json"),
                    *auth,
                ],
            )
        finally:
            for w in workers:
                w.stop()
        assert replay_result.exit_code == 0, replay_result.output

        summary = json.loads((tmp_path / "summary.json").read_text())
        assert len(summary["turns"]) == 6
        assert all(t["state"] == "completed" for t in summary["turns"])
        assert summary["timeouts"] == []

        report_result = CliRunner().invoke(
            main,
            [
                "report",
                "build",
                "--hub",
                url,
                "--config",
                "QuantizationLLM_ETE",
                "--track-id",
                "bundled-sample",
                "--out",
                str(tmp_path / "quant.json"),
                *auth,
            ],
        )
        assert report_result.exit_code == 0, report_result.output
        doc = json.loads((tmp_path / "quant.json").read_text())
        report = reportgen.report_from_doc(doc)
        assert report.turn_count == 6
        assert report.stage("llm").worker.mean == 28.0

    # Comparison needs two inputs; reuse the one report twice via a copy.
    second = dict(doc, config_name="QuantizationLLM_ETE_COPY")
    (tmp_path / "copy.json").write_text(json.dumps(second))
    compare_result = runner.invoke(
        main,
        [
            "report",
            "compare",
            "--inputs",
            str(tmp_path / "quant.json"),
            "--inputs",
            str(tmp_path / "copy.json"),
            "--format",
            "csv",
        ],
    )
    assert compare_result.exit_code == 0, compare_result.output
    lines = compare_result.output.splitlines()
    assert lines[0] == "config,e2e_mean_ms,e2e_p95_ms,dominant_stage,mean_overall_score"
    assert len(lines) == 3


def test_worker_rejects_unknown_capability(runner):
    result = runner.invoke(
        main,
        ["worker", "run", "--hub", "http://x", "--capabilities", "telepathy"],
    )
    assert result.exit_code != 0
    assert "telepathy" in result.output or "telepathy" in (result.stderr or "")


def test_hub_serve_subprocess(tmp_path):
    env = dict(os.environ)
    src = str(Path(__file__).resolve().parents[1] / "src")
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    proc = subprocess.Popen(
        [
            sys.executable,
            "-m",
            "turnbench.cli",
            "hub",
            "serve",
            "--port",
            "0",
            "--data-dir",
            str(tmp_path / "data"),
        ],
        env=env,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        line = proc.stderr.readline()
        assert "hub listening on " in line
        url = line.strip().rsplit(" ", 1)[-1]
        assert httpx.get(f"{url}/healthz").json() == {"ok": True}
        configs = httpx.get(f"{url}/configs").json()["configs"]
        assert {c["config_name"] for c in configs} >= {"GPT35_ETE", "HF_ETE"}
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            proc.wait(timeout=15)
        except subprocess.TimeoutExpired:
            proc.kill()
            raise
    assert (tmp_path / "data" / "hub.sqlite3").exists()


def test_all_kinds_is_the_capability_vocabulary():
    assert "speech2text" in ALL_KINDS and "vision_llm" in ALL_KINDS
