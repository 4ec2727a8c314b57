"""Command line front end: serve the hub, run workers, replay datasets, build reports."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from . import reportgen
from .blobstore import BlobStore
from .hub.client import HubClient
from .hub.core import Hub
from .hub.server import HubServer
from .hub.storage import SqliteStore
from .presets import builtin_profile_set, install_presets
from .replayer import DatasetManifest, load_manifest, replay, split_dataset
from .sampledata import write_sample_dataset
from .workers import ALL_KINDS, ProfileSet, SyntheticWorker

BUILTIN_BUNDLES = ("constant", "lognormal")


def _load_bundle(name_or_path: str) -> ProfileSet:
    if name_or_path in BUILTIN_BUNDLES:
        return builtin_profile_set(name_or_path)
    path = Path(name_or_path)
    if path.is_file():
        return ProfileSet.from_json(json.loads(path.read_text()))
    raise click.BadParameter(
        f"{name_or_path!r} is neither a builtin bundle {BUILTIN_BUNDLES} nor a file"
    )


def _write_out(out: str, payload: bytes) -> None:
    if out == "-":
        sys.stdout.buffer.write(payload)
    else:
        Path(out).write_bytes(payload)


@click.group()
def main() -> None:
    """Turn benchmarking hub and its desk-scale tooling."""


# -- hub ------------------------------------------------------------------


@main.group()
def hub() -> None:
    """Hub service commands."""


@hub.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8321, show_default=True)
@click.option("--token", default=None, help="Static bearer token; omit to serve open.")
@click.option("--ui-dir", default=None, type=click.Path(), help="Static SPA to mount at /ui.")
@click.option(
    "--data-dir",
    default=None,
    type=click.Path(),
    help="Persist blobs and metadata under this directory; omit for in-memory.",
)
@click.option("--lease-ms", default=None, type=int, help="Default stage lease duration.")
@click.option(
    "--presets/--no-presets",
    default=True,
    show_default=True,
    help="Install the four builtin pipeline configs at startup.",
)
def serve(
    host: str,
    port: int,
    token: str | None,
    ui_dir: str | None,
    data_dir: str | None,
    lease_ms: int | None,
    presets: bool,
) -> None:
    """Run the hub until interrupted."""
    if data_dir is not None:
        root = Path(data_dir)
        root.mkdir(parents=True, exist_ok=True)
        blobs = BlobStore(root / "blobs")
        store = SqliteStore(str(root / "hub.sqlite3"))
    else:
        blobs = BlobStore()
        store = None
    kwargs = {} if lease_ms is None else {"default_lease_ms": lease_ms}
    hub_obj = Hub(blobs, store=store, **kwargs)
    if presets:
        install_presets(hub_obj)
    server = HubServer(hub_obj, host=host, port=port, token=token, ui_dir=ui_dir).start()
    click.echo(f"hub listening on {server.url}", err=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()


# -- workers ----------------------------------------------------------------


@main.group()
def worker() -> None:
    """Stage worker commands."""


@worker.command("run")
@click.option("--hub", "hub_url", required=True, help="Hub base URL.")
@click.option(
    "--capabilities",
    default="all",
    show_default=True,
    help="Comma-separated stage kinds, or 'all'.",
)
@click.option(
    "--profile-bundle",
    default="constant",
    show_default=True,
    help=f"Builtin bundle {BUILTIN_BUNDLES} or a bundle file.",
)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--max-tasks", default=None, type=int, help="Stop after this many claims.")
@click.option("--name", default=None, help="Display name; defaults to worker-<seed>.")
@click.option("--token", default=None)
@click.option(
    "--time-scale",
    default=1.0,
    show_default=True,
    type=float,
    help="Multiplier on real sleeping; 0 reports durations without waiting.",
)
@click.option("--poll-ms", default=200, show_default=True, type=int)
def worker_run(
    hub_url: str,
    capabilities: str,
    profile_bundle: str,
    seed: int,
    max_tasks: int | None,
    name: str | None,
    token: str | None,
    time_scale: float,
    poll_ms: int,
) -> None:
    """Claim and execute stages until --max-tasks or interrupt."""
    kinds = (
        list(ALL_KINDS)
        if capabilities.strip() == "all"
        else [c.strip() for c in capabilities.split(",") if c.strip()]
    )
    unknown = sorted(set(kinds) - set(ALL_KINDS))
    if unknown:
        raise click.BadParameter(f"unknown stage kinds {unknown}; pick from {ALL_KINDS}")
    port = HubClient(hub_url, token=token)
    runner = SyntheticWorker(
        port,
        name=name or f"worker-{seed}",
        capabilities=kinds,
        profiles=_load_bundle(profile_bundle),
        seed=seed,
        time_scale=time_scale,
        max_tasks=max_tasks,
        poll_ms=poll_ms,
    )
    try:
        runner.run()
    except KeyboardInterrupt:
        runner.stop(join_timeout=0)
    finally:
        port.close()
    click.echo(json.dumps(runner.stats.as_dict()))


@main.group()
def profiles() -> None:
    """Latency profile bundle commands."""


@profiles.command("export")
@click.option(
    "--bundle",
    default="constant",
    show_default=True,
    type=click.Choice(BUILTIN_BUNDLES),
)
@click.option("--out", default="-", show_default=True, help="File path or - for stdout.")
def profiles_export(bundle: str, out: str) -> None:
    """Write a builtin bundle as a file; edit it to make a custom one."""
    doc = builtin_profile_set(bundle).to_json()
    _write_out(out, (json.dumps(doc, indent=2) + "\n").encode())


# -- replayer ---------------------------------------------------------------


@main.command("replay")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_name", required=True)
@click.option(
    "--pacing",
    default="flood",
    show_default=True,
    help="realtime, flood, or fixed_interval:<ms>.",
)
@click.option("--hub", "hub_url", required=True)
@click.option("--out", default="-", show_default=True, help="Summary file or - for stdout.")
@click.option("--token", default=None)
@click.option("--scenario", default=None, help="Only replay segments with this tag.")
@click.option("--track", default=None, help="Track id; defaults to the dataset name.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--turn-timeout-ms", default=120_000, show_default=True, type=int)
@click.option("--max-in-flight", default=16, show_default=True, type=int)
def replay_cmd(
    manifest_path: str,
    config_name: str,
    pacing: str,
    hub_url: str,
    out: str,
    token: str | None,
    scenario: str | None,
    track: str | None,
    seed: int,
    turn_timeout_ms: int,
    max_in_flight: int,
) -> None:
    """Replay a dataset manifest into the hub and write the turn summary."""
    manifest = load_manifest(manifest_path)
    with HubClient(hub_url, token=token) as client:
        summary = replay(
            client,
            manifest,
            config_name,
            pacing=pacing,
            seed=seed,
            scenario_tag=scenario,
            track_id=track,
            turn_timeout_ms=turn_timeout_ms,
            max_in_flight=max_in_flight,
        )
    _write_out(out, (json.dumps(summary.to_json(), indent=2) + "\n").encode())
    click.echo(
        f"{len(summary.completed)}/{len(summary.turns)} turns completed, "
        f"{len(summary.timeouts)} timed out",
        err=True,
    )


@main.command("split")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--cuts", "cuts_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--name", default=None, help="Dataset name; defaults to <dataset>-split.")
def split_cmd(manifest_path: str, cuts_path: str, out_dir: str, name: str | None) -> None:
    """Cut a dataset timeline into turn segments and write the new manifest."""
    manifest = load_manifest(manifest_path)
    cuts_doc = json.loads(Path(cuts_path).read_text())
    cuts = cuts_doc["cuts"] if isinstance(cuts_doc, dict) else cuts_doc
    turns = split_dataset(manifest, cuts)
    assets = []
    for turn in turns:
        if turn.asset not in assets:
            assets.append(turn.asset)
    split_manifest = DatasetManifest(
        dataset=name or f"{manifest.dataset}-split",
        assets=tuple(assets),
        segments=tuple(t.segment for t in turns),
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    path.write_text(json.dumps(split_manifest.to_json(), indent=2) + "\n")
    click.echo(f"{len(turns)} segments -> {path}", err=True)


@main.group()
def dataset() -> None:
    """Bundled dataset commands."""


@dataset.command("sample")
@click.option("--out", "out_dir", required=True, type=click.Path())
def dataset_sample(out_dir: str) -> None:
    """Materialize the bundled two-asset sample dataset as files."""
    path = write_sample_dataset(out_dir)
    click.echo(str(path))


# -- reports ------------------------------------------------------------------


@main.group()
def report() -> None:
    """Benchmark report commands."""


@report.command("build")
@click.option("--hub", "hub_url", required=True)
@click.option("--config", "config_name", required=True)
@click.option("--out", default="-", show_default=True)
@click.option(
    "--format",
    "fmt",
    default="json",
    show_default=True,
    type=click.Choice(("json", "csv")),
)
@click.option("--token", default=None)
@click.option("--track-id", default=None)
@click.option("--since-ts", default=None, type=int)
@click.option("--until-ts", default=None, type=int)
def report_build(
    hub_url: str,
    config_name: str,
    out: str,
    fmt: str,
    token: str | None,
    track_id: str | None,
    since_ts: int | None,
    until_ts: int | None,
) -> None:
    """Fetch a config's benchmark report; bytes match GET /reports/{config}."""
    with HubClient(hub_url, token=token) as client:
        payload = client.report_bytes(
            config_name,
            format=fmt,
            track_id=track_id,
            since_ts=since_ts,
            until_ts=until_ts,
        )
    _write_out(out, payload)


@report.command("compare")
@click.option(
    "--inputs",
    required=True,
    multiple=True,
    type=click.Path(exists=True),
    help="Report JSON files; repeat the flag per file.",
)
@click.option("--out", default="-", show_default=True)
@click.option(
    "--format",
    "fmt",
    default="json",
    show_default=True,
    type=click.Choice(("json", "csv")),
)
def report_compare(inputs: tuple[str, ...], out: str, fmt: str) -> None:
    """Rank previously exported reports by end-to-end latency."""
    reports = [
        reportgen.report_from_doc(json.loads(Path(p).read_text())) for p in inputs
    ]
    table = reportgen.compare_configs(reports)
    _write_out(out, reportgen.export_comparison(table, fmt))


if __name__ == "__main__":
    main()
