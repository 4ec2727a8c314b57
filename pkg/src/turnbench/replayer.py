"""Client emulator: dataset manifests, timeline splitting, paced replay.

A dataset is a set of media assets with declared durations plus segments
cut out of those timelines; each segment becomes one conversational
turn. Media bytes are opaque: splitting and replay manipulate manifests
and byte ranges, never codecs, so a "video" here is any byte stream
whose declared duration maps proportionally onto its bytes.

Replay submits each segment as a turn against a hub, waits on responses
by polling, and measures the client-observed round trip separately from
the hub's own end-to-end latency (the client number includes the media
upload and the polling delay). A deterministic variant schedules the
same submissions on a virtual-time simulation for reproducible
benchmark runs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Protocol

from . import serde
from .blobstore import BlobStore, MediaKind, _check_hash
from .domain import PipelineConfig, SourceInput
from .hub.core import Hub
from .simulate import Simulation
from .workers import stream_rng

POLL_MS = 50
POLL_JITTER_MS = 10
DEFAULT_MAX_IN_FLIGHT = 16
DEFAULT_TURN_TIMEOUT_MS = 120_000


class ReplayError(Exception):
    pass


class InvalidCut(ReplayError):
    """Cut with start >= end."""


class CutOutOfBounds(ReplayError):
    """Cut outside the asset's declared [0, duration] timeline."""


class UnknownAsset(ReplayError):
    """Cut or segment references an asset the manifest does not declare."""


class TurnTimeout(ReplayError):
    """A turn outlived the replay's per-turn deadline."""

    def __init__(self, task_id: str):
        super().__init__(f"turn {task_id} timed out")
        self.task_id = task_id


class HubUnreachable(ReplayError):
    """The hub could not be reached after transport retries."""


@dataclass(frozen=True)
class MediaAsset:
    """One recorded timeline; bytes live in a blob or a file."""

    asset_id: str
    duration_ms: int
    media_kind: MediaKind = MediaKind.VIDEO
    blob_hash: str | None = None
    file_path: str | None = None

    def __post_init__(self) -> None:
        if not self.asset_id:
            raise ReplayError("asset_id cannot be empty")
        if self.duration_ms <= 0:
            raise ReplayError(f"asset {self.asset_id}: duration must be positive")
        if self.blob_hash is not None:
            _check_hash(self.blob_hash)

    def to_json(self) -> dict[str, Any]:
        return {
            "asset_id": self.asset_id,
            "duration_ms": self.duration_ms,
            "media_kind": self.media_kind.value,
            "blob_hash": self.blob_hash,
            "file_path": self.file_path,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "MediaAsset":
        return cls(
            asset_id=doc["asset_id"],
            duration_ms=doc["duration_ms"],
            media_kind=MediaKind(doc.get("media_kind", "video")),
            blob_hash=doc.get("blob_hash"),
            file_path=doc.get("file_path"),
        )


@dataclass(frozen=True)
class Segment:
    """One conversation turn cut out of an asset's timeline."""

    segment_id: str
    asset_id: str
    start_ms: int
    end_ms: int
    reference_transcript: str = ""
    scenario_tag: str = ""

    @property
    def duration_ms(self) -> int:
        return self.end_ms - self.start_ms

    def to_json(self) -> dict[str, Any]:
        return {
            "segment_id": self.segment_id,
            "asset_id": self.asset_id,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "reference_transcript": self.reference_transcript,
            "scenario_tag": self.scenario_tag,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "Segment":
        return cls(
            segment_id=doc["segment_id"],
            asset_id=doc["asset_id"],
            start_ms=doc["start_ms"],
            end_ms=doc["end_ms"],
            reference_transcript=doc.get("reference_transcript", ""),
            scenario_tag=doc.get("scenario_tag", ""),
        )


def _check_cut(asset: MediaAsset, start_ms: int, end_ms: int) -> None:
    if start_ms >= end_ms:
        raise InvalidCut(f"{asset.asset_id}: cut [{start_ms}, {end_ms}) is empty")
    if start_ms < 0 or end_ms > asset.duration_ms:
        raise CutOutOfBounds(
            f"{asset.asset_id}: cut [{start_ms}, {end_ms}) outside "
            f"[0, {asset.duration_ms}]"
        )


@dataclass(frozen=True)
class DatasetManifest:
    """Declared assets plus the segments cut out of them; validated on build."""

    dataset: str
    assets: tuple[MediaAsset, ...]
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        by_id: dict[str, MediaAsset] = {}
        for asset in self.assets:
            if asset.asset_id in by_id:
                raise ReplayError(f"duplicate asset id {asset.asset_id!r}")
            by_id[asset.asset_id] = asset
        seen: set[str] = set()
        for seg in self.segments:
            if seg.segment_id in seen:
                raise ReplayError(f"duplicate segment id {seg.segment_id!r}")
            seen.add(seg.segment_id)
            asset = by_id.get(seg.asset_id)
            if asset is None:
                raise UnknownAsset(
                    f"segment {seg.segment_id} references unknown asset {seg.asset_id!r}"
                )
            _check_cut(asset, seg.start_ms, seg.end_ms)

    def asset(self, asset_id: str) -> MediaAsset:
        for a in self.assets:
            if a.asset_id == asset_id:
                return a
        raise UnknownAsset(asset_id)

    def to_json(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "assets": [a.to_json() for a in self.assets],
            "segments": [s.to_json() for s in self.segments],
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "DatasetManifest":
        return cls(
            dataset=doc["dataset"],
            assets=tuple(MediaAsset.from_json(a) for a in doc.get("assets", [])),
            segments=tuple(Segment.from_json(s) for s in doc.get("segments", [])),
        )


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest file; relative asset paths resolve beside it."""
    path = Path(path)
    manifest = DatasetManifest.from_json(json.loads(path.read_text()))
    assets = tuple(
        replace(a, file_path=str(path.parent / a.file_path))
        if a.file_path is not None and not Path(a.file_path).is_absolute()
        else a
        for a in manifest.assets
    )
    return replace(manifest, assets=assets)


@dataclass(frozen=True)
class TurnManifest:
    """One replayable turn: a segment plus the asset it points into."""

    segment: Segment
    asset: MediaAsset

    def to_json(self) -> dict[str, Any]:
        return {"segment": self.segment.to_json(), "asset": self.asset.to_json()}


def split_dataset(manifest: DatasetManifest, cuts: list[Any]) -> list[TurnManifest]:
    """Cut asset timelines into per-turn manifests; bytes are untouched.

    A cut is ``(start_ms, end_ms)`` against the manifest's only asset,
    ``(asset_id, start_ms, end_ms)``, or a dict with those keys plus
    optional ``segment_id``, ``reference_transcript``, ``scenario_tag``.
    """
    turns: list[TurnManifest] = []
    for i, cut in enumerate(cuts):
        if isinstance(cut, dict):
            spec = dict(cut)
        elif len(cut) == 2:
            spec = {"start_ms": cut[0], "end_ms": cut[1]}
        elif len(cut) == 3:
            spec = {"asset_id": cut[0], "start_ms": cut[1], "end_ms": cut[2]}
        else:
            raise ReplayError(f"cut #{i}: expected 2 or 3 fields, got {cut!r}")
        asset_id = spec.get("asset_id")
        if asset_id is None:
            if len(manifest.assets) != 1:
                raise UnknownAsset(
                    f"cut #{i} names no asset and the manifest has "
                    f"{len(manifest.assets)} assets"
                )
            asset = manifest.assets[0]
        else:
            asset = manifest.asset(asset_id)
        start_ms, end_ms = int(spec["start_ms"]), int(spec["end_ms"])
        _check_cut(asset, start_ms, end_ms)
        segment = Segment(
            segment_id=spec.get(
                "segment_id", f"{asset.asset_id}:{start_ms}-{end_ms}"
            ),
            asset_id=asset.asset_id,
            start_ms=start_ms,
            end_ms=end_ms,
            reference_transcript=spec.get("reference_transcript", ""),
            scenario_tag=spec.get("scenario_tag", ""),
        )
        turns.append(TurnManifest(segment=segment, asset=asset))
    return turns


def slice_bytes(data: bytes, segment: Segment, asset: MediaAsset) -> bytes:
    """The byte range covering a segment's share of the asset timeline."""
    lo = len(data) * segment.start_ms // asset.duration_ms
    hi = len(data) * segment.end_ms // asset.duration_ms
    hi = min(len(data), max(hi, lo + 1))
    lo = min(lo, hi - 1)
    return data[lo:hi]


# -- replay ---------------------------------------------------------------


class ReplayClient(Protocol):
    """What replay needs from a hub, in-process or over the wire."""

    def get_config_doc(self, name: str) -> dict[str, Any]: ...

    def put_blob(self, data: bytes, media_kind: str = "other") -> str: ...

    def get_blob(self, blob_hash: str) -> bytes: ...

    def has_blob(self, blob_hash: str) -> bool: ...

    def submit_turn(
        self,
        config_name: str,
        track_id: str,
        source_blobs: dict[str, str],
        metadata: dict[str, str],
    ) -> str: ...

    def get_response(self, task_id: str) -> dict[str, Any]: ...


class LocalClient:
    """In-process replay client over a hub instance."""

    def __init__(self, hub: Hub):
        self._hub = hub

    def get_config_doc(self, name: str) -> dict[str, Any]:
        return serde.config_to_doc(self._hub.get_config(name))

    def put_blob(self, data: bytes, media_kind: str = "other") -> str:
        return self._hub.blobs.put(data, MediaKind(media_kind)).hash

    def get_blob(self, blob_hash: str) -> bytes:
        return self._hub.blobs.get(blob_hash)

    def has_blob(self, blob_hash: str) -> bool:
        return self._hub.blobs.has(blob_hash)

    def submit_turn(self, config_name, track_id, source_blobs, metadata) -> str:
        task = self._hub.submit_turn(
            config_name,
            track_id=track_id,
            source_blobs=source_blobs,
            metadata=metadata,
        )
        return task.task_id

    def get_response(self, task_id: str) -> dict[str, Any]:
        return self._hub.get_response(task_id)


def required_channels(config: PipelineConfig) -> list[str]:
    channels = {
        inp.channel.value
        for stage in config.stages
        if stage.enabled
        for inp in stage.inputs
        if isinstance(inp, SourceInput)
    }
    return sorted(channels)


@dataclass
class TurnResult:
    segment_id: str
    task_id: str
    submit_ts: int
    state: str
    rtt_ms: int | None = None
    timed_out: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "segment_id": self.segment_id,
            "task_id": self.task_id,
            "submit_ts": self.submit_ts,
            "state": self.state,
            "rtt_ms": self.rtt_ms,
            "timed_out": self.timed_out,
        }


@dataclass
class ReplaySummary:
    dataset: str
    config_name: str
    pacing: str
    started_ts: int
    turns: list[TurnResult] = field(default_factory=list)

    @property
    def timeouts(self) -> list[str]:
        return [t.task_id for t in self.turns if t.timed_out]

    @property
    def completed(self) -> list[TurnResult]:
        return [t for t in self.turns if t.state == "completed"]

    def to_json(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "config_name": self.config_name,
            "pacing": self.pacing,
            "started_ts": self.started_ts,
            "turns": [t.to_json() for t in self.turns],
            "timeouts": self.timeouts,
        }


def parse_pacing(pacing: str) -> tuple[str, int]:
    """('realtime' | 'fixed_interval' | 'flood', interval_ms)."""
    if pacing == "realtime":
        return "realtime", 0
    if pacing == "flood":
        return "flood", 0
    if pacing.startswith("fixed_interval"):
        _, _, arg = pacing.partition(":")
        return "fixed_interval", int(arg) if arg else 0
    raise ReplayError(f"unknown pacing {pacing!r}")


def _gap_ms(mode: str, interval_ms: int, segment: Segment) -> int:
    if mode == "realtime":
        return segment.duration_ms
    if mode == "fixed_interval":
        return interval_ms
    return 0


def _select_segments(
    manifest: DatasetManifest, scenario_tag: str | None
) -> list[TurnManifest]:
    selected = [
        TurnManifest(segment=s, asset=manifest.asset(s.asset_id))
        for s in manifest.segments
        if scenario_tag is None or s.scenario_tag == scenario_tag
    ]
    if not selected:
        raise ReplayError(f"no segments match scenario {scenario_tag!r}")
    return selected


class _AssetBytes:
    """Lazily resolves and caches each asset's bytes for slicing."""

    def __init__(self, client: ReplayClient):
        self._client = client
        self._cache: dict[str, bytes] = {}

    def get(self, asset: MediaAsset) -> bytes:
        data = self._cache.get(asset.asset_id)
        if data is None:
            if asset.file_path is not None:
                data = Path(asset.file_path).read_bytes()
                self._client.put_blob(data, asset.media_kind.value)
            elif asset.blob_hash is not None:
                data = self._client.get_blob(asset.blob_hash)
            else:
                raise UnknownAsset(
                    f"asset {asset.asset_id} declares neither a blob nor a file"
                )
            self._cache[asset.asset_id] = data
        return data


def _turn_inputs(
    client: ReplayClient,
    assets: _AssetBytes,
    turn: TurnManifest,
    channels: list[str],
) -> tuple[dict[str, str], dict[str, str]]:
    """(source blob map, metadata) for one segment submission."""
    data = assets.get(turn.asset)
    piece = slice_bytes(data, turn.segment, turn.asset)
    blob_hash = client.put_blob(piece, turn.asset.media_kind.value)
    source_blobs = {channel: blob_hash for channel in channels}
    metadata = {
        "segment_id": turn.segment.segment_id,
        "reference_transcript": turn.segment.reference_transcript,
        "scenario_tag": turn.segment.scenario_tag,
    }
    return source_blobs, metadata


def replay(
    client: ReplayClient,
    manifest: DatasetManifest,
    config_name: str,
    pacing: str = "flood",
    seed: int = 0,
    scenario_tag: str | None = None,
    track_id: str | None = None,
    turn_timeout_ms: int = DEFAULT_TURN_TIMEOUT_MS,
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
    sleep=time.sleep,
    monotonic=time.monotonic,
) -> ReplaySummary:
    """Submit every matching segment as a turn and wait out the responses.

    Single-threaded: submissions and response polling interleave in one
    loop, with at most ``max_in_flight`` unresolved turns. A turn
    missing its deadline is recorded as timed out and the replay moves
    on; the hub keeps processing it regardless.
    """
    mode, interval_ms = parse_pacing(pacing)
    turns = _select_segments(manifest, scenario_tag)
    config = serde.config_from_doc(client.get_config_doc(config_name))
    channels = required_channels(config)
    assets = _AssetBytes(client)
    jitter = stream_rng(seed, f"poll-jitter:{config_name}")
    summary = ReplaySummary(
        dataset=manifest.dataset,
        config_name=config_name,
        pacing=pacing,
        started_ts=int(time.time() * 1000),
    )
    track = track_id if track_id is not None else manifest.dataset

    next_submit_at = monotonic()
    pending = list(turns)
    in_flight: dict[str, dict[str, Any]] = {}

    def poll_after(now: float) -> float:
        return now + (POLL_MS + jitter.uniform(-POLL_JITTER_MS, POLL_JITTER_MS)) / 1000.0

    while pending or in_flight:
        now = monotonic()
        if pending and now >= next_submit_at and len(in_flight) < max_in_flight:
            turn = pending.pop(0)
            started = monotonic()
            source_blobs, metadata = _turn_inputs(client, assets, turn, channels)
            task_id = client.submit_turn(config_name, track, source_blobs, metadata)
            result = TurnResult(
                segment_id=turn.segment.segment_id,
                task_id=task_id,
                submit_ts=int(time.time() * 1000),
                state="pending",
            )
            summary.turns.append(result)
            in_flight[task_id] = {
                "result": result,
                "started": started,
                "deadline": started + turn_timeout_ms / 1000.0,
                "next_poll": poll_after(monotonic()),
            }
            next_submit_at = now + _gap_ms(mode, interval_ms, turn.segment) / 1000.0
            continue

        due = [
            (entry["next_poll"], task_id) for task_id, entry in in_flight.items()
        ]
        due.sort()
        acted = False
        if due and due[0][0] <= now:
            task_id = due[0][1]
            entry = in_flight[task_id]
            response = client.get_response(task_id)
            if response["state"] in ("completed", "failed"):
                entry["result"].state = response["state"]
                entry["result"].rtt_ms = math.ceil((monotonic() - entry["started"]) * 1000)
                del in_flight[task_id]
            elif now >= entry["deadline"]:
                entry["result"].state = "timeout"
                entry["result"].timed_out = True
                del in_flight[task_id]
            else:
                entry["next_poll"] = poll_after(now)
            acted = True
        if acted:
            continue

        wakes = [entry["next_poll"] for entry in in_flight.values()]
        if pending and len(in_flight) < max_in_flight:
            wakes.append(next_submit_at)
        if wakes:
            sleep(max(0.0, min(wakes) - monotonic()))
    return summary


def simulate_replay(
    sim: Simulation,
    manifest: DatasetManifest,
    config_name: str,
    pacing: str = "realtime",
    scenario_tag: str | None = None,
    track_id: str | None = None,
) -> list[tuple[str, int]]:
    """Schedule a replay on a virtual-time simulation; run with ``sim.run()``.

    Asset bytes must already be reachable through the simulation's blob
    store (or asset file paths). Returns the planned (segment_id,
    submit_ts) schedule.
    """
    mode, interval_ms = parse_pacing(pacing)
    turns = _select_segments(manifest, scenario_tag)
    config = sim.hub.get_config(config_name)
    channels = required_channels(config)
    client = LocalClient(sim.hub)
    assets = _AssetBytes(client)
    track = track_id if track_id is not None else manifest.dataset

    planned: list[tuple[str, int]] = []
    ts = sim.clock.now_ms
    for turn in turns:
        source_blobs, metadata = _turn_inputs(client, assets, turn, channels)
        sim.submit_at(ts, config_name, track, source_blobs, metadata)
        planned.append((turn.segment.segment_id, ts))
        ts += _gap_ms(mode, interval_ms, turn.segment)
    return planned
