"""Bundled sample dataset: two recorded scenarios cut into turns.

Six segments of a panel-debate recording and six of a street-assistance
session for a visually impaired user, each with a reference transcript.
Media bytes are synthetic but deterministic (seeded stream at a fixed
byte rate), so the dataset needs no downloads and hashes identically on
every machine.
"""

from __future__ import annotations

import json
from pathlib import Path

from .blobstore import BlobStore
from .replayer import DatasetManifest, MediaAsset, MediaKind, Segment
from .workers import stream_rng

#: Synthetic media bitrate: 64 bytes per declared millisecond (64 kB/s).
BYTES_PER_MS = 64

DEBATE_ASSET = "debate-panel"
ASSISTANCE_ASSET = "street-walk"

_DEBATE_TRANSCRIPTS = (
    "renewable sources can carry the grid if storage keeps scaling",
    "the moderator asked both sides to address transmission costs",
    "nuclear baseload remains the cheapest path to reliable power",
    "my opponent ignores the falling price curve of solar panels",
    "grid batteries discharged for six hours during the evening peak",
    "voters care about bills not about levelized cost charts",
)

_ASSISTANCE_TRANSCRIPTS = (
    "there is a crosswalk about three meters ahead with the light red",
    "a cyclist is passing on your left please hold your position",
    "the shop entrance has two steps up and a handrail on the right",
    "describe the items on the shelf in front of me",
    "the bus approaching is the number twelve toward central station",
    "warn me before the curb and tell me when it is safe to cross",
)

_SEGMENT_MS = {"debate": 12_000, "assistance": 10_000}


def sample_asset_bytes(asset_id: str, duration_ms: int) -> bytes:
    """Deterministic stand-in media for a declared timeline."""
    return bytes(stream_rng(0, f"sample-media:{asset_id}").randbytes(duration_ms * BYTES_PER_MS))


def _segments(
    asset_id: str, tag: str, transcripts: tuple[str, ...], segment_ms: int
) -> list[Segment]:
    return [
        Segment(
            segment_id=f"{tag}-{i:02d}",
            asset_id=asset_id,
            start_ms=i * segment_ms,
            end_ms=(i + 1) * segment_ms,
            reference_transcript=text,
            scenario_tag=tag,
        )
        for i, text in enumerate(transcripts)
    ]


def sample_manifest(
    blob_hashes: dict[str, str] | None = None,
    file_paths: dict[str, str] | None = None,
) -> DatasetManifest:
    """The bundled dataset; byte locations filled in per asset id if given."""
    blob_hashes = blob_hashes or {}
    file_paths = file_paths or {}

    def asset(asset_id: str, duration_ms: int) -> MediaAsset:
        return MediaAsset(
            asset_id=asset_id,
            duration_ms=duration_ms,
            media_kind=MediaKind.VIDEO,
            blob_hash=blob_hashes.get(asset_id),
            file_path=file_paths.get(asset_id),
        )

    debate = _segments(DEBATE_ASSET, "debate", _DEBATE_TRANSCRIPTS, _SEGMENT_MS["debate"])
    assist = _segments(
        ASSISTANCE_ASSET, "assistance", _ASSISTANCE_TRANSCRIPTS, _SEGMENT_MS["assistance"]
    )
    return DatasetManifest(
        dataset="bundled-sample",
        assets=(
            asset(DEBATE_ASSET, len(_DEBATE_TRANSCRIPTS) * _SEGMENT_MS["debate"]),
            asset(ASSISTANCE_ASSET, len(_ASSISTANCE_TRANSCRIPTS) * _SEGMENT_MS["assistance"]),
        ),
        segments=tuple(debate + assist),
    )


def install_sample_dataset(store: BlobStore) -> DatasetManifest:
    """Store the sample media as blobs; returns a manifest that references them."""
    manifest = sample_manifest()
    hashes = {
        a.asset_id: store.put(
            sample_asset_bytes(a.asset_id, a.duration_ms), a.media_kind
        ).hash
        for a in manifest.assets
    }
    return sample_manifest(blob_hashes=hashes)


def write_sample_dataset(out_dir: str | Path) -> Path:
    """Materialize the sample dataset as files; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = sample_manifest(
        file_paths={
            a.asset_id: f"{a.asset_id}.bin" for a in sample_manifest().assets
        }
    )
    for a in manifest.assets:
        (out / f"{a.asset_id}.bin").write_bytes(
            sample_asset_bytes(a.asset_id, a.duration_ms)
        )
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest.to_json(), indent=2) + "\n")
    return path
