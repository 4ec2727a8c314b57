"""Content-addressed blob store with resumable chunked uploads.

Blobs are keyed by the SHA-256 hex digest of their content and stored
under ``objects/<aa>/<bb>/<digest>`` where ``aa``/``bb`` are the first
two byte pairs of the digest. Writes land in a temp file and are moved
into place atomically, so a path under ``objects/`` always holds a
complete blob. Blobs are append-only; nothing here deletes.

Large payloads arrive as fixed-size chunks under a declared manifest
(total size plus per-chunk digests). Chunks may be re-sent, arrive in
any order, and survive a process restart; the blob is assembled and
verified against its digest only when every chunk is present. Reads
re-hash the file so on-disk corruption is detected at access time.

Storage is pluggable: the filesystem backend is the real one, and a
dict-backed backend (``BlobStore()`` with no root) serves tests and
simulations that should not touch disk.
"""

from __future__ import annotations

import enum
import errno
import hashlib
import json
import math
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

CHUNK_SIZE = 4 * 1024 * 1024

_HEX64 = frozenset("0123456789abcdef")


class BlobStoreError(Exception):
    pass


class NotFound(BlobStoreError):
    """No blob stored under this hash."""


class UploadNotFound(NotFound):
    """No chunked upload registered under this hash."""


class ManifestConflict(BlobStoreError):
    """Manifest disagrees with itself or with one already registered."""


class ChunkDigestMismatch(BlobStoreError):
    """Chunk bytes do not match the length or digest the manifest declared."""


class IntegrityViolation(BlobStoreError):
    """Stored or assembled bytes do not hash to the blob's address."""


class StorageFull(BlobStoreError):
    pass


class IoFailure(BlobStoreError):
    pass


class MediaKind(str, enum.Enum):
    AUDIO = "audio"
    VIDEO = "video"
    IMAGE = "image"
    TEXT = "text"
    OTHER = "other"


@dataclass(frozen=True)
class BlobRef:
    """Address plus the two facts every consumer needs before fetching."""

    hash: str
    size_bytes: int
    media_kind: MediaKind

    def __post_init__(self) -> None:
        _check_hash(self.hash)
        if self.size_bytes <= 0:
            raise BlobStoreError("blobs are non-empty; size_bytes must be > 0")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _check_hash(blob_hash: str) -> str:
    if len(blob_hash) != 64 or not set(blob_hash) <= _HEX64:
        raise BlobStoreError(f"not a lowercase sha256 hex digest: {blob_hash!r}")
    return blob_hash


@dataclass(frozen=True)
class ChunkManifest:
    """Declared shape of a chunked upload; digests commit the sender."""

    blob_hash: str
    total_size: int
    chunk_size: int
    chunk_digests: tuple[str, ...]

    def __post_init__(self) -> None:
        _check_hash(self.blob_hash)
        if self.total_size <= 0:
            raise BlobStoreError("blobs are non-empty; total_size must be > 0")
        if self.chunk_size <= 0:
            raise BlobStoreError("chunk_size must be positive")
        expected = math.ceil(self.total_size / self.chunk_size)
        if len(self.chunk_digests) != expected:
            raise ManifestConflict(
                f"{len(self.chunk_digests)} digests for {expected} chunks"
            )
        for d in self.chunk_digests:
            _check_hash(d)

    @property
    def chunk_count(self) -> int:
        return len(self.chunk_digests)

    def chunk_length(self, index: int) -> int:
        if not 0 <= index < self.chunk_count:
            raise BlobStoreError(f"chunk index out of range: {index}")
        if index < self.chunk_count - 1:
            return self.chunk_size
        return self.total_size - self.chunk_size * (self.chunk_count - 1)

    def to_json(self) -> dict:
        return {
            "blob_hash": self.blob_hash,
            "total_size": self.total_size,
            "chunk_size": self.chunk_size,
            "chunk_digests": list(self.chunk_digests),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ChunkManifest":
        return cls(
            blob_hash=doc["blob_hash"],
            total_size=doc["total_size"],
            chunk_size=doc["chunk_size"],
            chunk_digests=tuple(doc["chunk_digests"]),
        )


def manifest_for(data: bytes, chunk_size: int = CHUNK_SIZE) -> ChunkManifest:
    """Manifest a sender would compute before uploading ``data``."""
    digests = tuple(
        sha256_hex(data[off : off + chunk_size])
        for off in range(0, len(data), chunk_size)
    )
    return ChunkManifest(
        blob_hash=sha256_hex(data),
        total_size=len(data),
        chunk_size=chunk_size,
        chunk_digests=digests,
    )


def iter_chunks(data: bytes, chunk_size: int = CHUNK_SIZE):
    """(index, bytes) pairs covering ``data`` in manifest order."""
    for index, off in enumerate(range(0, len(data), chunk_size)):
        yield index, data[off : off + chunk_size]


class _FsFiles:
    """Filesystem backend: atomic writes via temp file + rename."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key

    def read(self, key: str) -> bytes:
        try:
            return self._path(key).read_bytes()
        except FileNotFoundError:
            raise KeyError(key) from None

    def write(self, key: str, data: bytes) -> None:
        path = self._path(key)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".partial-")
            try:
                with os.fdopen(fd, "wb") as out:
                    out.write(data)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise StorageFull(str(exc)) from exc
            raise IoFailure(str(exc)) from exc

    def exists(self, key: str) -> bool:
        return self._path(key).is_file()

    def size(self, key: str) -> int:
        try:
            return self._path(key).stat().st_size
        except FileNotFoundError:
            raise KeyError(key) from None

    def delete(self, key: str) -> None:
        path = self._path(key)
        path.unlink(missing_ok=True)
        # drop upload dirs once emptied; ignore shared/non-empty parents
        try:
            path.parent.rmdir()
        except OSError:
            pass

    def keys(self, prefix: str) -> list[str]:
        base = self._path(prefix)
        if not base.is_dir():
            return []
        return sorted(
            str(p.relative_to(self.root))
            for p in base.rglob("*")
            if p.is_file() and not p.name.startswith(".partial-")
        )


class _MemFiles:
    """Dict backend for tests and simulations; same contract, no disk."""

    def __init__(self) -> None:
        self._data: dict[str, bytes] = {}

    def read(self, key: str) -> bytes:
        return self._data[key]

    def write(self, key: str, data: bytes) -> None:
        self._data[key] = data

    def exists(self, key: str) -> bool:
        return key in self._data

    def size(self, key: str) -> int:
        return len(self._data[key])

    def delete(self, key: str) -> None:
        self._data.pop(key, None)

    def keys(self, prefix: str) -> list[str]:
        return sorted(k for k in self._data if k.startswith(prefix))

    def corrupt(self, key: str, data: bytes) -> None:
        """Test hook: overwrite stored bytes behind the store's back."""
        self._data[key] = data


class BlobStore:
    """Content-addressed store; safe for concurrent use within a process.

    ``root`` selects the filesystem backend; omitting it keeps everything
    in memory, which tests and deterministic simulations use.
    """

    def __init__(self, root: str | Path | None = None):
        self.root = None if root is None else Path(root)
        self._files = _MemFiles() if root is None else _FsFiles(root)
        self._lock = threading.Lock()

    # -- direct storage -------------------------------------------------

    def put(self, data: bytes, media_kind: MediaKind = MediaKind.OTHER) -> BlobRef:
        """Store non-empty bytes, returning their ref. Idempotent.

        The media kind recorded by the first put wins; re-putting the same
        bytes returns the original ref regardless of the kind passed.
        """
        if not data:
            raise BlobStoreError("blobs are non-empty; refusing empty payload")
        blob_hash = sha256_hex(data)
        key = self._object_key(blob_hash)
        if not self._files.exists(key):
            self._files.write(key, data)
        self._record_kind(blob_hash, media_kind)
        return self.ref(blob_hash)

    def get(self, blob_hash: str) -> bytes:
        """Read and verify a blob; corruption raises, never returns bad bytes."""
        _check_hash(blob_hash)
        try:
            data = self._files.read(self._object_key(blob_hash))
        except KeyError:
            raise NotFound(blob_hash) from None
        if sha256_hex(data) != blob_hash:
            raise IntegrityViolation(f"stored bytes do not match {blob_hash}")
        return data

    def has(self, blob_hash: str) -> bool:
        _check_hash(blob_hash)
        return self._files.exists(self._object_key(blob_hash))

    def ref(self, blob_hash: str) -> BlobRef:
        _check_hash(blob_hash)
        try:
            size = self._files.size(self._object_key(blob_hash))
        except KeyError:
            raise NotFound(blob_hash) from None
        return BlobRef(hash=blob_hash, size_bytes=size, media_kind=self._kind(blob_hash))

    def size(self, blob_hash: str) -> int:
        return self.ref(blob_hash).size_bytes

    def audit(self) -> list[str]:
        """Re-hash every stored blob; returns hashes whose bytes went bad."""
        corrupt: list[str] = []
        for key in self._files.keys("objects/"):
            blob_hash = key.rsplit("/", 1)[-1]
            if sha256_hex(self._files.read(key)) != blob_hash:
                corrupt.append(blob_hash)
        return corrupt

    # -- chunked upload -------------------------------------------------

    def begin_upload(
        self, manifest: ChunkManifest, media_kind: MediaKind = MediaKind.OTHER
    ) -> list[int]:
        """Register (or resume) an upload; returns the missing chunk indexes.

        An empty list means the blob is already complete. A manifest that
        disagrees with one previously registered for the same blob is
        rejected rather than silently replacing it.
        """
        with self._lock:
            if self.has(manifest.blob_hash):
                return []
            existing = self._load_manifest(manifest.blob_hash)
            if existing is None:
                doc = manifest.to_json()
                doc["media_kind"] = media_kind.value
                self._files.write(
                    self._manifest_key(manifest.blob_hash),
                    json.dumps(doc, sort_keys=True).encode(),
                )
            elif existing != manifest:
                raise ManifestConflict(
                    f"conflicting manifest already registered for {manifest.blob_hash}"
                )
            return self._missing(manifest)

    def put_chunk(self, blob_hash: str, index: int, data: bytes) -> list[int]:
        """Store one chunk; returns remaining missing indexes (empty = done).

        The chunk must match the manifest's declared length and digest;
        a bad chunk is rejected without disturbing the others. Re-sending
        a chunk that is already present is a no-op.
        """
        _check_hash(blob_hash)
        with self._lock:
            if self.has(blob_hash):
                return []
            manifest = self._load_manifest(blob_hash)
            if manifest is None:
                raise UploadNotFound(f"no upload registered for {blob_hash}")
            expected_len = manifest.chunk_length(index)
            if len(data) != expected_len:
                raise ChunkDigestMismatch(
                    f"chunk {index}: {len(data)} bytes, manifest says {expected_len}"
                )
            if sha256_hex(data) != manifest.chunk_digests[index]:
                raise ChunkDigestMismatch(f"chunk {index}: digest mismatch")
            chunk_key = self._chunk_key(blob_hash, index)
            if not self._files.exists(chunk_key):
                self._files.write(chunk_key, data)
            missing = self._missing(manifest)
            if not missing:
                self._finalize(manifest)
            return missing

    def missing_chunks(self, blob_hash: str) -> list[int]:
        """Missing indexes for a registered upload; [] once the blob exists."""
        _check_hash(blob_hash)
        with self._lock:
            if self.has(blob_hash):
                return []
            manifest = self._load_manifest(blob_hash)
            if manifest is None:
                raise UploadNotFound(f"no upload registered for {blob_hash}")
            return self._missing(manifest)

    def upload_in_chunks(
        self,
        data: bytes,
        chunk_size: int = CHUNK_SIZE,
        media_kind: MediaKind = MediaKind.OTHER,
    ) -> BlobRef:
        """Convenience: full manifest-then-chunks round trip in-process."""
        manifest = manifest_for(data, chunk_size)
        missing = self.begin_upload(manifest, media_kind)
        chunks = dict(iter_chunks(data, chunk_size))
        while missing:
            for index in missing:
                missing = self.put_chunk(manifest.blob_hash, index, chunks[index])
        return self.ref(manifest.blob_hash)

    # -- internals ------------------------------------------------------

    @staticmethod
    def _object_key(blob_hash: str) -> str:
        return f"objects/{blob_hash[0:2]}/{blob_hash[2:4]}/{blob_hash}"

    @staticmethod
    def _kind_key(blob_hash: str) -> str:
        return f"kinds/{blob_hash[0:2]}/{blob_hash[2:4]}/{blob_hash}"

    @staticmethod
    def _manifest_key(blob_hash: str) -> str:
        return f"uploads/{blob_hash}/manifest.json"

    @staticmethod
    def _chunk_key(blob_hash: str, index: int) -> str:
        return f"uploads/{blob_hash}/{index:08d}.chunk"

    def _record_kind(self, blob_hash: str, media_kind: MediaKind) -> None:
        key = self._kind_key(blob_hash)
        if not self._files.exists(key):
            self._files.write(key, media_kind.value.encode())

    def _kind(self, blob_hash: str) -> MediaKind:
        try:
            return MediaKind(self._files.read(self._kind_key(blob_hash)).decode())
        except (KeyError, ValueError):
            return MediaKind.OTHER

    def _load_manifest(self, blob_hash: str) -> ChunkManifest | None:
        try:
            doc = json.loads(self._files.read(self._manifest_key(blob_hash)))
        except KeyError:
            return None
        return ChunkManifest.from_json(doc)

    def _upload_kind(self, blob_hash: str) -> MediaKind:
        try:
            doc = json.loads(self._files.read(self._manifest_key(blob_hash)))
            return MediaKind(doc.get("media_kind", "other"))
        except (KeyError, ValueError):
            return MediaKind.OTHER

    def _missing(self, manifest: ChunkManifest) -> list[int]:
        return [
            i
            for i in range(manifest.chunk_count)
            if not self._files.exists(self._chunk_key(manifest.blob_hash, i))
        ]

    def _finalize(self, manifest: ChunkManifest) -> None:
        """Assemble chunks, verify the whole, and commit to objects/."""
        media_kind = self._upload_kind(manifest.blob_hash)
        hasher = hashlib.sha256()
        parts = []
        for i in range(manifest.chunk_count):
            chunk = self._files.read(self._chunk_key(manifest.blob_hash, i))
            hasher.update(chunk)
            parts.append(chunk)
        if hasher.hexdigest() != manifest.blob_hash:
            raise IntegrityViolation(
                f"assembled bytes do not match {manifest.blob_hash}"
            )
        self._files.write(self._object_key(manifest.blob_hash), b"".join(parts))
        self._record_kind(manifest.blob_hash, media_kind)
        self._discard_upload(manifest)

    def _discard_upload(self, manifest: ChunkManifest) -> None:
        for i in range(manifest.chunk_count):
            self._files.delete(self._chunk_key(manifest.blob_hash, i))
        self._files.delete(self._manifest_key(manifest.blob_hash))
