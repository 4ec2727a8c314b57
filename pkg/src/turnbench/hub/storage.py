"""Pluggable metadata persistence behind the hub.

The hub keeps its working state in memory and writes every mutation
through one of these stores. ``MemoryStore`` discards everything;
``SqliteStore`` keeps a single-file database that a restarted hub can
reload. Leases are deliberately never persisted: after a restart every
in-flight stage is simply ready to claim again.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from typing import Any, Protocol


class MetadataStore(Protocol):
    def load_state(self) -> dict[str, Any]:
        """Documents to rebuild hub state from, empty when starting fresh."""
        ...

    def save_config(self, name: str, doc: dict) -> None: ...

    def save_task(self, task_id: str, doc: dict) -> None: ...

    def save_annotation(self, annotation_id: str, doc: dict) -> None: ...

    def save_worker(self, worker_id: str, doc: dict) -> None: ...

    def append_log(self, seq: int, doc: dict) -> None: ...

    def save_counters(self, counters: dict[str, int]) -> None: ...

    def close(self) -> None: ...


def empty_state() -> dict[str, Any]:
    return {"configs": {}, "tasks": {}, "annotations": {}, "workers": {}, "log": [], "counters": {}}


class MemoryStore:
    """Keeps nothing; the hub's in-memory state is the only copy."""

    def load_state(self) -> dict[str, Any]:
        return empty_state()

    def save_config(self, name: str, doc: dict) -> None:
        pass

    def save_task(self, task_id: str, doc: dict) -> None:
        pass

    def save_annotation(self, annotation_id: str, doc: dict) -> None:
        pass

    def save_worker(self, worker_id: str, doc: dict) -> None:
        pass

    def append_log(self, seq: int, doc: dict) -> None:
        pass

    def save_counters(self, counters: dict[str, int]) -> None:
        pass

    def close(self) -> None:
        pass


class SqliteStore:
    """Write-through single-file store; safe for the hub's worker threads."""

    def __init__(self, path: str):
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock:
            self._conn.executescript(
                """
                CREATE TABLE IF NOT EXISTS configs (name TEXT PRIMARY KEY, doc TEXT NOT NULL);
                CREATE TABLE IF NOT EXISTS tasks (task_id TEXT PRIMARY KEY, doc TEXT NOT NULL);
                CREATE TABLE IF NOT EXISTS annotations (annotation_id TEXT PRIMARY KEY, doc TEXT NOT NULL);
                CREATE TABLE IF NOT EXISTS workers (worker_id TEXT PRIMARY KEY, doc TEXT NOT NULL);
                CREATE TABLE IF NOT EXISTS log (seq INTEGER PRIMARY KEY, doc TEXT NOT NULL);
                CREATE TABLE IF NOT EXISTS counters (name TEXT PRIMARY KEY, value INTEGER NOT NULL);
                """
            )
            self._conn.commit()

    def load_state(self) -> dict[str, Any]:
        state = empty_state()
        with self._lock:
            for name, doc in self._conn.execute("SELECT name, doc FROM configs"):
                state["configs"][name] = json.loads(doc)
            for task_id, doc in self._conn.execute("SELECT task_id, doc FROM tasks"):
                state["tasks"][task_id] = json.loads(doc)
            for aid, doc in self._conn.execute(
                "SELECT annotation_id, doc FROM annotations"
            ):
                state["annotations"][aid] = json.loads(doc)
            for wid, doc in self._conn.execute("SELECT worker_id, doc FROM workers"):
                state["workers"][wid] = json.loads(doc)
            for _, doc in self._conn.execute("SELECT seq, doc FROM log ORDER BY seq"):
                state["log"].append(json.loads(doc))
            for name, value in self._conn.execute("SELECT name, value FROM counters"):
                state["counters"][name] = value
        return state

    def _upsert(self, table: str, key_col: str, key: str, doc: dict) -> None:
        with self._lock:
            self._conn.execute(
                f"INSERT INTO {table} ({key_col}, doc) VALUES (?, ?) "
                f"ON CONFLICT({key_col}) DO UPDATE SET doc = excluded.doc",
                (key, json.dumps(doc, sort_keys=True)),
            )
            self._conn.commit()

    def save_config(self, name: str, doc: dict) -> None:
        self._upsert("configs", "name", name, doc)

    def save_task(self, task_id: str, doc: dict) -> None:
        self._upsert("tasks", "task_id", task_id, doc)

    def save_annotation(self, annotation_id: str, doc: dict) -> None:
        self._upsert("annotations", "annotation_id", annotation_id, doc)

    def save_worker(self, worker_id: str, doc: dict) -> None:
        self._upsert("workers", "worker_id", worker_id, doc)

    def append_log(self, seq: int, doc: dict) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO log (seq, doc) VALUES (?, ?)",
                (seq, json.dumps(doc, sort_keys=True)),
            )
            self._conn.commit()

    def save_counters(self, counters: dict[str, int]) -> None:
        with self._lock:
            self._conn.executemany(
                "INSERT INTO counters (name, value) VALUES (?, ?) "
                "ON CONFLICT(name) DO UPDATE SET value = excluded.value",
                list(counters.items()),
            )
            self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()
