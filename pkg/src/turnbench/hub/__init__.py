"""Orchestration hub: task queue, leases, records, and its HTTP surface."""

from .core import (
    BlobNotFound,
    ClaimedWork,
    Hub,
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
    WorkInput,
    real_clock,
)
from .storage import MemoryStore, MetadataStore, SqliteStore

__all__ = [
    "BlobNotFound",
    "ClaimedWork",
    "Hub",
    "HubError",
    "InvalidOutput",
    "LeaseExpired",
    "MemoryStore",
    "MetadataStore",
    "MissingChannel",
    "NotLeaseHolder",
    "ScoreOutOfRange",
    "SqliteStore",
    "StaleLease",
    "TaskNotCompleted",
    "UnknownConfig",
    "UnknownStage",
    "UnknownTask",
    "UnknownWorker",
    "WorkInput",
    "real_clock",
]
