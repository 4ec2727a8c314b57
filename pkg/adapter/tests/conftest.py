"""Adapter tests talk to a real hub over HTTP.

The adapter package itself has no dependencies; the tests depend on the
hub implementation (installed separately) and on its repository-level
conformance suite, reached by putting the repository root on sys.path.
"""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from turnbench.blobstore import BlobStore
from turnbench.hub.core import Hub
from turnbench.hub.server import HubServer
from turnbench.presets import install_presets


@pytest.fixture()
def served():
    hub = Hub(BlobStore(), default_lease_ms=5_000)
    install_presets(hub)
    server = HubServer(hub, port=0).start()
    try:
        yield hub, server.url
    finally:
        server.stop()
