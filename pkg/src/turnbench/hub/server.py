"""Runs the hub API under uvicorn with a background lease sweeper.

The sweeper keeps expiry from depending on claim traffic: every quarter
lease period it requeues lapsed stages, so a stage abandoned by a dead
worker becomes claimable even while every live worker is long-polling.
"""

from __future__ import annotations

import contextlib
import threading
import time
from pathlib import Path

import uvicorn

from .api import create_app
from .core import Hub


class HubServer:
    """Threaded uvicorn wrapper; ``start()`` returns once the port is bound."""

    def __init__(
        self,
        hub: Hub,
        host: str = "127.0.0.1",
        port: int = 8321,
        token: str | None = None,
        ui_dir: str | Path | None = None,
    ):
        self.hub = hub
        self.app = create_app(hub, token=token, ui_dir=ui_dir)
        self._config = uvicorn.Config(
            self.app, host=host, port=port, log_level="warning", access_log=False
        )
        self._server = uvicorn.Server(self._config)
        self._thread: threading.Thread | None = None
        self._sweeper: threading.Thread | None = None
        self._stop_sweeper = threading.Event()

    @property
    def url(self) -> str:
        host, port = self._bound_address()
        return f"http://{host}:{port}"

    def _bound_address(self) -> tuple[str, int]:
        for server in self._server.servers:
            for sock in server.sockets:
                host, port = sock.getsockname()[:2]
                return self._config.host, port
        return self._config.host, self._config.port

    def start(self, ready_timeout: float = 10.0) -> "HubServer":
        self._thread = threading.Thread(
            target=self._server.run, name="hub-http", daemon=True
        )
        self._thread.start()
        deadline = time.monotonic() + ready_timeout
        while not self._server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("hub server did not start in time")
            if not self._thread.is_alive():
                raise RuntimeError("hub server exited during startup")
            time.sleep(0.01)
        self._sweeper = threading.Thread(
            target=self._sweep_loop, name="lease-sweeper", daemon=True
        )
        self._sweeper.start()
        return self

    def _sweep_loop(self) -> None:
        period_s = self.hub.default_lease_ms / 4 / 1000.0
        while not self._stop_sweeper.wait(period_s):
            self.hub.expire_leases_now()

    def stop(self, join_timeout: float = 10.0) -> None:
        self._stop_sweeper.set()
        self._server.should_exit = True
        if self._sweeper is not None:
            self._sweeper.join(join_timeout)
        if self._thread is not None:
            self._thread.join(join_timeout)


@contextlib.contextmanager
def run_server(hub: Hub, **kwargs):
    """``with run_server(hub) as url:`` for tests and scripts."""
    server = HubServer(hub, **kwargs)
    server.start()
    try:
        yield server.url
    finally:
        server.stop()
