"""Mock web origin serving the size-exact benchmark fixtures.

Routes mirror the reference deployment: /api/data (930 B JSON),
/api/data/1 (67 B JSON), /loro (2225 B HTML+CSS), /error/{code}, plus a
/slow?s=<seconds> helper for exercising fetch timeouts.
"""

from __future__ import annotations

import logging
import threading
import time
from http.server import BaseHTTPRequestHandler

from .webutil import QuietHTTPServer
from importlib import resources
from urllib.parse import parse_qs, urlsplit

log = logging.getLogger(__name__)


def _fixture(name: str) -> bytes:
    return resources.files("ilora").joinpath("fixtures", name).read_bytes()


class OriginFixtures:
    """Benchmark bodies; byte lengths are part of the contract."""

    def __init__(self):
        self.api_data = _fixture("api_data.json")
        self.api_data_1 = _fixture("api_data_1.json")
        self.loro_page = _fixture("loro.html")

    def routes(self) -> dict[str, tuple[str, bytes]]:
        return {
            "/api/data": ("application/json", self.api_data),
            "/api/data/1": ("application/json", self.api_data_1),
            "/loro": ("text/html; charset=utf-8", self.loro_page),
        }


class _OriginHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def do_GET(self):
        parts = urlsplit(self.path)
        routes = self.server.routes  # type: ignore[attr-defined]
        if parts.path in routes:
            ctype, body = routes[parts.path]
            self._reply(200, ctype, body)
            return
        if parts.path.startswith("/error/"):
            try:
                code = int(parts.path.rsplit("/", 1)[1])
            except ValueError:
                self._reply(404, "text/plain", b"bad error code")
                return
            self._reply(code, "text/plain", f"error {code}".encode())
            return
        if parts.path == "/slow":
            delay = float(parse_qs(parts.query).get("s", ["1"])[0])
            time.sleep(delay)
            self._reply(200, "text/plain", b"slow reply")
            return
        if parts.path == "/empty":
            self._reply(200, "text/plain", b"")
            return
        if parts.path.startswith("/bounce/"):
            # /bounce/N hops N redirects before landing on /api/data/1
            hops = int(parts.path.rsplit("/", 1)[1])
            if hops <= 0:
                self._reply(200, "application/json",
                            self.server.routes["/api/data/1"][1])  # type: ignore[attr-defined]
                return
            self.send_response(302)
            self.send_header("Location", f"/bounce/{hops - 1}")
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        self._reply(404, "text/plain", b"not found")

    def _reply(self, status: int, ctype: str, body: bytes):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        log.debug("origin: " + fmt, *args)


class OriginServer:
    """Threaded mock origin; bind to port 0 for an ephemeral port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 fixtures: OriginFixtures | None = None):
        self.fixtures = fixtures or OriginFixtures()
        self._httpd = QuietHTTPServer((host, port), _OriginHandler)
        self._httpd.routes = self.fixtures.routes()  # type: ignore[attr-defined]
        self._thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05),
            name="mock-origin", daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "OriginServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "OriginServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_mock_origin(listen_address: str) -> None:
    """Run the origin in the foreground (CLI entry)."""
    host, _, port = listen_address.partition(":")
    server = OriginServer(host or "0.0.0.0", int(port or 0))
    log.info("mock origin listening on %s", server.base_url)
    server._thread.start()
    server._thread.join()
