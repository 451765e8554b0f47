"""Access-point node: local HTTP interface plus frame reassembly.

Browsers on the tethered network talk to a small HTTP server (GET / for
the UI page, POST /submit to request a URL, GET /received to poll
progress) while a frame loop receives DATA/ERROR frames from the paired
coordinator, acknowledges them and assembles the body chunk by chunk.

One request is in flight at a time; a second submission is refused with
HTTP 409 until the current transfer reaches a terminal state. Frames are
accepted only when sender, recipient and request id all match the active
transfer; the single exception is DATA for an unknown request id, which
is acknowledged but discarded so a coordinator still retransmitting after
an access-point restart can terminate cleanly.
"""

from __future__ import annotations

import base64
import json
import logging
import mimetypes
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from .frame import (
    HEADER_LEN,
    Frame,
    FrameError,
    FrameType,
    decode_frame,
    encode_frame,
)
from .link import Detached, Interrupted, LinkError, LinkTimeout
from .webutil import QuietHTTPServer

log = logging.getLogger(__name__)

PENDING = "PENDING"
RECEIVING = "RECEIVING"
COMPLETE = "COMPLETE"
ERROR = "ERROR"
TIMEOUT = "TIMEOUT"

_ACTIVE = (PENDING, RECEIVING)


class SubmitError(Exception):
    http_status = 500


class InvalidUrl(SubmitError):
    http_status = 400


class UrlTooLong(SubmitError):
    http_status = 414


class Busy(SubmitError):
    http_status = 409


@dataclass
class ApnConfig:
    node_id: int
    coordinator_id: int
    http_listen: str = "127.0.0.1:0"
    request_timeout: float = 120.0
    max_frame_bytes: int = 255

    def __post_init__(self):
        if self.coordinator_id == self.node_id:
            raise ValueError("coordinator_id must differ from node_id")
        if self.max_url_bytes < 1:
            raise ValueError("max_frame_bytes leaves no room for a URL")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")

    @property
    def max_url_bytes(self) -> int:
        return self.max_frame_bytes - HEADER_LEN


@dataclass
class AssemblyState:
    """Per-request reassembly buffer; chunk ids always form a gapless
    prefix 0..k because the link protocol is stop-and-wait."""

    request_id: int
    url: str
    started_at: float
    status: str = PENDING
    first_response_at: float | None = None
    completed_at: float | None = None
    chunks: dict[int, bytes] = field(default_factory=dict)
    last_seen: int | None = None
    http_status: int | None = None

    def content(self) -> bytes:
        return b"".join(self.chunks[i] for i in range(len(self.chunks)))


class Apn:
    """One access-point service bound to a link endpoint."""

    def __init__(self, cfg: ApnConfig, endpoint, event_sink=None,
                 ui_path: str | None = None):
        self.cfg = cfg
        self.endpoint = endpoint
        self.event_sink = event_sink
        self.ui_path = Path(ui_path) if ui_path else None
        self._lock = threading.Lock()
        self._state: AssemblyState | None = None
        self._next_rid = 1
        self._running = False
        self._httpd: ThreadingHTTPServer | None = None
        self._threads: list[threading.Thread] = []

    # -- browser-facing operations -------------------------------------------

    def submit_url(self, url: str) -> int:
        """Validate, remember, and forward one URL request; returns the
        request id. Raises Busy while a transfer is active."""
        with self._lock:
            if self._state is not None and self._state.status in _ACTIVE:
                raise Busy("a transfer is already in flight")
            parts = urlsplit(url)
            if parts.scheme not in ("http", "https") or not parts.netloc:
                raise InvalidUrl(f"not an absolute http/https URL: {url!r}")
            encoded = url.encode("utf-8")
            if len(encoded) > self.cfg.max_url_bytes:
                raise UrlTooLong(
                    f"URL is {len(encoded)}B; limit {self.cfg.max_url_bytes}B")
            rid = self._next_rid
            self._next_rid = (rid + 1) % 256
            tx = self.endpoint.send(encode_frame(Frame.request(
                self.cfg.node_id, self.cfg.coordinator_id, rid, url)))
            self._state = AssemblyState(request_id=rid, url=url,
                                        started_at=tx.start)
        self.endpoint.nudge()  # re-arm the frame loop's deadline
        log.info("submitted request %d for %s", rid, url)
        return rid

    def received_view(self) -> dict:
        """Snapshot of the active (or last) transfer; content is always a
        prefix of the final body."""
        with self._lock:
            st = self._state
            if st is None:
                return {"request_id": None, "status": None, "url": None,
                        "chunks_received": 0, "complete": False,
                        "http_status": None, "content": "",
                        "content_encoding": "utf-8"}
            body = st.content()
            try:
                content = body.decode("utf-8")
                encoding = "utf-8"
            except UnicodeDecodeError:
                content = base64.b64encode(body).decode("ascii")
                encoding = "base64"
            return {"request_id": st.request_id, "status": st.status,
                    "url": st.url, "chunks_received": len(st.chunks),
                    "complete": st.status == COMPLETE,
                    "http_status": st.http_status, "content": content,
                    "content_encoding": encoding}

    # -- frame handling --------------------------------------------------------

    def on_frame(self, frame: Frame) -> None:
        if frame.recipient != self.cfg.node_id:
            return
        if frame.sender != self.cfg.coordinator_id:
            log.debug("frame from unexpected sender %d ignored", frame.sender)
            return
        if frame.ftype is FrameType.DATA:
            self._on_data(frame)
        elif frame.ftype is FrameType.ERROR:
            self._on_error(frame)
        else:
            log.debug("%s frame ignored by access point", frame.ftype.name)

    def _ack(self, rid: int) -> None:
        self.endpoint.send(encode_frame(Frame.ack(
            self.cfg.node_id, self.cfg.coordinator_id, rid, ok=True)))

    def _on_data(self, frame: Frame) -> None:
        now = self.endpoint.now()
        with self._lock:
            st = self._state
            if st is None or frame.request_id != st.request_id \
                    or st.status not in _ACTIVE:
                # stale retransmission: acknowledge so the sender can finish,
                # store nothing
                log.debug("stale DATA rid=%d chunk=%d re-acked",
                          frame.request_id, frame.chunk_id)
                self._ack(frame.request_id)
                return
            expected = len(st.chunks)
            if frame.chunk_id < expected:
                self._ack(frame.request_id)  # duplicate after a lost ACK
                return
            if frame.chunk_id > expected:
                log.warning("chunk gap: got %d, expected %d; dropped",
                            frame.chunk_id, expected)
                return
            st.chunks[frame.chunk_id] = frame.payload
            if st.first_response_at is None:
                st.first_response_at = now
            st.status = RECEIVING
            if frame.last:
                st.last_seen = frame.chunk_id
                st.status = COMPLETE
                st.completed_at = now
                st.http_status = 200
            self._ack(frame.request_id)
            if st.status == COMPLETE:
                log.info("request %d complete: %d chunks, %dB",
                         st.request_id, len(st.chunks), len(st.content()))
                self._emit(st)

    def _on_error(self, frame: Frame) -> None:
        now = self.endpoint.now()
        with self._lock:
            st = self._state
            if st is None or frame.request_id != st.request_id \
                    or st.status not in _ACTIVE:
                self._ack(frame.request_id)
                return
            st.status = ERROR
            st.http_status = frame.error_status()
            if st.first_response_at is None:
                st.first_response_at = now
            st.completed_at = now
            self._ack(frame.request_id)
            log.info("request %d failed upstream: HTTP %d",
                     st.request_id, st.http_status)
            self._emit(st)

    def _emit(self, st: AssemblyState) -> None:
        if self.event_sink is None:
            return
        self.event_sink({
            "event": "transfer",
            "request_id": st.request_id,
            "url": st.url,
            "status": st.status,
            "http_status": st.http_status,
            "bytes_received": len(st.content()),
            "url_start": st.started_at,
            "url_end": st.first_response_at,
            "completed_at": st.completed_at,
        })

    # -- service loops ---------------------------------------------------------

    def frame_loop(self) -> None:
        self._running = True
        while self._running:
            with self._lock:
                st = self._state
                deadline = None
                if st is not None and st.status in _ACTIVE:
                    deadline = st.started_at + self.cfg.request_timeout
            try:
                if deadline is None:
                    raw = self.endpoint.recv(None)
                else:
                    raw = self.endpoint.recv(max(deadline - self.endpoint.now(), 0))
            except Interrupted:
                continue
            except LinkTimeout:
                self._mark_timed_out()
                continue
            except (Detached, LinkError):
                break
            try:
                frame = decode_frame(raw)
            except FrameError as exc:
                log.debug("undecodable frame dropped: %s", exc)
                continue
            self.on_frame(frame)
        self._running = False

    def _mark_timed_out(self) -> None:
        now = self.endpoint.now()
        with self._lock:
            st = self._state
            if st is None or st.status not in _ACTIVE:
                return
            if now < st.started_at + self.cfg.request_timeout:
                return
            st.status = TIMEOUT
            st.completed_at = now
            log.warning("request %d timed out with %d chunks received",
                        st.request_id, len(st.chunks))
            self._emit(st)

    # -- lifecycle ---------------------------------------------------------------

    @property
    def http_address(self) -> tuple[str, int]:
        assert self._httpd is not None, "start() first"
        return self._httpd.server_address[:2]

    @property
    def http_url(self) -> str:
        host, port = self.http_address
        return f"http://{host}:{port}"

    def start(self) -> "Apn":
        """Run the HTTP server and the frame loop on daemon threads."""
        host, _, port = self.cfg.http_listen.partition(":")
        self._httpd = QuietHTTPServer((host or "127.0.0.1", int(port or 0)),
                                      _ApnHandler)
        self._httpd.apn = self  # type: ignore[attr-defined]
        http_thread = threading.Thread(
            target=lambda: self._httpd.serve_forever(poll_interval=0.05),
            name="apn-http", daemon=True)
        loop_thread = threading.Thread(target=self.frame_loop,
                                       name="apn-frames", daemon=True)
        self._threads = [http_thread, loop_thread]
        http_thread.start()
        loop_thread.start()
        return self

    def stop(self) -> None:
        self._running = False
        self.endpoint.nudge()
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        for t in self._threads:
            t.join(timeout=5)

    def join(self) -> None:
        """Block until the frame loop exits."""
        self._threads[1].join()

    def serve_forever(self) -> None:
        self.start()
        self.join()


INDEX_HTML = """<!DOCTYPE html>
<html>
<head>
<title>ILoRa access point</title>
<style>
body { font-family: sans-serif; margin: 2em; max-width: 40em; }
input[name=url] { width: 100%; padding: 6px; }
button { margin-top: 8px; padding: 6px 14px; }
</style>
</head>
<body>
<h1>ILoRa access point</h1>
<p>Request a web resource over the narrowband link.</p>
<form method="post" action="/submit">
<input name="url" placeholder="http://example.org/page">
<button type="submit">Fetch</button>
</form>
<p><a href="/received">Transfer status</a></p>
</body>
</html>
"""


class _ApnHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    @property
    def apn(self) -> Apn:
        return self.server.apn  # type: ignore[attr-defined]

    def do_GET(self):
        path = urlsplit(self.path).path
        if path == "/received":
            self._json(200, self.apn.received_view())
        elif path == "/":
            self._ui_file("index.html")
        else:
            self._ui_file(path.lstrip("/"))

    def do_POST(self):
        if urlsplit(self.path).path != "/submit":
            self._json(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length).decode("utf-8", errors="replace")
        ctype = self.headers.get("Content-Type", "")
        if "json" in ctype:
            try:
                url = json.loads(body or "{}").get("url", "")
            except json.JSONDecodeError:
                url = ""
        else:
            url = parse_qs(body).get("url", [""])[0]
        try:
            rid = self.apn.submit_url(url)
        except SubmitError as exc:
            self._json(exc.http_status, {"error": str(exc)})
            return
        self._json(200, {"request_id": rid})

    def _ui_file(self, name: str):
        target = None
        ui = self.apn.ui_path
        if ui is not None and ".." not in Path(name).parts:
            if ui.is_dir():
                target = ui / name
            elif name == "index.html":
                target = ui  # a single file stands in for the whole UI
        if target is not None and target.is_file():
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self._raw(200, ctype, target.read_bytes())
            return
        if name == "index.html":
            self._raw(200, "text/html; charset=utf-8", INDEX_HTML.encode())
        else:
            self._json(404, {"error": "not found"})

    def _json(self, status: int, doc: dict):
        self._raw(status, "application/json",
                  json.dumps(doc).encode("utf-8"))

    def _raw(self, status: int, ctype: str, data: bytes):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):
        log.debug("apn-http: " + fmt, *args)
