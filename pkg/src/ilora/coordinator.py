"""Coordinator node: bridges the constrained link to the public Internet.

The service loop receives REQUEST frames, verifies the sender against its
configured access-point peers, fetches the URL over HTTP, simplifies the
content, chunks it and pushes the chunks over the link with a stop-and-wait
acknowledgment exchange. Failures of any kind come back to the requester
as a single ERROR frame carrying an HTTP-style status code.

Pacing: the node sleeps `inter_chunk_delay` before every first transmission
of a chunk (measured from the previous chunk's acknowledgment, or from
fetch completion for the first chunk) so consecutive transmissions never
crowd the channel. Retransmissions are paced by the ack timeout instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from urllib.parse import urlsplit

import requests

from .frame import (
    HEADER_LEN,
    MAX_CHUNKS,
    MAX_FRAME_BYTES,
    ChunkSet,
    Frame,
    FrameError,
    FrameType,
    chunk_payload,
    decode_frame,
    encode_frame,
)
from .link import Detached, Interrupted, LinkError, LinkTimeout
from .simplify import simplify_content

log = logging.getLogger(__name__)

# local failure mapping onto HTTP-style statuses
STATUS_BAD_URL = 400
STATUS_FETCH_FAILED = 502
STATUS_FETCH_TIMEOUT = 504


class FetchError(Exception):
    pass


class InvalidUrl(FetchError):
    pass


class FetchTimeout(FetchError):
    pass


class ConnectionFailed(FetchError):
    pass


@dataclass
class FetchResult:
    status: int
    content_type: str
    body: bytes


@dataclass
class CoordinatorConfig:
    node_id: int
    expected_senders: frozenset[int]
    chunk_capacity: int = 250
    max_retries: int | None = 3  # None = retry forever
    ack_timeout: float = 2.0
    inter_chunk_delay: float = 0.0  # set from calibration; 0 disables pacing
    fetch_timeout: float = 10.0
    max_content_bytes: int | None = None  # default: 256 * chunk_capacity

    def __post_init__(self):
        self.expected_senders = frozenset(self.expected_senders)
        if not 1 <= self.chunk_capacity <= MAX_FRAME_BYTES - HEADER_LEN:
            raise ValueError(
                f"chunk_capacity must be 1..{MAX_FRAME_BYTES - HEADER_LEN}")
        if self.max_retries is not None and self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.ack_timeout <= 0 or self.fetch_timeout <= 0:
            raise ValueError("timeouts must be positive")
        if self.inter_chunk_delay < 0:
            raise ValueError("inter_chunk_delay must be >= 0")

    @property
    def content_limit(self) -> int:
        # hard ceiling from the 1-byte chunk id, truncated to a chunk boundary
        limit = MAX_CHUNKS * self.chunk_capacity
        if self.max_content_bytes is not None:
            limit = min(limit, self.max_content_bytes)
        return limit - (limit % self.chunk_capacity)


@dataclass
class SendReport:
    chunks_sent: int = 0
    retries_used: int = 0
    success: bool = False
    lt_start: float | None = None
    lt_end: float | None = None
    exhausted_chunk: int | None = None


@dataclass
class RequestOutcome:
    request_id: int
    url: str
    outcome: str  # "ok" | "error_sent" | "error_unacked" | "retries_exhausted"
    http_status: int | None = None
    chunks: int = 0
    retries: int = 0
    truncated: bool = False
    body_bytes: int = 0
    rt_start: float | None = None
    rt_end: float | None = None
    lt_start: float | None = None
    lt_end: float | None = None


def fetch_url(url: str, timeout: float = 10.0) -> FetchResult:
    """HTTP GET with redirect cap 5; returns the final status and raw body."""
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise InvalidUrl(f"not an absolute http/https URL: {url!r}")
    try:
        with requests.Session() as session:
            session.max_redirects = 5
            resp = session.get(url, timeout=timeout, allow_redirects=True)
    except requests.Timeout as exc:
        raise FetchTimeout(str(exc)) from exc
    except requests.RequestException as exc:
        raise ConnectionFailed(str(exc)) from exc
    return FetchResult(resp.status_code, resp.headers.get("Content-Type", ""),
                       resp.content)


class Coordinator:
    """One coordinator service bound to a link endpoint."""

    def __init__(self, cfg: CoordinatorConfig, endpoint, event_sink=None,
                 fetcher=fetch_url):
        self.cfg = cfg
        self.endpoint = endpoint
        self.event_sink = event_sink
        self.fetcher = fetcher
        self._running = False
        self._stopping = False

    # -- service loop --------------------------------------------------------

    def serve_forever(self) -> None:
        """Receive loop; returns only when stop() is called or the link dies."""
        self._running = True
        while self._running:
            try:
                raw = self.endpoint.recv(None)
            except Interrupted:
                continue
            except (Detached, LinkError):
                break
            try:
                frame = decode_frame(raw)
            except FrameError as exc:
                log.debug("undecodable frame dropped: %s", exc)
                continue
            if frame.recipient != self.cfg.node_id:
                continue
            if frame.ftype is not FrameType.REQUEST:
                log.debug("ignoring %s outside an exchange", frame.ftype.name)
                continue
            if frame.sender not in self.cfg.expected_senders:
                log.info("request from unexpected sender %d dropped", frame.sender)
                continue
            try:
                self.handle_request(frame)
            except Exception:
                log.exception("request handling failed; loop continues")
        self._running = False

    def stop(self) -> None:
        self._running = False
        self._stopping = True
        self.endpoint.nudge()

    # -- request handling ----------------------------------------------------

    def handle_request(self, req: Frame) -> RequestOutcome:
        rid, dest = req.request_id, req.sender
        out = RequestOutcome(request_id=rid, url="", outcome="error_sent")
        out.rt_start = self.endpoint.now()

        status: int | None = None
        result: FetchResult | None = None
        try:
            out.url = req.payload.decode("utf-8")
        except UnicodeDecodeError:
            status = STATUS_BAD_URL
        if status is None:
            try:
                result = self.fetcher(out.url, self.cfg.fetch_timeout)
            except InvalidUrl:
                status = STATUS_BAD_URL
            except FetchTimeout:
                status = STATUS_FETCH_TIMEOUT
            except ConnectionFailed:
                status = STATUS_FETCH_FAILED
        out.rt_end = self.endpoint.now()

        if status is None and result is not None and result.status != 200:
            status = result.status

        if status is not None:
            acked = self._send_error(dest, rid, status)
            out.outcome = "error_sent" if acked else "error_unacked"
            out.http_status = status
            log.info("request %d -> ERROR %d (%s)", rid, status, out.outcome)
            self._emit(out)
            return out

        assert result is not None
        body = simplify_content(result.body, result.content_type)
        if len(body) > self.cfg.content_limit:
            body = body[:self.cfg.content_limit]
            out.truncated = True
            log.warning("request %d: body truncated to %dB", rid, len(body))
        out.body_bytes = len(body)
        chunks = chunk_payload(body, self.cfg.chunk_capacity, request_id=rid)
        report = self.send_reliable(chunks, dest)
        out.outcome = "ok" if report.success else "retries_exhausted"
        out.http_status = 200
        out.chunks = report.chunks_sent
        out.retries = report.retries_used
        out.lt_start = report.lt_start
        out.lt_end = report.lt_end
        log.info("request %d: %d chunks, %d retries, %s",
                 rid, report.chunks_sent, report.retries_used, out.outcome)
        self._emit(out)
        return out

    # -- reliable transfer ---------------------------------------------------

    def send_reliable(self, chunks: ChunkSet, dest: int) -> SendReport:
        """Stop-and-wait: each chunk must be acknowledged before the next is
        sent; a missing or negative ACK triggers a retransmission, up to
        max_retries per chunk. Remaining chunks are not sent after exhaustion."""
        cfg = self.cfg
        report = SendReport()
        for chunk_id, data in chunks:
            self.endpoint.sleep(cfg.inter_chunk_delay)
            self._drain_stale()
            wire = encode_frame(Frame.data(
                cfg.node_id, dest, chunks.request_id, chunk_id, data,
                last=(chunk_id == chunks.total - 1)))
            attempts = 0
            acked = False
            while True:
                tx = self.endpoint.send(wire)
                attempts += 1
                if report.lt_start is None:
                    report.lt_start = tx.end
                report.lt_end = tx.end
                verdict = self._await_ack(dest, chunks.request_id)
                if verdict:
                    acked = True
                    break
                if cfg.max_retries is not None and attempts > cfg.max_retries:
                    break
            report.chunks_sent += 1
            report.retries_used += attempts - 1
            if not acked:
                report.exhausted_chunk = chunk_id
                log.warning("chunk %d unacknowledged after %d transmissions; "
                            "giving up", chunk_id, attempts)
                return report
        report.success = True
        return report

    def _send_error(self, dest: int, rid: int, status: int) -> bool:
        """Transmit an ERROR frame with the same retry discipline as a chunk."""
        wire = encode_frame(Frame.error(self.cfg.node_id, dest, rid, status))
        attempts = 0
        while True:
            self.endpoint.send(wire)
            attempts += 1
            if self._await_ack(dest, rid):
                return True
            if self.cfg.max_retries is not None and attempts > self.cfg.max_retries:
                return False

    def _await_ack(self, dest: int, rid: int) -> bool | None:
        """True on a positive ACK, False on a negative one, None on timeout.
        Anything else arriving mid-exchange is dropped."""
        deadline = self.endpoint.now() + self.cfg.ack_timeout
        while True:
            remaining = deadline - self.endpoint.now()
            if remaining <= 0:
                return None
            try:
                raw = self.endpoint.recv(remaining)
            except LinkTimeout:
                return None
            except Interrupted:
                if self._stopping:
                    return None
                continue
            try:
                frame = decode_frame(raw)
            except FrameError:
                continue
            if (frame.ftype is FrameType.ACK and frame.sender == dest
                    and frame.recipient == self.cfg.node_id
                    and frame.request_id == rid):
                return frame.ack_ok
            if frame.ftype is FrameType.REQUEST:
                log.info("REQUEST from %d dropped mid-transfer", frame.sender)

    def _drain_stale(self) -> None:
        # stray frames queued between exchanges must not satisfy the next wait
        while True:
            try:
                self.endpoint.recv(0)
            except (LinkTimeout, Interrupted):
                return

    def _emit(self, out: RequestOutcome) -> None:
        if self.event_sink is None:
            return
        self.event_sink({
            "event": "request",
            "request_id": out.request_id,
            "url": out.url,
            "outcome": out.outcome,
            "http_status": out.http_status,
            "chunks": out.chunks,
            "retries": out.retries,
            "truncated": out.truncated,
            "body_bytes": out.body_bytes,
            "rt_start": out.rt_start,
            "rt_end": out.rt_end,
            "lt_start": out.lt_start,
            "lt_end": out.lt_end,
        })
