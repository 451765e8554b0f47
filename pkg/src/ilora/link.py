"""Datagram-link backends: simulated broadcast channel and UDP tunnel.

The simulated channel is a broadcast medium with a LoRa airtime model:
every transmission occupies the channel for its time-on-air, any temporal
overlap of two transmissions destroys both, and per-frame loss is drawn
from a seeded RNG. Addressing is a receiver concern (frames carry
sender/recipient ids); the channel delivers to every other endpoint.

Clock modes:
- VIRTUAL: a single driver thread advances time event-by-event, and only
  while every registered service loop is parked inside recv()/sleep().
  Real work done between park points (HTTP fetches included) therefore
  takes zero simulated time, and runs are deterministic for a fixed seed.
- REAL: the driver fires events at wall-clock times; used for live demos.

The UDP tunnel carries the exact frame encoding as datagram payloads with
no loss or airtime simulation, for two-process deployments.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import queue
import random
import socket
import threading
import time
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

VIRTUAL = "virtual"
REAL = "real"


class LinkError(Exception):
    pass


class Oversize(LinkError):
    pass


class Detached(LinkError):
    pass


class LinkTimeout(LinkError):
    pass


class Interrupted(LinkError):
    """recv() was nudged by another thread; caller should re-evaluate."""


# ---------------------------------------------------------------------------
# LoRa airtime model


@dataclass(frozen=True)
class LoraParams:
    """SX127x-class radio parameters; defaults mirror the reference setup
    (SF7, 500 kHz, CR 4/5, 8-symbol preamble, explicit header, CRC on)."""

    frequency_hz: int = 868_000_000
    spreading_factor: int = 7
    bandwidth_hz: int = 500_000
    coding_rate: int = 1  # denominator 4/(4+cr)
    preamble_symbols: int = 8
    explicit_header: bool = True
    crc_on: bool = True
    low_data_rate_optimize: bool = False

    def __post_init__(self):
        if not 7 <= self.spreading_factor <= 12:
            raise ValueError(f"spreading_factor must be 7..12, got {self.spreading_factor}")
        if not 1 <= self.coding_rate <= 4:
            raise ValueError(f"coding_rate must be 1..4, got {self.coding_rate}")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")


def time_on_air(payload_bytes: int, p: LoraParams) -> float:
    """Seconds a frame of `payload_bytes` occupies the channel.

    Standard SX127x formula: t_sym = 2^SF / BW, preamble is
    (n_preamble + 4.25) symbols, and the payload adds
    8 + max(0, ceil((8*PL - 4*SF + 28 + 16*CRC - 20*IH) / (4*(SF - 2*DE))) * (CR + 4))
    symbols.
    """
    if payload_bytes < 0:
        raise ValueError("payload_bytes must be non-negative")
    sf = p.spreading_factor
    t_sym = (2.0 ** sf) / p.bandwidth_hz
    t_preamble = (p.preamble_symbols + 4.25) * t_sym
    ih = 0 if p.explicit_header else 1
    crc = 1 if p.crc_on else 0
    de = 1 if p.low_data_rate_optimize else 0
    numer = 8 * payload_bytes - 4 * sf + 28 + 16 * crc - 20 * ih
    denom = 4 * (sf - 2 * de)
    n_payload = 8 + max(-(-numer // denom) * (p.coding_rate + 4), 0)
    return t_preamble + n_payload * t_sym


# ---------------------------------------------------------------------------
# Channel configuration and topology


@dataclass
class ChannelConfig:
    lora: LoraParams = field(default_factory=LoraParams)
    loss_probability: float = 0.0
    max_frame_bytes: int = 255
    propagation_delay: float = 0.0  # 25 m line-of-sight is negligible
    clock_mode: str = VIRTUAL
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss_probability must be within [0, 1]")
        if self.max_frame_bytes < 6:
            raise ValueError("max_frame_bytes must be >= 6")
        if self.clock_mode not in (VIRTUAL, REAL):
            raise ValueError(f"clock_mode must be '{VIRTUAL}' or '{REAL}'")


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False,
               "on": True, "off": False}


def _coerce(text: str):
    lowered = text.lower()
    if lowered in _BOOL_WORDS:
        return _BOOL_WORDS[lowered]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text.strip("\"'")


def load_channel_config(path) -> ChannelConfig:
    """Parse a `key = value` config file into a ChannelConfig.

    Radio parameters are addressed as `lora.<field>`; `#` starts a comment.
    Unknown keys are an error so typos do not silently fall back to defaults.
    """
    lora_kw: dict = {}
    chan_kw: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key.startswith("lora."):
                target, key = lora_kw, key[len("lora."):]
                valid = LoraParams.__dataclass_fields__
            else:
                target, valid = chan_kw, ChannelConfig.__dataclass_fields__
            if key not in valid or key == "lora":
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            target[key] = _coerce(value)
    return ChannelConfig(lora=LoraParams(**lora_kw), **chan_kw)


@dataclass(frozen=True)
class Topology:
    """The deployment graph: access-point ids, coordinator ids, and the
    connectivity relation between them (star by default: one coordinator
    per access point, any number of access points per coordinator)."""

    access_points: frozenset[int]
    coordinators: frozenset[int]
    relation: frozenset[tuple[int, int]]

    def __post_init__(self):
        object.__setattr__(self, "access_points", frozenset(self.access_points))
        object.__setattr__(self, "coordinators", frozenset(self.coordinators))
        object.__setattr__(self, "relation", frozenset(self.relation))
        if self.access_points & self.coordinators:
            raise ValueError("access point and coordinator id sets must be disjoint")
        if not self.coordinators:
            raise ValueError("at least one coordinator is required")
        for apn, coord in self.relation:
            if apn not in self.access_points:
                raise ValueError(f"relation references unknown access point {apn}")
            if coord not in self.coordinators:
                raise ValueError(f"relation references unknown coordinator {coord}")
        for apn in self.access_points:
            partners = [c for a, c in self.relation if a == apn]
            if len(partners) != 1:
                raise ValueError(
                    f"access point {apn} must pair with exactly one coordinator, "
                    f"got {sorted(partners)}")

    def coordinator_of(self, apn_id: int) -> int:
        for a, c in self.relation:
            if a == apn_id:
                return c
        raise KeyError(apn_id)

    def apns_of(self, coord_id: int) -> frozenset[int]:
        return frozenset(a for a, c in self.relation if c == coord_id)


# ---------------------------------------------------------------------------
# Simulated channel

PENDING = "pending"
DELIVERED = "delivered"
LOST = "lost"
COLLIDED = "collided"

_EV_DELIVER = 0
_EV_TIMER = 1
_EV_BARRIER = 2


@dataclass
class TxRecord:
    sender: int
    start: float
    end: float
    nbytes: int
    payload: bytes
    outcome: str = PENDING
    _lost: bool = False
    _collided: bool = False


class _Wait:
    """One thread blocked inside recv()/sleep()/advance_clock().

    The driver (or a nudger) completes the wait atomically with the event
    that satisfies it, so virtual time never races ahead of a woken thread.
    """

    __slots__ = ("kind", "done", "expired", "nudged")

    def __init__(self, kind: str):
        self.kind = kind  # "recv" | "sleep" | "barrier"
        self.done = False
        self.expired = False
        self.nudged = False


class _Timer:
    __slots__ = ("deadline", "wait", "cancelled")

    def __init__(self, deadline: float, wait: _Wait | None):
        self.deadline = deadline
        self.wait = wait
        self.cancelled = False


class Endpoint:
    """One node's attachment to a simulated channel.

    A service loop may register as an *actor*: in virtual-clock mode the
    clock only advances while every actor is parked in recv()/sleep(), which
    serializes the simulation and keeps it deterministic. recv()/sleep()
    must then only be called from that loop's thread; send()/now()/nudge()
    are safe from any thread.
    """

    def __init__(self, channel: "Channel", node_id: int, actor: bool):
        self.node_id = node_id
        self.channel = channel
        self.is_actor = actor
        self._rx: list[tuple[float, bytes]] = []
        self._wait: _Wait | None = None
        self._nudged = False
        self._closed = False
        self._last_tx: tuple[float, float] | None = None

    def send(self, data: bytes) -> TxRecord:
        return self.channel._send(self, data)

    def recv(self, timeout: float | None = None) -> bytes:
        return self.channel._recv(self, timeout)

    def sleep(self, duration: float) -> None:
        self.channel._sleep(self, duration)

    def nudge(self) -> None:
        self.channel._nudge(self)

    def now(self) -> float:
        return self.channel.now()

    def set_actor(self, enabled: bool) -> None:
        """Register or deregister this endpoint's loop for the virtual-clock
        gate. Deregister when a scripted exchange finishes, or the idle
        endpoint will hold the clock still forever."""
        self.channel._set_actor(self, enabled)

    def close(self) -> None:
        self.channel._close_endpoint(self)


class Channel:
    """Broadcast medium shared by all attached endpoints."""

    def __init__(self, config: ChannelConfig | None = None):
        self.config = config or ChannelConfig()
        self.virtual = self.config.clock_mode == VIRTUAL
        self._cond = threading.Condition()
        self._endpoints: dict[int, Endpoint] = {}
        self._actors: list[Endpoint] = []
        self._waits: set[_Wait] = set()
        self._events: list[tuple[float, int, int, object]] = []
        self._seq = itertools.count()
        self._now = 0.0
        self._t0 = time.monotonic()
        self._rng = random.Random(self.config.rng_seed)
        self._inflight: list[TxRecord] = []
        self._closed = False
        self.trace: list[TxRecord] = []
        self.events: list[tuple[float, str, int, int]] = []  # (time, outcome, sender, nbytes)
        self._driver = threading.Thread(target=self._drive, name="channel-driver",
                                        daemon=True)
        self._driver.start()

    # -- public surface ----------------------------------------------------

    def attach(self, node_id: int, actor: bool = False) -> Endpoint:
        with self._cond:
            if self._closed:
                raise Detached("channel is closed")
            if node_id in self._endpoints:
                raise LinkError(f"node id {node_id} already attached")
            ep = Endpoint(self, node_id, actor)
            self._endpoints[node_id] = ep
            if actor:
                self._actors.append(ep)
            self._cond.notify_all()
            return ep

    def now(self) -> float:
        if self.virtual:
            with self._cond:
                return self._now
        return time.monotonic() - self._t0

    def advance_clock(self, until: float) -> list[tuple[float, str, int, int]]:
        """Process every event with timestamp <= until (virtual mode only);
        returns the channel events fired by this call."""
        if not self.virtual:
            raise LinkError("advance_clock requires the virtual clock")
        wait = _Wait("barrier")
        with self._cond:
            start = len(self.events)
            heapq.heappush(self._events,
                           (until, next(self._seq), _EV_BARRIER, _Timer(until, wait)))
            self._waits.add(wait)
            self._cond.notify_all()
            try:
                while not wait.done and not self._closed:
                    self._cond.wait()
            finally:
                self._waits.discard(wait)
            return list(self.events[start:])

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        self._driver.join(timeout=5)

    # -- endpoint operations (called via Endpoint) --------------------------

    def _send(self, ep: Endpoint, data: bytes) -> TxRecord:
        if len(data) > self.config.max_frame_bytes:
            raise Oversize(f"{len(data)}B exceeds max_frame_bytes="
                           f"{self.config.max_frame_bytes}")
        with self._cond:
            if self._closed or ep._closed:
                raise Detached("endpoint is closed")
            start = self._now if self.virtual else time.monotonic() - self._t0
            end = start + time_on_air(len(data), self.config.lora)
            tx = TxRecord(ep.node_id, start, end, len(data), bytes(data))
            # Any temporal overlap destroys both transmissions (no capture).
            self._inflight = [t for t in self._inflight if t.end > start]
            for other in self._inflight:
                if other.start < end and start < other.end:
                    other._collided = True
                    tx._collided = True
            if self._rng.random() < self.config.loss_probability:
                tx._lost = True
            self._inflight.append(tx)
            self.trace.append(tx)
            ep._last_tx = (start, end)
            arrival = end + self.config.propagation_delay
            for node_id in sorted(self._endpoints):
                if node_id != ep.node_id:
                    heapq.heappush(self._events,
                                   (arrival, next(self._seq), _EV_DELIVER,
                                    (self._endpoints[node_id], tx)))
            if not any(node_id != ep.node_id for node_id in self._endpoints):
                # no receivers: resolve immediately so the trace stays complete
                heapq.heappush(self._events, (arrival, next(self._seq), _EV_DELIVER,
                                              (None, tx)))
            self._cond.notify_all()
            return tx

    def _complete_wait(self, wait: _Wait, ep: Endpoint | None = None) -> None:
        # must hold the lock; ends a wait atomically with its wake-up cause
        wait.done = True
        self._waits.discard(wait)
        if ep is not None and ep._wait is wait:
            ep._wait = None

    def _recv(self, ep: Endpoint, timeout: float | None) -> bytes:
        with self._cond:
            if self._closed or ep._closed:
                raise Detached("endpoint is closed")
            if ep._rx:
                return ep._rx.pop(0)[1]
            if ep._nudged:
                ep._nudged = False
                raise Interrupted()
            if timeout is not None and timeout <= 0:
                raise LinkTimeout("empty receive queue")
            wait = _Wait("recv")
            timer = None
            if timeout is not None and self.virtual:
                timer = _Timer(self._now + timeout, wait)
                heapq.heappush(self._events,
                               (timer.deadline, next(self._seq), _EV_TIMER, timer))
            real_deadline = None if timeout is None else \
                (time.monotonic() - self._t0) + timeout
            ep._wait = wait
            self._waits.add(wait)
            self._cond.notify_all()
            try:
                while not wait.done and not self._closed and not ep._closed:
                    if not self.virtual and real_deadline is not None:
                        remaining = real_deadline - (time.monotonic() - self._t0)
                        if remaining <= 0:
                            wait.expired = True
                            break
                        self._cond.wait(remaining)
                    else:
                        self._cond.wait()
            finally:
                if timer:
                    timer.cancelled = True
                self._complete_wait(wait, ep)
                self._cond.notify_all()
            if wait.nudged:
                raise Interrupted()
            if ep._rx:
                return ep._rx.pop(0)[1]
            if self._closed or ep._closed:
                raise Detached("endpoint is closed")
            if wait.expired:
                raise LinkTimeout(f"no frame within {timeout}s")
            raise LinkError("recv wait ended without a cause")  # pragma: no cover

    def _sleep(self, ep: Endpoint, duration: float) -> None:
        if duration <= 0:
            return
        with self._cond:
            if self._closed or ep._closed:
                raise Detached("endpoint is closed")
            wait = _Wait("sleep")
            if self.virtual:
                timer = _Timer(self._now + duration, wait)
                heapq.heappush(self._events,
                               (timer.deadline, next(self._seq), _EV_TIMER, timer))
                ep._wait = wait
                self._waits.add(wait)
                self._cond.notify_all()
                try:
                    while not wait.done and not self._closed and not ep._closed:
                        self._cond.wait()
                finally:
                    self._complete_wait(wait, ep)
                    self._cond.notify_all()
            else:
                deadline = (time.monotonic() - self._t0) + duration
                while not self._closed and not ep._closed:
                    remaining = deadline - (time.monotonic() - self._t0)
                    if remaining <= 0:
                        return
                    self._cond.wait(remaining)

    def _nudge(self, ep: Endpoint) -> None:
        with self._cond:
            wait = ep._wait
            if wait is not None and wait.kind == "recv":
                wait.nudged = True
                self._complete_wait(wait, ep)
            else:
                ep._nudged = True
            self._cond.notify_all()

    def _set_actor(self, ep: Endpoint, enabled: bool) -> None:
        with self._cond:
            if enabled and ep not in self._actors:
                self._actors.append(ep)
            elif not enabled and ep in self._actors:
                self._actors.remove(ep)
            ep.is_actor = enabled
            self._cond.notify_all()

    def _close_endpoint(self, ep: Endpoint) -> None:
        with self._cond:
            ep._closed = True
            if ep in self._actors:
                self._actors.remove(ep)
            if ep._wait is not None:
                self._complete_wait(ep._wait, ep)
            self._endpoints.pop(ep.node_id, None)
            self._cond.notify_all()

    # -- driver -------------------------------------------------------------

    def _may_advance(self) -> bool:
        # virtual time moves only while every service loop is parked and at
        # least one thread is blocked waiting for it to move
        return (all(ep._wait is not None for ep in self._actors)
                and bool(self._waits))

    def _drive(self) -> None:
        with self._cond:
            while not self._closed:
                if not self._events:
                    self._cond.wait()
                    continue
                if self.virtual:
                    if not self._may_advance():
                        self._cond.wait()
                        continue
                else:
                    wait_for = self._events[0][0] - (time.monotonic() - self._t0)
                    if wait_for > 0:
                        self._cond.wait(wait_for)
                        continue
                when, _, kind, payload = heapq.heappop(self._events)
                if kind in (_EV_TIMER, _EV_BARRIER):
                    if payload.cancelled or payload.wait.done:
                        continue  # stale timers must not advance the clock
                    if self.virtual:
                        self._now = max(self._now, when)
                    payload.wait.expired = True
                    self._complete_wait(payload.wait)
                    for ep in self._endpoints.values():
                        if ep._wait is payload.wait:
                            ep._wait = None
                else:
                    if self.virtual:
                        self._now = max(self._now, when)
                    ep, tx = payload
                    self._resolve(when, tx)
                    if tx.outcome == DELIVERED and ep is not None and not ep._closed:
                        if ep._last_tx and ep._last_tx[0] <= when < ep._last_tx[1]:
                            pass  # half-duplex: deaf while transmitting
                        else:
                            ep._rx.append((when, tx.payload))
                            if ep._wait is not None and ep._wait.kind == "recv":
                                self._complete_wait(ep._wait, ep)
                self._cond.notify_all()

    def _resolve(self, when: float, tx: TxRecord) -> None:
        if tx.outcome != PENDING:
            return
        if tx._collided:
            tx.outcome = COLLIDED
        elif tx._lost:
            tx.outcome = LOST
        else:
            tx.outcome = DELIVERED
        self.events.append((when, tx.outcome, tx.sender, tx.nbytes))


# ---------------------------------------------------------------------------
# UDP tunnel backend

_UDP_NUDGE = object()
_UDP_CLOSE = object()


class UdpEndpoint:
    """Real-network link endpoint: frames travel verbatim as UDP datagrams.

    Loss and airtime are not simulated; every send goes to every configured
    peer, mirroring the broadcast medium.
    """

    def __init__(self, node_id: int, listen: tuple[str, int],
                 peers: dict[int, tuple[str, int]], max_frame_bytes: int = 255):
        self.node_id = node_id
        self.peers = dict(peers)
        self.max_frame_bytes = max_frame_bytes
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind(listen)
        self._queue: queue.Queue = queue.Queue()
        self._t0 = time.monotonic()
        self._closed = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def _read_loop(self) -> None:
        while not self._closed:
            try:
                data, _ = self._sock.recvfrom(65536)
            except OSError:
                break
            self._queue.put(data)

    def send(self, data: bytes) -> TxRecord:
        if len(data) > self.max_frame_bytes:
            raise Oversize(f"{len(data)}B exceeds max_frame_bytes={self.max_frame_bytes}")
        if self._closed:
            raise Detached("endpoint is closed")
        now = self.now()
        for addr in self.peers.values():
            self._sock.sendto(data, addr)
        return TxRecord(self.node_id, now, now, len(data), bytes(data),
                        outcome=DELIVERED)

    def recv(self, timeout: float | None = None) -> bytes:
        if self._closed:
            raise Detached("endpoint is closed")
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise LinkTimeout(f"no datagram within {timeout}s") from None
        if item is _UDP_NUDGE:
            raise Interrupted()
        if item is _UDP_CLOSE:
            raise Detached("endpoint is closed")
        return item

    def sleep(self, duration: float) -> None:
        time.sleep(duration)

    def nudge(self) -> None:
        self._queue.put(_UDP_NUDGE)

    def now(self) -> float:
        return time.monotonic() - self._t0

    def close(self) -> None:
        self._closed = True
        self._queue.put(_UDP_CLOSE)
        self._sock.close()
