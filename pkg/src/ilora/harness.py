"""Benchmark harness: mock origin + coordinator + access point over the
simulated channel, driven through the access point's real HTTP interface.

Reproduces the reference experiment: the inter-chunk pacing delay is
calibrated once so the 930 B / 250 B-chunk transfer hits the published
request-fulfill time, then every other (chunk size, fixture) combination
is a genuine prediction of that single-point fit. Results are written as
CSV, one row per round.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import threading
import time
from dataclasses import dataclass

import requests

from .apn import Apn, ApnConfig
from .coordinator import Coordinator, CoordinatorConfig
from .link import Channel, ChannelConfig, LoraParams, Topology
from .metrics import compute_rft, join_request_timing, round_us, throughput
from .origin import OriginServer, serve_mock_origin  # noqa: F401  (re-export)

log = logging.getLogger(__name__)

COORD_ID = 0
APN_ID = 1
STAR = Topology(access_points={APN_ID}, coordinators={COORD_ID},
                relation={(APN_ID, COORD_ID)})

# published reference point used for single-point calibration
CALIBRATION_CHUNK_SIZE = 250
CALIBRATION_TARGET_RFT = 7.0265

CSV_COLUMNS = ["chunk_size", "round", "status", "rft_s", "url_total_s",
               "rt_total_s", "lt_total_s", "throughput_bps", "chunks",
               "retries"]


class NoConvergence(Exception):
    pass


@dataclass
class ExperimentConfig:
    chunk_sizes: tuple[int, ...] = (150, 200, 250)
    rounds: int = 20
    target_path: str = "/api/data"
    loss_probability: float = 0.0
    rng_seed: int = 0
    inter_chunk_delay: float | None = None  # None -> calibrate
    ack_timeout: float = 2.0
    request_timeout: float = 120.0
    max_retries: int | None = 3
    # the origin URL rides in the REQUEST frame, so its length (port digits
    # included) feeds the airtime; pin the port when runs must be bit-equal
    origin_port: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        for size in self.chunk_sizes:
            if not 1 <= size <= 250:
                raise ValueError(f"chunk size {size} outside frame capacity")


class SimStack:
    """One origin + coordinator + access point wired over a virtual-clock
    channel; rounds are driven through the access point's HTTP interface
    exactly as a browser would."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.origin = OriginServer(port=cfg.origin_port).start()
        self.channel = Channel(ChannelConfig(
            lora=LoraParams(), loss_probability=cfg.loss_probability,
            rng_seed=cfg.rng_seed))
        self.coord_events: list[dict] = []
        self.apn_events: list[dict] = []
        self.coord_cfg = CoordinatorConfig(
            node_id=COORD_ID, expected_senders=STAR.apns_of(COORD_ID),
            chunk_capacity=cfg.chunk_sizes[-1],
            max_retries=cfg.max_retries, ack_timeout=cfg.ack_timeout,
            inter_chunk_delay=cfg.inter_chunk_delay or 0.0)
        self.coordinator = Coordinator(
            self.coord_cfg, self.channel.attach(COORD_ID, actor=True),
            event_sink=self.coord_events.append)
        self.apn = Apn(
            ApnConfig(node_id=APN_ID,
                      coordinator_id=STAR.coordinator_of(APN_ID),
                      http_listen="127.0.0.1:0",
                      request_timeout=cfg.request_timeout),
            self.channel.attach(APN_ID, actor=True),
            event_sink=self.apn_events.append)
        self._coord_thread = threading.Thread(
            target=self.coordinator.serve_forever, name="coordinator",
            daemon=True)
        self._coord_thread.start()
        self.apn.start()
        self._http = requests.Session()

    # -- lifecycle -----------------------------------------------------------

    def close(self) -> None:
        self._http.close()
        self.apn.stop()
        self.coordinator.stop()
        self.channel.close()
        self._coord_thread.join(timeout=5)
        self.origin.stop()

    def __enter__(self) -> "SimStack":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- knobs ----------------------------------------------------------------

    def set_chunk_size(self, size: int) -> None:
        self.coord_cfg.chunk_capacity = size

    def set_delay(self, delay: float) -> None:
        self.coord_cfg.inter_chunk_delay = delay

    # -- one experiment round --------------------------------------------------

    def run_round(self, path: str, poll_interval: float = 0.0005,
                  real_timeout: float = 60.0) -> dict:
        """Submit one URL through the access point, wait for a terminal
        state on both sides, and return the joined metrics row."""
        url = self.origin.base_url + path
        coord_mark = len(self.coord_events)
        apn_mark = len(self.apn_events)
        resp = self._http.post(self.apn.http_url + "/submit",
                               data={"url": url}, timeout=10)
        resp.raise_for_status()
        rid = resp.json()["request_id"]

        deadline = time.monotonic() + real_timeout
        doc = None
        while time.monotonic() < deadline:
            doc = self._http.get(self.apn.http_url + "/received",
                                 timeout=10).json()
            # wait for the coordinator to finish too, so the next round's
            # REQUEST cannot collide with this exchange's final ACK; a
            # request timeout implies the coordinator is already idle
            # (either it never saw the REQUEST or it gave up long before)
            coord_done = any(r["request_id"] == rid
                             for r in self.coord_events[coord_mark:])
            if doc["request_id"] == rid and doc["status"] not in \
                    ("PENDING", "RECEIVING") \
                    and (coord_done or doc["status"] == "TIMEOUT"):
                break
            time.sleep(poll_interval)
        else:
            raise TimeoutError(f"round for {path} did not settle in "
                               f"{real_timeout}s of real time")

        merged = join_request_timing(
            self.apn_events[apn_mark:] + self.coord_events[coord_mark:])
        rec = merged.get(rid, {})
        row = {
            "status": "ok" if doc["status"] == "COMPLETE"
                      else doc["status"].lower(),
            "chunks": rec.get("chunks", 0),
            "retries": rec.get("retries", 0),
            "bytes": rec.get("bytes_received", 0),
            "http_status": doc.get("http_status"),
            "content": doc.get("content", ""),
            "content_encoding": doc.get("content_encoding", "utf-8"),
        }
        if doc["status"] == "COMPLETE":
            breakdown = compute_rft(rec)
            row.update({
                "rft_s": breakdown.rft,
                "url_total_s": breakdown.url_total,
                "rt_total_s": breakdown.rt_total,
                "lt_total_s": breakdown.lt_total,
                "throughput_bps": throughput(rec["bytes_received"],
                                             breakdown.rft),
            })
        return row


def calibrate_delay(stack: SimStack, target_rft: float = CALIBRATION_TARGET_RFT,
                    chunk_size: int = CALIBRATION_CHUNK_SIZE,
                    path: str = "/api/data", tolerance: float = 0.001,
                    max_iterations: int = 60) -> float:
    """Binary-search the inter-chunk delay until the calibration transfer's
    simulated RFT matches the target within `tolerance` (relative).

    Raises NoConvergence when the target is below what the airtime alone
    costs (delay 0 already overshoots) or beyond the search ceiling."""
    stack.set_chunk_size(chunk_size)

    def rft_at(delay: float) -> float:
        stack.set_delay(delay)
        row = stack.run_round(path)
        if row["status"] != "ok":
            raise NoConvergence(f"calibration round failed: {row['status']}")
        return row["rft_s"]

    lo, hi = 0.0, 1.0
    rft_lo = rft_at(lo)
    if rft_lo > target_rft:
        raise NoConvergence(
            f"target {target_rft}s is below the zero-delay floor {rft_lo:.4f}s")
    rft_hi = rft_at(hi)
    while rft_hi < target_rft:
        hi *= 2
        if hi > 64:
            raise NoConvergence(f"no delay up to {hi}s reaches {target_rft}s")
        rft_hi = rft_at(hi)

    delay = hi
    for _ in range(max_iterations):
        delay = (lo + hi) / 2
        value = rft_at(delay)
        if abs(value - target_rft) <= tolerance * target_rft:
            break
        if value < target_rft:
            lo = delay
        else:
            hi = delay
    else:
        raise NoConvergence(f"bisection did not settle within "
                            f"{max_iterations} iterations")
    log.info("calibrated inter-chunk delay: %.6fs (rft %.4fs)", delay, value)
    return delay


def run_experiment(cfg: ExperimentConfig, out_path: str | None = None,
                   stack: SimStack | None = None) -> list[dict]:
    """Run the full grid (chunk sizes x rounds) and return the CSV rows."""
    own_stack = stack is None
    if own_stack:
        stack = SimStack(cfg)
    try:
        delay = cfg.inter_chunk_delay
        if delay is None:
            delay = calibrate_delay(stack)
        stack.set_delay(delay)
        rows = []
        for size in cfg.chunk_sizes:
            stack.set_chunk_size(size)
            for rnd in range(1, cfg.rounds + 1):
                try:
                    result = stack.run_round(cfg.target_path)
                except TimeoutError as exc:
                    log.error("round %d@%dB failed: %s", rnd, size, exc)
                    result = {"status": "stalled", "chunks": 0, "retries": 0}
                row = {"chunk_size": size, "round": rnd,
                       "status": result["status"],
                       "rft_s": result.get("rft_s"),
                       "url_total_s": result.get("url_total_s"),
                       "rt_total_s": result.get("rt_total_s"),
                       "lt_total_s": result.get("lt_total_s"),
                       "throughput_bps": result.get("throughput_bps"),
                       "chunks": result.get("chunks", 0),
                       "retries": result.get("retries", 0)}
                rows.append(row)
    finally:
        if own_stack:
            stack.close()
    if out_path:
        with open(out_path, "w", newline="") as fh:
            fh.write(rows_to_csv(rows))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    """Deterministic CSV serialization: durations at microsecond resolution,
    throughput at 0.01 B/s."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([
            row["chunk_size"], row["round"], row["status"],
            _fmt(row.get("rft_s"), 6), _fmt(row.get("url_total_s"), 6),
            _fmt(row.get("rt_total_s"), 6), _fmt(row.get("lt_total_s"), 6),
            _fmt(row.get("throughput_bps"), 2),
            row.get("chunks", 0), row.get("retries", 0)])
    return buf.getvalue()


def _fmt(value, digits: int) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def summarize(rows: list[dict]) -> dict[int, dict]:
    """Mean RFT/throughput per chunk size over completed rounds."""
    summary: dict[int, dict] = {}
    for size in sorted({r["chunk_size"] for r in rows}):
        done = [r for r in rows
                if r["chunk_size"] == size and r["status"] == "ok"]
        if not done:
            summary[size] = {"rounds": 0}
            continue
        summary[size] = {
            "rounds": len(done),
            "mean_rft_s": round_us(sum(r["rft_s"] for r in done) / len(done)),
            "mean_throughput_bps": round(
                sum(r["throughput_bps"] for r in done) / len(done), 2),
        }
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ilora-bench",
        description="Simulated benchmark of the HTTP-over-LoRa system")
    parser.add_argument("--chunk-sizes", default="150,200,250",
                        help="comma-separated chunk sizes in bytes")
    parser.add_argument("--rounds", type=int, default=20)
    parser.add_argument("--loss", type=float, default=0.0,
                        help="per-frame loss probability")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--target", default="/api/data",
                        help="origin path to request each round")
    parser.add_argument("--calibrate", action="store_true",
                        help="fit the inter-chunk delay to the reference "
                             "RFT before running (default when --delay-ms "
                             "is not given)")
    parser.add_argument("--delay-ms", type=float, default=None,
                        help="fixed inter-chunk delay in milliseconds")
    parser.add_argument("--out", default="results.csv",
                        help="CSV output path")
    parser.add_argument("--origin-port", type=int, default=0,
                        help="fixed mock-origin port (0 = ephemeral)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")

    delay = None if args.delay_ms is None else args.delay_ms / 1000.0
    cfg = ExperimentConfig(
        chunk_sizes=tuple(int(s) for s in args.chunk_sizes.split(",")),
        rounds=args.rounds, target_path=args.target,
        loss_probability=args.loss, rng_seed=args.seed,
        inter_chunk_delay=delay, origin_port=args.origin_port)
    rows = run_experiment(cfg, out_path=args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    for size, stats in summarize(rows).items():
        print(f"chunk {size}B: {json.dumps(stats)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
