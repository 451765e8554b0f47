"""Command-line entries for the coordinator, access point, mock origin and
an all-in-one live demo.

The simulated channel lives inside one process, so `--mode sim` for a
standalone service is only meaningful via `ilora-demo` (everything
in-process over a real-time channel) or `ilora-bench` (virtual time).
`--mode udp` runs services as separate processes with frames carried
verbatim in UDP datagrams: give each node its own `--link-listen` address
and one `--peer ID=HOST:PORT` per neighbor.
"""

from __future__ import annotations

import argparse
import json
import logging
import threading
from dataclasses import replace

from .apn import Apn, ApnConfig
from .coordinator import Coordinator, CoordinatorConfig
from .link import REAL, Channel, ChannelConfig, UdpEndpoint, load_channel_config
from .origin import OriginServer

log = logging.getLogger(__name__)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _jsonl_sink(path: str):
    fh = open(path, "a", buffering=1)

    def sink(record: dict) -> None:
        fh.write(json.dumps(record) + "\n")

    return sink


def _parse_addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "0.0.0.0", int(port)


def _parse_peers(entries: list[str]) -> dict[int, tuple[str, int]]:
    peers = {}
    for entry in entries:
        node, _, addr = entry.partition("=")
        peers[int(node)] = _parse_addr(addr)
    return peers


def _udp_endpoint(args) -> UdpEndpoint:
    ep = UdpEndpoint(args.node_id, _parse_addr(args.link_listen),
                     _parse_peers(args.peer))
    log.info("udp link endpoint for node %d on %s", args.node_id, ep.address)
    return ep


def _require_udp(args, parser) -> None:
    if args.mode != "udp":
        parser.error(
            "--mode sim is in-process only; use ilora-demo for a live "
            "single-process stack or ilora-bench for the simulated benchmark")


def coord_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ilora-coord", description="Internet-side coordinator node")
    parser.add_argument("--node-id", type=int, required=True)
    parser.add_argument("--peers", required=True,
                        help="comma-separated access-point node ids to serve")
    parser.add_argument("--chunk-size", type=int, default=250)
    parser.add_argument("--retries", type=int, default=3)
    parser.add_argument("--ack-timeout-ms", type=float, default=2000)
    parser.add_argument("--inter-chunk-delay-ms", type=float, default=1650)
    parser.add_argument("--fetch-timeout-s", type=float, default=10.0)
    parser.add_argument("--mode", choices=["sim", "udp"], default="udp")
    parser.add_argument("--listen", "--link-listen", dest="link_listen",
                        default="0.0.0.0:47000",
                        help="UDP address for this node's link socket")
    parser.add_argument("--peer", action="append", default=[],
                        metavar="ID=HOST:PORT",
                        help="link address of a peer node (repeatable)")
    parser.add_argument("--log", help="JSONL file for request timing records")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    _require_udp(args, parser)

    cfg = CoordinatorConfig(
        node_id=args.node_id,
        expected_senders=frozenset(int(p) for p in args.peers.split(",")),
        chunk_capacity=args.chunk_size,
        max_retries=args.retries,
        ack_timeout=args.ack_timeout_ms / 1000.0,
        inter_chunk_delay=args.inter_chunk_delay_ms / 1000.0,
        fetch_timeout=args.fetch_timeout_s)
    sink = _jsonl_sink(args.log) if args.log else None
    coordinator = Coordinator(cfg, _udp_endpoint(args), event_sink=sink)
    log.info("coordinator node %d serving access points %s",
             cfg.node_id, sorted(cfg.expected_senders))
    coordinator.serve_forever()
    return 0


def apn_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ilora-apn", description="Access-point node with local HTTP UI")
    parser.add_argument("--node-id", type=int, required=True)
    parser.add_argument("--coordinator", type=int, required=True)
    parser.add_argument("--listen", default="0.0.0.0:8080",
                        help="HTTP address for the browser-facing server")
    parser.add_argument("--timeout-s", type=float, default=120.0,
                        help="overall per-request timeout")
    parser.add_argument("--mode", choices=["sim", "udp"], default="udp")
    parser.add_argument("--link-listen", default="0.0.0.0:47001")
    parser.add_argument("--peer", action="append", default=[],
                        metavar="ID=HOST:PORT")
    parser.add_argument("--ui", help="path to a built UI (file or directory) "
                                     "served instead of the embedded page")
    parser.add_argument("--log", help="JSONL file for transfer timing records")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    _require_udp(args, parser)

    cfg = ApnConfig(node_id=args.node_id, coordinator_id=args.coordinator,
                    http_listen=args.listen, request_timeout=args.timeout_s)
    sink = _jsonl_sink(args.log) if args.log else None
    apn = Apn(cfg, _udp_endpoint(args), event_sink=sink, ui_path=args.ui)
    apn.start()
    log.info("access point %d: browse to %s", cfg.node_id, apn.http_url)
    apn.join()
    return 0


def origin_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ilora-origin", description="Mock web origin with the "
                                         "size-exact benchmark fixtures")
    parser.add_argument("--listen", default="0.0.0.0:5000")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    host, port = _parse_addr(args.listen)
    server = OriginServer(host, port).start()
    log.info("mock origin on %s (routes: /api/data /api/data/1 /loro "
             "/error/{code})", server.base_url)
    threading.Event().wait()
    return 0


def demo_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ilora-demo",
        description="Origin + coordinator + access point in one process "
                    "over a real-time simulated channel")
    parser.add_argument("--listen", default="127.0.0.1:8080",
                        help="HTTP address of the access point UI")
    parser.add_argument("--chunk-size", type=int, default=250)
    parser.add_argument("--inter-chunk-delay-ms", type=float, default=1650,
                        help="pacing delay; the reference-calibrated value "
                             "makes transfers take paper-like times")
    parser.add_argument("--loss", type=float, default=0.0)
    parser.add_argument("--timeout-s", type=float, default=120.0)
    parser.add_argument("--ui", help="path to a built UI (file or directory)")
    parser.add_argument("--origin-listen", default="127.0.0.1:0")
    parser.add_argument("--channel-config",
                        help="key = value file with ChannelConfig fields "
                             "(radio params as lora.*); the demo always "
                             "runs the real-time clock")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)

    origin_host, origin_port = _parse_addr(args.origin_listen)
    origin = OriginServer(origin_host, origin_port).start()
    if args.channel_config:
        chan_cfg = replace(load_channel_config(args.channel_config),
                           clock_mode=REAL)
    else:
        chan_cfg = ChannelConfig(clock_mode=REAL, loss_probability=args.loss)
    channel = Channel(chan_cfg)
    coordinator = Coordinator(
        CoordinatorConfig(node_id=0, expected_senders=frozenset({1}),
                          chunk_capacity=args.chunk_size,
                          inter_chunk_delay=args.inter_chunk_delay_ms / 1000.0),
        channel.attach(0, actor=True))
    apn = Apn(ApnConfig(node_id=1, coordinator_id=0,
                        http_listen=args.listen,
                        request_timeout=args.timeout_s),
              channel.attach(1, actor=True), ui_path=args.ui)
    threading.Thread(target=coordinator.serve_forever, daemon=True).start()
    apn.start()
    log.info("demo up: UI at %s, origin at %s (try %s/api/data)",
             apn.http_url, origin.base_url, origin.base_url)
    # machine-readable lines for scripts driving the demo
    print(f"APN_URL={apn.http_url}", flush=True)
    print(f"ORIGIN_URL={origin.base_url}", flush=True)
    try:
        apn.join()
    except KeyboardInterrupt:
        pass
    return 0
