import math
import threading

import pytest

from ilora.frame import Frame, encode_frame, decode_frame
from ilora.link import (
    COLLIDED,
    DELIVERED,
    LOST,
    Channel,
    ChannelConfig,
    Detached,
    Interrupted,
    LinkTimeout,
    LoraParams,
    Oversize,
    Topology,
    UdpEndpoint,
    load_channel_config,
    time_on_air,
)


def reference_toa(payload_bytes, sf, bw_hz, cr, n_preamble, implicit_header,
                  crc_on, ldro):
    """Independent SX127x datasheet airtime, kept deliberately separate from
    the implementation under test."""
    t_sym = (2.0 ** sf) / bw_hz
    t_preamble = (n_preamble + 4.25) * t_sym
    term = math.ceil(
        (8 * payload_bytes - 4 * sf + 28 + 16 * int(crc_on) - 20 * int(implicit_header))
        / (4 * (sf - 2 * int(ldro)))
    ) * (cr + 4)
    return t_preamble + (8 + max(term, 0)) * t_sym


# Frozen outputs of reference_toa for SF7 / 500 kHz / CR 4/5 / preamble 8 /
# explicit header / CRC on / LDRO off, computed before the implementation.
TOA_SF7_500K = {
    5: 0.007744,
    35: 0.019264,
    39: 0.020544,
    41: 0.021824,
    72: 0.033344,
    155: 0.062784,
    185: 0.074304,
    205: 0.081984,
    250: 0.097344,
    255: 0.099904,
}


class TestTimeOnAir:
    def test_table_ii_defaults(self):
        p = LoraParams()
        assert p.spreading_factor == 7
        assert p.bandwidth_hz == 500_000
        assert p.coding_rate == 1
        assert p.preamble_symbols == 8
        assert p.explicit_header and p.crc_on and not p.low_data_rate_optimize

    def test_matches_frozen_reference_values(self):
        p = LoraParams()
        for nbytes, expected in TOA_SF7_500K.items():
            assert time_on_air(nbytes, p) == pytest.approx(expected, abs=1e-9)

    def test_matches_reference_implementation_across_params(self):
        for sf in (7, 9, 12):
            for bw in (125_000, 500_000):
                for cr in (1, 4):
                    for ldro in (False, True):
                        p = LoraParams(spreading_factor=sf, bandwidth_hz=bw,
                                       coding_rate=cr, low_data_rate_optimize=ldro)
                        for nbytes in range(0, 256, 17):
                            assert time_on_air(nbytes, p) == pytest.approx(
                                reference_toa(nbytes, sf, bw, cr, 8, False, True, ldro),
                                abs=1e-9)

    def test_zero_payload_symbol_floor(self):
        # with SF12, CRC off and implicit header the ceil term is <= 0 for a
        # small payload, so airtime collapses to preamble + 8 symbols
        p = LoraParams(spreading_factor=12, bandwidth_hz=125_000,
                       explicit_header=False, crc_on=False)
        t_sym = 4096 / 125_000
        assert time_on_air(4, p) == pytest.approx((12.25 + 8) * t_sym, abs=1e-9)
        assert time_on_air(4, p) == pytest.approx(0.663552, abs=1e-9)

    def test_weakly_increasing_in_payload(self):
        p = LoraParams()
        values = [time_on_air(n, p) for n in range(256)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert values[-1] > values[0]


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChannelConfig(loss_probability=1.5)
        with pytest.raises(ValueError):
            ChannelConfig(max_frame_bytes=5)
        with pytest.raises(ValueError):
            ChannelConfig(clock_mode="warped")
        with pytest.raises(ValueError):
            LoraParams(spreading_factor=6)
        with pytest.raises(ValueError):
            LoraParams(coding_rate=5)

    def test_load_key_value_file(self, tmp_path):
        cfg_file = tmp_path / "channel.conf"
        cfg_file.write_text(
            "# experiment channel\n"
            "loss_probability = 0.2\n"
            "rng_seed = 99\n"
            "clock_mode = virtual\n"
            "propagation_delay = 0.001\n"
            "lora.spreading_factor = 9\n"
            "lora.bandwidth_hz = 125000\n"
            "lora.crc_on = false\n"
        )
        cfg = load_channel_config(cfg_file)
        assert cfg.loss_probability == 0.2
        assert cfg.rng_seed == 99
        assert cfg.propagation_delay == 0.001
        assert cfg.lora.spreading_factor == 9
        assert cfg.lora.bandwidth_hz == 125_000
        assert cfg.lora.crc_on is False

    def test_load_rejects_unknown_key(self, tmp_path):
        cfg_file = tmp_path / "bad.conf"
        cfg_file.write_text("loss_probabillity = 0.2\n")
        with pytest.raises(ValueError):
            load_channel_config(cfg_file)


class TestTopology:
    def test_valid_star_of_stars(self):
        t = Topology({1, 2, 3}, {10}, {(1, 10), (2, 10), (3, 10)})
        assert t.coordinator_of(2) == 10
        assert t.apns_of(10) == {1, 2, 3}

    def test_disjoint_sets_required(self):
        with pytest.raises(ValueError):
            Topology({1}, {1}, {(1, 1)})

    def test_at_least_one_coordinator(self):
        with pytest.raises(ValueError):
            Topology({1}, set(), set())

    def test_relation_references_existing_nodes(self):
        with pytest.raises(ValueError):
            Topology({1}, {10}, {(2, 10)})
        with pytest.raises(ValueError):
            Topology({1}, {10}, {(1, 11)})

    def test_star_constraint(self):
        with pytest.raises(ValueError):
            Topology({1}, {10, 11}, {(1, 10), (1, 11)})
        with pytest.raises(ValueError):
            Topology({1, 2}, {10}, {(1, 10)})


def make_channel(**kwargs) -> Channel:
    return Channel(ChannelConfig(**kwargs))


def frame_bytes(n: int, sender=1, recipient=2) -> bytes:
    return encode_frame(Frame.data(sender, recipient, 0, 0, b"x" * (n - 5), last=True))


class TestChannel:
    def test_lossless_delivery_to_each_other_endpoint(self):
        ch = make_channel()
        try:
            a, b, c = ch.attach(1), ch.attach(2), ch.attach(3)
            wire = frame_bytes(40)
            a.send(wire)
            ch.advance_clock(1.0)
            assert b.recv(timeout=0) == wire
            assert c.recv(timeout=0) == wire
            with pytest.raises(LinkTimeout):
                b.recv(timeout=0)
            assert ch.trace[0].outcome == DELIVERED
        finally:
            ch.close()

    def test_oversize_rejected(self):
        ch = make_channel()
        try:
            a = ch.attach(1)
            with pytest.raises(Oversize):
                a.send(b"x" * 256)
        finally:
            ch.close()

    def test_recv_timeout_is_exact_virtual_time(self):
        ch = make_channel()
        try:
            a = ch.attach(1)
            with pytest.raises(LinkTimeout):
                a.recv(timeout=0.1)
            assert ch.now() == pytest.approx(0.1, abs=1e-12)
        finally:
            ch.close()

    def test_in_flight_frame_returned_at_toa_plus_propagation(self):
        # hand simulation: 250B frame, SF7/500kHz -> delivery at 0.097344 s
        ch = make_channel()
        try:
            a, b = ch.attach(1), ch.attach(2)
            a.send(frame_bytes(250))
            got = b.recv(timeout=1.0)
            assert len(got) == 250
            assert ch.now() == pytest.approx(0.097344, abs=1e-9)
        finally:
            ch.close()

    def test_delivery_time_ordering(self):
        ch = make_channel()
        try:
            a, b = ch.attach(1), ch.attach(2)
            first = frame_bytes(100)
            second = frame_bytes(40)
            a.send(first)
            ch.advance_clock(0.2)
            a.send(second)
            ch.advance_clock(0.4)
            assert b.recv(timeout=0) == first
            assert b.recv(timeout=0) == second
        finally:
            ch.close()

    def test_latency_floor(self):
        ch = make_channel(propagation_delay=0.002)
        try:
            a, b = ch.attach(1), ch.attach(2)
            p = ch.config.lora
            a.send(frame_bytes(60))
            b.recv(timeout=1.0)
            arrival = ch.now()
            tx = ch.trace[0]
            assert arrival - tx.start >= time_on_air(60, p)
            assert arrival == pytest.approx(tx.end + 0.002, abs=1e-12)
        finally:
            ch.close()

    def test_collision_destroys_both(self):
        ch = make_channel()
        try:
            a, b, c = ch.attach(1), ch.attach(2), ch.attach(3)
            a.send(frame_bytes(250, sender=1))
            b.send(frame_bytes(250, sender=2))  # same instant: airtimes overlap
            ch.advance_clock(1.0)
            assert [tx.outcome for tx in ch.trace] == [COLLIDED, COLLIDED]
            with pytest.raises(LinkTimeout):
                c.recv(timeout=0)
        finally:
            ch.close()

    def test_interleaved_senders_with_overlap_recorded(self):
        # hand-computed overlap table: tx1 [0, 0.097344), tx2 starts at 0.05
        ch = make_channel()
        try:
            a, b = ch.attach(1), ch.attach(2)
            a.send(frame_bytes(250, sender=1))
            ch.advance_clock(0.05)
            b.send(frame_bytes(250, sender=2))
            events = ch.advance_clock(1.0)
            assert {e[1] for e in events} == {COLLIDED}
            assert len(events) == 2
        finally:
            ch.close()

    def test_loss_rate_within_binomial_bound(self):
        # 10^4 sends at loss 0.2: delivered fraction within 3 sigma of 0.8,
        # sigma = sqrt(0.8 * 0.2 / 1e4)
        n = 10_000
        ch = make_channel(loss_probability=0.2, rng_seed=42)
        try:
            a = ch.attach(1)
            ch.attach(2)
            wire = frame_bytes(20)
            gap = time_on_air(20, ch.config.lora) + 0.001
            for i in range(n):
                a.send(wire)
                ch.advance_clock((i + 1) * gap)
            delivered = sum(1 for tx in ch.trace if tx.outcome == DELIVERED)
            sigma = math.sqrt(0.8 * 0.2 / n)
            assert abs(delivered / n - 0.8) <= 3 * sigma
        finally:
            ch.close()

    def test_conservation(self):
        ch = make_channel(loss_probability=0.5, rng_seed=7)
        try:
            a, b = ch.attach(1), ch.attach(2)
            gap = time_on_air(30, ch.config.lora) + 0.001
            for i in range(200):
                a.send(frame_bytes(30))
                ch.advance_clock((i + 1) * gap)
            assert all(tx.outcome in (DELIVERED, LOST) for tx in ch.trace)
            received = 0
            while True:
                try:
                    b.recv(timeout=0)
                    received += 1
                except LinkTimeout:
                    break
            assert received == sum(1 for tx in ch.trace if tx.outcome == DELIVERED)
        finally:
            ch.close()

    def test_determinism_same_seed_same_trace(self):
        def run():
            ch = make_channel(loss_probability=0.3, rng_seed=1234)
            try:
                a, b = ch.attach(1), ch.attach(2)
                t = 0.0
                for i in range(300):
                    sender = a if i % 3 else b
                    sender.send(frame_bytes(20 + (i % 5) * 10,
                                            sender=sender.node_id))
                    t += 0.05
                    ch.advance_clock(t)
                return list(ch.events)
            finally:
                ch.close()

        assert run() == run()

    def test_half_duplex_receiver_deaf_while_transmitting(self):
        # propagation delay makes an arrival land inside the receiver's own
        # transmission without the airtimes overlapping
        ch = make_channel(propagation_delay=0.05)
        try:
            a, b, c = ch.attach(1), ch.attach(2), ch.attach(3)
            wa = frame_bytes(250, sender=1)
            a.send(wa)  # tx [0, 0.0973), arrival 0.1473
            ch.advance_clock(0.1)
            wb = frame_bytes(250, sender=2)
            b.send(wb)  # tx [0.1, 0.1973) contains the arrival instant
            ch.advance_clock(1.0)
            assert [tx.outcome for tx in ch.trace] == [DELIVERED, DELIVERED]
            assert c.recv(timeout=0) == wa
            assert c.recv(timeout=0) == wb
            assert a.recv(timeout=0) == wb
            with pytest.raises(LinkTimeout):
                b.recv(timeout=0)  # deaf during own transmission
        finally:
            ch.close()

    def test_advance_clock_empty_queue(self):
        ch = make_channel()
        try:
            assert ch.advance_clock(5.0) == []
            assert ch.now() == 5.0
        finally:
            ch.close()

    def test_nudge_interrupts_recv(self):
        ch = make_channel()
        try:
            a = ch.attach(1)
            hit = []

            def waiter():
                try:
                    a.recv(timeout=None)
                except Interrupted:
                    hit.append(True)

            t = threading.Thread(target=waiter)
            t.start()
            a.nudge()
            t.join(timeout=5)
            assert hit == [True]
        finally:
            ch.close()

    def test_detached_after_close(self):
        ch = make_channel()
        a = ch.attach(1)
        ch.close()
        with pytest.raises(Detached):
            a.recv(timeout=1.0)

    def test_duplicate_node_id_rejected(self):
        ch = make_channel()
        try:
            ch.attach(1)
            with pytest.raises(Exception):
                ch.attach(1)
        finally:
            ch.close()


class TestUdpTunnel:
    def test_frames_carried_verbatim(self):
        a = UdpEndpoint(1, ("127.0.0.1", 0), {})
        b = UdpEndpoint(2, ("127.0.0.1", 0), {})
        try:
            a.peers[2] = b.address
            b.peers[1] = a.address
            f = Frame.request(1, 2, 9, "http://example.org/x")
            a.send(encode_frame(f))
            wire = b.recv(timeout=5.0)
            assert decode_frame(wire) == f
            b.send(encode_frame(Frame.ack(2, 1, 9)))
            assert decode_frame(a.recv(timeout=5.0)).ack_ok
        finally:
            a.close()
            b.close()

    def test_timeout_and_oversize(self):
        a = UdpEndpoint(1, ("127.0.0.1", 0), {})
        try:
            with pytest.raises(LinkTimeout):
                a.recv(timeout=0.05)
            with pytest.raises(Oversize):
                a.send(b"x" * 256)
        finally:
            a.close()
