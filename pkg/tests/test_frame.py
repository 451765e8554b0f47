import random

import pytest

from ilora.frame import (
    HEADER_LEN,
    BadErrorPayload,
    BadVersion,
    FieldRange,
    Frame,
    FrameError,
    FrameType,
    Incomplete,
    OversizePayload,
    TooLarge,
    TooShort,
    chunk_payload,
    decode_frame,
    encode_frame,
    reassemble,
)

RANDOM_SEED = 0x110A
ROUND_TRIP_ITERATIONS = 10_000
FUZZ_ITERATIONS = 10_000

PAPER_API_URL = "http://13.232.192.17:5000/api/data"  # 34 bytes


def random_valid_frame(rng: random.Random) -> Frame:
    ftype = rng.choice(list(FrameType))
    sender = rng.randrange(256)
    recipient = rng.randrange(256)
    rid = rng.randrange(256)
    if ftype is FrameType.REQUEST:
        url = "http://h/" + "x" * rng.randrange(0, 240)
        return Frame.request(sender, recipient, rid, url)
    if ftype is FrameType.DATA:
        last = rng.random() < 0.5
        size = rng.randrange(0 if last else 1, 251)
        return Frame.data(sender, recipient, rid, rng.randrange(256),
                          rng.randbytes(size), last)
    if ftype is FrameType.ACK:
        return Frame.ack(sender, recipient, rid, ok=rng.random() < 0.5)
    return Frame.error(sender, recipient, rid, rng.randrange(100, 600))


class TestEncode:
    def test_ack_is_bare_header(self):
        f = Frame.ack(sender=1, recipient=0, request_id=7, ok=True)
        wire = encode_frame(f)
        assert len(wire) == 5
        assert wire[HEADER_LEN:] == b""

    def test_request_length_is_header_plus_url(self):
        f = Frame.request(3, 1, 0, PAPER_API_URL)
        assert len(PAPER_API_URL.encode()) == 34
        assert len(encode_frame(f)) == 39

    def test_error_payload_is_big_endian_status(self):
        f = Frame.error(1, 2, 9, 404)
        assert encode_frame(f)[HEADER_LEN:] == b"\x01\x94"

    def test_oversize_payload_rejected(self):
        f = Frame.data(1, 2, 0, 0, b"x" * 251, last=True)
        with pytest.raises(OversizePayload):
            encode_frame(f)

    def test_field_ranges_rejected(self):
        with pytest.raises(FieldRange):
            encode_frame(Frame.ack(256, 0, 0))
        with pytest.raises(FieldRange):
            encode_frame(Frame.ack(-1, 0, 0))
        with pytest.raises(FieldRange):
            encode_frame(Frame(FrameType.REQUEST, 1, 2, 0, chunk_id=3, payload=b"u"))
        with pytest.raises(FieldRange):
            encode_frame(Frame(FrameType.ACK, 1, 2, 0, last=True))
        with pytest.raises(FieldRange):
            encode_frame(Frame(FrameType.DATA, 1, 2, 0, ack_ok=True, payload=b"x"))
        with pytest.raises(FieldRange):
            encode_frame(Frame(FrameType.DATA, 1, 2, 0, payload=b"", last=False))
        with pytest.raises(BadErrorPayload):
            encode_frame(Frame(FrameType.ERROR, 1, 2, 0, payload=b"\x01"))

    def test_header_overhead_is_constant(self):
        rng = random.Random(RANDOM_SEED)
        for _ in range(200):
            f = random_valid_frame(rng)
            assert len(encode_frame(f)) - len(f.payload) == 5


class TestDecode:
    def test_too_short(self):
        with pytest.raises(TooShort):
            decode_frame(b"\x40\x01\x02\x03")

    def test_error_frame_status_404(self):
        # version 1, type ERROR(3): byte0 = 0b01_11_0000
        wire = bytes((0x70, 5, 6, 9, 0)) + b"\x01\x94"
        f = decode_frame(wire)
        assert f.ftype is FrameType.ERROR
        assert f.error_status() == 404

    def test_bad_version(self):
        for v in (0, 2, 3):
            wire = bytes(((v << 6) | 0x20, 1, 2, 3, 0))
            with pytest.raises(BadVersion):
                decode_frame(wire)

    def test_bad_error_payload(self):
        with pytest.raises(BadErrorPayload):
            decode_frame(bytes((0x70, 5, 6, 9, 0)) + b"\x01")

    def test_round_trip_randomized(self):
        rng = random.Random(RANDOM_SEED)
        for _ in range(ROUND_TRIP_ITERATIONS):
            f = random_valid_frame(rng)
            assert decode_frame(encode_frame(f)) == f

    def test_fuzz_totality(self):
        rng = random.Random(RANDOM_SEED ^ 0xFFFF)
        for i in range(FUZZ_ITERATIONS):
            raw = rng.randbytes(rng.randrange(0, 300))
            try:
                decode_frame(raw)
            except FrameError:
                pass
            except Exception as exc:  # pragma: no cover - failure reporting
                pytest.fail(f"decode_frame crashed on iteration {i}: "
                            f"{type(exc).__name__}: {exc}; data={raw.hex()}")


class TestChunking:
    def test_930_bytes_capacity_250(self):
        cs = chunk_payload(b"j" * 930, 250)
        assert cs.total == 4
        assert [len(p) for _, p in cs] == [250, 250, 250, 180]

    def test_67_bytes_fits_one_150_chunk(self):
        cs = chunk_payload(b"r" * 67, 150)
        assert cs.total == 1
        assert [len(p) for _, p in cs] == [67]

    def test_930_bytes_other_capacities(self):
        cs = chunk_payload(b"j" * 930, 150)
        assert [len(p) for _, p in cs] == [150] * 6 + [30]
        cs = chunk_payload(b"j" * 930, 200)
        assert [len(p) for _, p in cs] == [200] * 4 + [130]

    def test_empty_content_yields_one_empty_chunk(self):
        cs = chunk_payload(b"", 250)
        assert cs.total == 1
        assert cs.chunks == ((0, b""),)

    def test_too_large(self):
        with pytest.raises(TooLarge):
            chunk_payload(b"x" * (256 * 10 + 1), 10)

    def test_chunk_ids_are_gapless_and_increasing(self):
        cs = chunk_payload(b"x" * 999, 100)
        assert [cid for cid, _ in cs] == list(range(10))


class TestReassemble:
    def test_identity_with_chunk_payload(self):
        rng = random.Random(RANDOM_SEED)
        for _ in range(500):
            body = rng.randbytes(rng.randrange(0, 3001))
            cap = rng.choice((150, 200, 250))
            cs = chunk_payload(body, cap)
            assert reassemble(dict(cs.chunks), cs.total - 1) == body

    def test_single_empty_last_chunk(self):
        assert reassemble({0: b""}, 0) == b""

    def test_gap_before_last_is_incomplete(self):
        with pytest.raises(Incomplete):
            reassemble({0: b"a", 2: b"c"}, 2)

    def test_no_chunks_is_incomplete(self):
        with pytest.raises(Incomplete):
            reassemble({})
