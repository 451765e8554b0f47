import pytest

from ilora.metrics import (
    DegenerateInput,
    MissingTimestamp,
    NegativeInterval,
    ZeroDuration,
    compute_rft,
    fit_affine,
    join_request_timing,
    round_us,
    throughput,
    throughput_sample,
)

# (delivered bytes, reported RFT seconds) -> throughput, from the reference
# measurements; expectations verified by hand before the build
PAPER_THROUGHPUT = [
    (930, 12.3735, 75.16),
    (930, 8.811, 105.55),
    (930, 7.0265, 132.36),
    (2225, 21.39, 104.02),
]


def make_ts(**overrides):
    ts = {"url_start": 0.0, "url_end": 1.0, "rt_start": 1.0, "rt_end": 3.0,
          "lt_start": 3.0, "lt_end": 6.0}
    ts.update(overrides)
    return ts


class TestComputeRft:
    def test_all_zero_intervals(self):
        ts = {k: 5.0 for k in ("url_start", "url_end", "rt_start", "rt_end",
                               "lt_start", "lt_end")}
        assert compute_rft(ts).rft == 0.0

    def test_additivity(self):
        b = compute_rft(make_ts())
        assert (b.url_total, b.rt_total, b.lt_total) == (1.0, 2.0, 3.0)
        assert b.rft == 6.0
        assert b.rft == b.url_total + b.rt_total + b.lt_total

    def test_missing_timestamp(self):
        ts = make_ts()
        ts["lt_end"] = None
        with pytest.raises(MissingTimestamp):
            compute_rft(ts)
        with pytest.raises(MissingTimestamp):
            compute_rft({})

    def test_negative_interval(self):
        with pytest.raises(NegativeInterval):
            compute_rft(make_ts(rt_end=0.5))


class TestThroughput:
    @pytest.mark.parametrize("lam,rft,expected", PAPER_THROUGHPUT)
    def test_reference_values(self, lam, rft, expected):
        assert throughput(lam, rft) == pytest.approx(expected, abs=0.01)

    def test_zero_duration(self):
        with pytest.raises(ZeroDuration):
            throughput(930, 0.0)
        with pytest.raises(ZeroDuration):
            throughput(930, -1.0)

    def test_monotone_in_rft(self):
        values = [throughput(930, t) for t in (5.0, 7.0, 9.0, 21.0)]
        assert values == sorted(values, reverse=True)
        assert len(set(values)) == len(values)

    def test_sample_invariant(self):
        s = throughput_sample(930, 7.0265)
        assert s.theta_bps == s.lambda_bytes / s.rft_seconds


class TestFitAffine:
    def test_two_point_line(self):
        # exact two-point arithmetic: slope (12.3735-7.0265)/3, intercept at x=4
        slope, intercept, r2 = fit_affine([(4, 7.0265), (7, 12.3735)])
        assert slope == pytest.approx(1.7823333, abs=1e-6)
        assert intercept == pytest.approx(-0.1028333, abs=1e-6)
        assert r2 == pytest.approx(1.0)

    def test_midpoint_prediction(self):
        slope, intercept, _ = fit_affine([(4, 7.0265), (7, 12.3735)])
        assert slope * 5 + intercept == pytest.approx(8.811, abs=0.01)

    def test_flat_line(self):
        slope, intercept, r2 = fit_affine([(1, 2.0), (2, 2.0), (3, 2.0)])
        assert slope == 0.0
        assert intercept == 2.0
        assert r2 == 1.0

    def test_degenerate(self):
        with pytest.raises(DegenerateInput):
            fit_affine([(1, 1.0)])
        with pytest.raises(DegenerateInput):
            fit_affine([(1, 1.0), (1, 2.0)])


class TestJoin:
    def test_merges_both_sides_by_request_id(self):
        apn_rec = {"event": "transfer", "request_id": 5, "url_start": 0.0,
                   "url_end": 1.5, "status": "COMPLETE", "bytes_received": 930}
        coord_rec = {"event": "request", "request_id": 5, "rt_start": 0.4,
                     "rt_end": 0.4, "lt_start": 1.4, "lt_end": 6.0,
                     "retries": 0, "chunks": 4}
        merged = join_request_timing([apn_rec, coord_rec])
        assert set(merged) == {5}
        b = compute_rft(merged[5])
        assert b.rft == pytest.approx(1.5 + 0.0 + 4.6)

    def test_ignores_records_without_request_id(self):
        assert join_request_timing([{"event": "noise"}]) == {}


def test_round_us():
    assert round_us(1.23456789) == 1.234568
    assert round_us(7.0265) == 7.0265
