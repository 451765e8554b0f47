import pytest
import requests

from ilora.harness import (
    ExperimentConfig,
    NoConvergence,
    SimStack,
    calibrate_delay,
    rows_to_csv,
    run_experiment,
    summarize,
)
from ilora.origin import OriginFixtures, OriginServer


class TestFixtures:
    def test_exact_sizes(self):
        fx = OriginFixtures()
        assert len(fx.api_data) == 930
        assert len(fx.api_data_1) == 67
        assert len(fx.loro_page) == 2225

    def test_json_fixtures_parse(self):
        import json
        fx = OriginFixtures()
        json.loads(fx.api_data)
        json.loads(fx.api_data_1)


@pytest.fixture(scope="module")
def origin():
    with OriginServer() as server:
        yield server


class TestMockOrigin:
    def test_api_data(self, origin):
        resp = requests.get(origin.base_url + "/api/data", timeout=5)
        assert resp.status_code == 200
        assert len(resp.content) == 930
        assert resp.headers["Content-Type"].startswith("application/json")

    def test_api_data_1(self, origin):
        resp = requests.get(origin.base_url + "/api/data/1", timeout=5)
        assert resp.status_code == 200
        assert len(resp.content) == 67

    def test_loro(self, origin):
        resp = requests.get(origin.base_url + "/loro", timeout=5)
        assert resp.status_code == 200
        assert len(resp.content) == 2225
        assert resp.headers["Content-Type"].startswith("text/html")

    def test_error_codes(self, origin):
        assert requests.get(origin.base_url + "/error/503",
                            timeout=5).status_code == 503
        assert requests.get(origin.base_url + "/error/404",
                            timeout=5).status_code == 404

    def test_unknown_path(self, origin):
        assert requests.get(origin.base_url + "/nope",
                            timeout=5).status_code == 404


def quick_cfg(**overrides) -> ExperimentConfig:
    defaults = dict(chunk_sizes=(250,), rounds=2, inter_chunk_delay=0.05,
                    rng_seed=7)
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestRounds:
    def test_lossless_round_metrics(self):
        with SimStack(quick_cfg()) as stack:
            row = stack.run_round("/api/data")
        assert row["status"] == "ok"
        assert row["chunks"] == 4
        assert row["retries"] == 0
        assert row["bytes"] == 930
        assert row["rft_s"] > 0
        assert row["rft_s"] == pytest.approx(
            row["url_total_s"] + row["rt_total_s"] + row["lt_total_s"])

    def test_round_content_matches_fixture(self):
        fx = OriginFixtures()
        with SimStack(quick_cfg()) as stack:
            row = stack.run_round("/api/data")
        assert row["content_encoding"] == "utf-8"
        assert row["content"].encode() == fx.api_data

    def test_error_round(self):
        with SimStack(quick_cfg()) as stack:
            row = stack.run_round("/error/503")
        assert row["status"] == "error"
        assert row["http_status"] == 503
        assert row["content"] == ""

    def test_rounds_are_repeatable_within_a_stack(self):
        with SimStack(quick_cfg()) as stack:
            first = stack.run_round("/api/data")
            second = stack.run_round("/api/data")
        assert first["rft_s"] == second["rft_s"]
        assert first["lt_total_s"] == second["lt_total_s"]


class TestCalibration:
    def test_calibration_hits_target(self):
        with SimStack(quick_cfg()) as stack:
            delay = calibrate_delay(stack, target_rft=2.0, tolerance=0.001)
            stack.set_delay(delay)
            row = stack.run_round("/api/data")
        assert row["rft_s"] == pytest.approx(2.0, rel=0.001)
        assert delay > 0

    def test_calibration_deterministic(self):
        cfg = quick_cfg(origin_port=18731)
        with SimStack(cfg) as stack:
            d1 = calibrate_delay(stack, target_rft=2.0)
        with SimStack(cfg) as stack:
            d2 = calibrate_delay(stack, target_rft=2.0)
        assert d1 == d2

    def test_unreachable_target_raises(self):
        # the airtime of 4 chunks alone exceeds 0.3 s of RFT budget
        with SimStack(quick_cfg()) as stack:
            with pytest.raises(NoConvergence):
                calibrate_delay(stack, target_rft=0.3)


class TestExperiment:
    def test_grid_shape_and_csv(self, tmp_path):
        out = tmp_path / "results.csv"
        rows = run_experiment(quick_cfg(chunk_sizes=(150, 250), rounds=2),
                              out_path=str(out))
        assert len(rows) == 4
        assert {r["chunk_size"] for r in rows} == {150, 250}
        assert all(r["status"] == "ok" for r in rows)
        by_size = {r["chunk_size"]: r for r in rows}
        assert by_size[150]["chunks"] == 7
        assert by_size[250]["chunks"] == 4
        text = out.read_text()
        header, *lines = text.strip().split("\n")
        assert header == ("chunk_size,round,status,rft_s,url_total_s,"
                          "rt_total_s,lt_total_s,throughput_bps,chunks,retries")
        assert len(lines) == 4

    def test_loss_increases_rft_and_retries(self):
        lossless = run_experiment(quick_cfg(rounds=3))
        lossy = run_experiment(quick_cfg(rounds=3, loss_probability=0.15,
                                         rng_seed=11))
        ok_lossy = [r for r in lossy if r["status"] == "ok"]
        assert ok_lossy, "seeded lossy run must complete at least one round"
        mean = lambda rs: sum(r["rft_s"] for r in rs) / len(rs)
        assert mean(ok_lossy) > mean(lossless)
        assert sum(r["retries"] for r in lossy) > 0

    def test_summarize(self):
        rows = run_experiment(quick_cfg(rounds=2))
        summary = summarize(rows)
        assert summary[250]["rounds"] == 2
        assert summary[250]["mean_rft_s"] > 0

    def test_csv_formatting_stable(self):
        rows = [{"chunk_size": 250, "round": 1, "status": "ok",
                 "rft_s": 7.0265, "url_total_s": 1.75, "rt_total_s": 0.0,
                 "lt_total_s": 5.2765, "throughput_bps": 132.3561,
                 "chunks": 4, "retries": 0}]
        assert rows_to_csv(rows) == (
            "chunk_size,round,status,rft_s,url_total_s,rt_total_s,"
            "lt_total_s,throughput_bps,chunks,retries\n"
            "250,1,ok,7.026500,1.750000,0.000000,5.276500,132.36,4,0\n")
