"""Measurement arithmetic over the services' structured event records.

A fulfilled request is timed on both sides of the link: the access point
owns the URL interval (request sent -> first response received) and the
coordinator owns the fetch interval (request received -> origin reply) and
the transmit interval (first chunk sent -> last chunk sent). The two
records join on request id; the request-fulfill time is the sum of the
three components, and throughput is delivered bytes divided by it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

TIMESTAMP_KEYS = ("url_start", "url_end", "rt_start", "rt_end",
                  "lt_start", "lt_end")


class MetricsError(Exception):
    pass


class MissingTimestamp(MetricsError):
    pass


class NegativeInterval(MetricsError):
    pass


class ZeroDuration(MetricsError):
    pass


class DegenerateInput(MetricsError):
    pass


@dataclass(frozen=True)
class RftBreakdown:
    url_total: float
    rt_total: float
    lt_total: float
    rft: float


@dataclass(frozen=True)
class ThroughputSample:
    lambda_bytes: int
    rft_seconds: float
    theta_bps: float


def compute_rft(timestamps: Mapping[str, float | None]) -> RftBreakdown:
    """Component subtraction over the six joined timestamps; the total is
    their sum by construction."""
    missing = [k for k in TIMESTAMP_KEYS if timestamps.get(k) is None]
    if missing:
        raise MissingTimestamp(f"timestamps absent: {', '.join(missing)}")
    url_total = timestamps["url_end"] - timestamps["url_start"]
    rt_total = timestamps["rt_end"] - timestamps["rt_start"]
    lt_total = timestamps["lt_end"] - timestamps["lt_start"]
    for name, value in (("url_total", url_total), ("rt_total", rt_total),
                        ("lt_total", lt_total)):
        if value < 0:
            raise NegativeInterval(f"{name} = {value}")
    return RftBreakdown(url_total, rt_total, lt_total,
                        url_total + rt_total + lt_total)


def throughput(lambda_bytes: float, rft_seconds: float) -> float:
    """Delivered bytes per second."""
    if rft_seconds <= 0:
        raise ZeroDuration(f"rft must be positive, got {rft_seconds}")
    return lambda_bytes / rft_seconds


def throughput_sample(lambda_bytes: int, rft_seconds: float) -> ThroughputSample:
    return ThroughputSample(lambda_bytes, rft_seconds,
                            throughput(lambda_bytes, rft_seconds))


def fit_affine(points: Iterable[tuple[float, float]]) -> tuple[float, float, float]:
    """Least-squares line through (x, y) points: (slope, intercept, r_squared).

    Needs at least two distinct x values. A perfectly flat response is
    reported as a perfect fit (r_squared = 1)."""
    pts = list(points)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    if len(set(xs)) < 2:
        raise DegenerateInput("need >= 2 distinct x values")
    n = len(pts)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = mean_y - slope * mean_x
    ss_res = sum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - mean_y) ** 2 for y in ys)
    r_squared = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r_squared


def join_request_timing(records: Iterable[Mapping]) -> dict[int, dict]:
    """Merge access-point 'transfer' and coordinator 'request' records by
    request id. Later records win, so retried ids resolve to the most
    recent exchange."""
    merged: dict[int, dict] = {}
    for rec in records:
        rid = rec.get("request_id")
        if rid is None:
            continue
        merged.setdefault(rid, {}).update(
            {k: v for k, v in rec.items() if k != "event"})
    return merged


def round_us(seconds: float) -> float:
    """Durations are reported at microsecond resolution."""
    return round(seconds, 6)
