"""Serving-tier engine profiles and the analytic network model.

An engine profile is an offline-measured batch-size -> latency curve for one
tier, valid up to the saturation point beyond which extra batching buys no
throughput. Fixed-iteration chunk generation makes these curves deterministic,
so the scheduler can read expected compute cost straight off the profile.
Network delay is modeled analytically as base latency plus serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .core import Duration, round_half_up

EDGE = "edge"
CLOUD = "cloud"

UP = "up"
DOWN = "down"


class ProfileError(ValueError):
    """Raised for malformed or non-saturating engine profiles."""


@dataclass(frozen=True)
class EngineProfile:
    """Batch-size -> latency curve plus dispatch capacity for one tier.

    points are (batch_size, latency_us) pairs with strictly increasing batch
    sizes and non-decreasing latencies. max_batch must be one of the profiled
    batch sizes and must be throughput-optimal among them: this is what calling
    it the saturation point certifies, and profiles violating it are rejected
    at load. capacity caps how many requests one planning round may dispatch.
    """

    tier: str
    capacity: int
    max_batch: int
    points: tuple

    def __post_init__(self) -> None:
        if self.tier not in (EDGE, CLOUD):
            raise ProfileError(f"tier must be 'edge' or 'cloud', got {self.tier!r}")
        if self.capacity < 1:
            raise ProfileError(f"capacity must be >= 1, got {self.capacity}")
        pts = tuple((int(b), int(lat)) for b, lat in self.points)
        if not pts:
            raise ProfileError("profile needs at least one (batch, latency) point")
        for b, lat in pts:
            if b < 1:
                raise ProfileError(f"batch sizes must be >= 1, got {b}")
            if lat <= 0:
                raise ProfileError(f"latencies must be > 0, got {lat}")
        batches = [b for b, _ in pts]
        if sorted(set(batches)) != batches:
            raise ProfileError("profile batch sizes must be strictly increasing")
        lats = [lat for _, lat in pts]
        if any(nxt < cur for cur, nxt in zip(lats, lats[1:])):
            raise ProfileError("profile latency must be non-decreasing in batch size")
        if self.max_batch not in batches:
            raise ProfileError(
                f"max_batch {self.max_batch} is not a profiled batch size"
            )
        sat_lat = dict(pts)[self.max_batch]
        for b, lat in pts:
            if b <= self.max_batch and self.max_batch * lat < b * sat_lat:
                raise ProfileError(
                    f"batch {b} has higher throughput than max_batch "
                    f"{self.max_batch}: not a saturation point"
                )
        object.__setattr__(self, "points", pts)

    def to_dict(self) -> dict:
        return {
            "tier": self.tier,
            "capacity": self.capacity,
            "max_batch": self.max_batch,
            "points": [list(p) for p in self.points],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EngineProfile":
        try:
            return cls(
                tier=data["tier"],
                capacity=data["capacity"],
                max_batch=data["max_batch"],
                points=tuple(tuple(p) for p in data["points"]),
            )
        except KeyError as exc:
            raise ProfileError(f"profile is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class NetworkModel:
    """One-way base latency plus uplink/downlink bandwidth for a link."""

    base_latency_us: Duration
    uplink_bps: int
    downlink_bps: int

    def __post_init__(self) -> None:
        if self.base_latency_us <= 0:
            raise ValueError(f"base latency must be > 0, got {self.base_latency_us}")
        if self.uplink_bps <= 0 or self.downlink_bps <= 0:
            raise ValueError("bandwidths must be > 0")

    def to_dict(self) -> dict:
        return {
            "base_latency_us": self.base_latency_us,
            "uplink_bps": self.uplink_bps,
            "downlink_bps": self.downlink_bps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkModel":
        try:
            return cls(
                base_latency_us=data["base_latency_us"],
                uplink_bps=data["uplink_bps"],
                downlink_bps=data["downlink_bps"],
            )
        except KeyError as exc:
            raise ValueError(f"network model is missing field {exc.args[0]!r}") from None


def batch_latency(profile: EngineProfile, batch: int) -> Duration:
    """Inference latency for a batch of the given size.

    Exact at profiled points; linear interpolation between adjacent points.
    Sizes below the first profiled point take the first point's latency.
    """
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if batch > profile.max_batch:
        raise ValueError(
            f"batch {batch} exceeds {profile.tier} max_batch {profile.max_batch}"
        )
    pts = profile.points
    if batch <= pts[0][0]:
        return pts[0][1]
    for (b_lo, lat_lo), (b_hi, lat_hi) in zip(pts, pts[1:]):
        if batch == b_hi:
            return lat_hi
        if b_lo < batch < b_hi:
            frac = Fraction(lat_lo) + Fraction(lat_hi - lat_lo) * Fraction(
                batch - b_lo, b_hi - b_lo
            )
            return round_half_up(frac)
    raise AssertionError("unreachable: batch within validated range")


def transfer_time(net: NetworkModel, payload_bytes: int, direction: str) -> Duration:
    """One-way delay: base latency plus serialization of the payload."""
    if payload_bytes < 0:
        raise ValueError(f"payload_bytes must be >= 0, got {payload_bytes}")
    if direction == UP:
        bps = net.uplink_bps
    elif direction == DOWN:
        bps = net.downlink_bps
    else:
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    serialization = Fraction(payload_bytes * 8 * 1_000_000, bps)
    return net.base_latency_us + round_half_up(serialization)


def cloud_round_trip(
    net: NetworkModel, req_bytes: int, resp_bytes: int, compute: Duration
) -> Duration:
    """Uplink transfer, remote compute, then downlink transfer."""
    return (
        transfer_time(net, req_bytes, UP)
        + compute
        + transfer_time(net, resp_bytes, DOWN)
    )


def load_engine_profile(path: str | Path) -> EngineProfile:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: invalid JSON: {exc}") from None
    return EngineProfile.from_dict(data)


def load_network_model(path: str | Path) -> NetworkModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from None
    return NetworkModel.from_dict(data)
