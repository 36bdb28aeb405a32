"""Execution-aware request scheduling with FIFO and least-attained baselines.

The execution-aware policy runs in three phases over the pending set:

  1. Compute each task's wait ratio and bin it into B equal-width buckets,
     promoting requests one bucket per `aging_interval` consecutive skips.
  2. Order buckets high to low; inside a bucket, sort by estimated execution
     latency (descending), scaled by the (1 + skipped) aging factor. Serving
     execution-dominant tasks first keeps their long execution phases fed,
     which trims the tail without hurting the average.
  3. Fill the edge up to its per-round capacity; offload a remaining request
     to the cloud only when its estimated cloud completion (round trip,
     payload transfer, and compute at the expected batch) beats the estimated
     edge delay (queue drain plus compute), and defer the rest.

All orderings carry total tiebreaks (request arrival time, then task id), so
identical inputs always produce identical plans. The baselines share phase 3
and differ only in how they order the pending set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

from .core import Duration, PendingRequest, TaskState, TimePoint
from .engines import DOWN, UP, EngineProfile, NetworkModel, batch_latency, transfer_time
from .waiting import current_wait_ratio

KAIROS = "kairos"
FIFO = "fifo"
LAS = "las"

POLICIES = (KAIROS, FIFO, LAS)


@dataclass(frozen=True)
class SchedulerConfig:
    policy: str = KAIROS
    buckets: int = 10
    aging_interval: int = 5
    stale_threshold: Duration = 150_000
    default_exec_estimate: Duration = 166_667  # cold start: a short prefix's runtime

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.buckets < 1:
            raise ValueError(f"buckets must be >= 1, got {self.buckets}")
        if self.aging_interval < 1:
            raise ValueError(f"aging_interval must be >= 1, got {self.aging_interval}")
        if self.stale_threshold < 0:
            raise ValueError("stale_threshold must be >= 0")
        if self.default_exec_estimate < 0:
            raise ValueError("default_exec_estimate must be >= 0")


@dataclass(frozen=True)
class DispatchPlan:
    """One planning round's outcome: per-tier dispatch lists plus leftovers.

    edge + cloud + deferred is always a permutation of the pending input.
    Deferred requests carry their incremented skip counters. refetch_task_ids
    marks dispatched requests whose observation outlived the staleness bound
    and must be refreshed from the client before inference.
    """

    edge: tuple
    cloud: tuple
    deferred: tuple
    refetch_task_ids: frozenset

    @property
    def dispatched(self) -> tuple:
        return self.edge + self.cloud


def assign_bucket(wr: float, skipped: int, cfg: SchedulerConfig) -> int:
    """Equal-width bucket for a wait ratio, with skip-based promotion."""
    if not 0.0 <= wr <= 1.0:
        raise ValueError(f"wait ratio must be in [0, 1], got {wr}")
    if skipped < 0:
        raise ValueError(f"skipped must be >= 0, got {skipped}")
    b = min(cfg.buckets - 1, int(math.floor(wr * cfg.buckets)))
    if skipped >= cfg.aging_interval:
        b = min(cfg.buckets - 1, b + skipped // cfg.aging_interval)
    return b


def estimate_exec_latency(
    state: TaskState, default: Optional[Duration] = None
) -> Duration:
    """Predicted execution duration of the task's next round.

    Physical motion changes gradually between rounds, so the last observed
    execution duration is the predictor. Tasks with no completed round yet get
    the configured default: a deliberately short estimate, so unknown newcomers
    do not jump ahead of known execution-dominant tasks.
    """
    last = state.last_exec_duration()
    if last is not None:
        return last
    return default if default is not None else 0


def order_within_bucket(
    requests: Sequence[PendingRequest],
    exec_estimates: Mapping[str, Duration],
    cfg: SchedulerConfig,
) -> list[PendingRequest]:
    """Descending by aged execution estimate; arrival then task id break ties."""
    def key(req: PendingRequest):
        aged = exec_estimates[req.task_id] * (1 + req.skipped)
        return (-aged, req.issued_at, req.task_id)

    return sorted(requests, key=key)


def _ordered_kairos(
    pending: Sequence[PendingRequest],
    states: Mapping[str, TaskState],
    now: TimePoint,
    cfg: SchedulerConfig,
) -> list[PendingRequest]:
    estimates = {
        r.task_id: estimate_exec_latency(states[r.task_id], cfg.default_exec_estimate)
        for r in pending
    }
    buckets: dict[int, list[PendingRequest]] = {}
    for req in pending:
        wr = current_wait_ratio(states[req.task_id], now)
        b = assign_bucket(wr, req.skipped, cfg)
        buckets.setdefault(b, []).append(req)

    ordered: list[PendingRequest] = []
    for b in range(cfg.buckets - 1, -1, -1):
        if b in buckets:
            ordered.extend(order_within_bucket(buckets[b], estimates, cfg))
    return ordered


def _ordered_fifo(pending: Sequence[PendingRequest]) -> list[PendingRequest]:
    return sorted(pending, key=lambda r: (r.issued_at, r.task_id))


def _ordered_las(
    pending: Sequence[PendingRequest], states: Mapping[str, TaskState]
) -> list[PendingRequest]:
    return sorted(
        pending,
        key=lambda r: (
            states[r.task_id].accumulated_generation,
            r.issued_at,
            r.task_id,
        ),
    )


def _drain_time(profile: EngineProfile, queued: int) -> Duration:
    if queued <= 0:
        return 0
    full_waves = math.ceil(queued / profile.max_batch)
    return full_waves * batch_latency(profile, profile.max_batch)


def _edge_estimate(
    edge: Optional[EngineProfile], queue_ahead: int, planned_edge: int
) -> Optional[Duration]:
    """Queue drain plus own compute on the edge; infinite if there is no edge."""
    if edge is None:
        return None
    own_batch = min(max(planned_edge, 1), edge.max_batch)
    return _drain_time(edge, queue_ahead) + batch_latency(edge, own_batch)


def _cloud_estimate(
    cloud: EngineProfile,
    net: NetworkModel,
    req: PendingRequest,
    queue_ahead: int,
    planned_cloud: int,
) -> Duration:
    own_batch = min(planned_cloud + 1, cloud.max_batch)
    return (
        _drain_time(cloud, queue_ahead)
        + transfer_time(net, req.payload_bytes, UP)
        + batch_latency(cloud, own_batch)
        + transfer_time(net, 0, DOWN)
    )


def _place(
    ordered: Sequence[PendingRequest],
    edge: Optional[EngineProfile],
    cloud: Optional[EngineProfile],
    net: Optional[NetworkModel],
    cfg: SchedulerConfig,
    now: TimePoint,
    states: Mapping[str, TaskState],
    edge_in_flight: int,
    cloud_in_flight: int,
) -> DispatchPlan:
    edge_avail = max(0, edge.capacity - edge_in_flight) if edge is not None else 0
    cloud_avail = max(0, cloud.capacity - cloud_in_flight) if cloud is not None else 0

    s_edge = list(ordered[: min(edge_avail, len(ordered))])
    s_cloud: list[PendingRequest] = []
    deferred: list[PendingRequest] = []
    for req in ordered[len(s_edge):]:
        if cloud is None or net is None or len(s_cloud) >= cloud_avail:
            deferred.append(req)
            continue
        edge_est = _edge_estimate(edge, edge_in_flight + len(s_edge), len(s_edge))
        cloud_est = _cloud_estimate(
            cloud, net, req, cloud_in_flight + len(s_cloud), len(s_cloud)
        )
        if edge_est is None or cloud_est < edge_est:
            s_cloud.append(req)
        else:
            deferred.append(req)

    refetch = frozenset(
        r.task_id
        for r in s_edge + s_cloud
        if now - r.obs_captured_at > cfg.stale_threshold
    )

    for req in s_edge + s_cloud:
        states[req.task_id].skipped = 0
    bumped = []
    for req in deferred:
        states[req.task_id].skipped = req.skipped + 1
        bumped.append(replace(req, skipped=req.skipped + 1))

    return DispatchPlan(
        edge=tuple(s_edge),
        cloud=tuple(s_cloud),
        deferred=tuple(bumped),
        refetch_task_ids=refetch,
    )


def _checked_pending(
    pending: Iterable[PendingRequest], states: Mapping[str, TaskState]
) -> list[PendingRequest]:
    reqs = sorted(pending, key=lambda r: (r.issued_at, r.task_id))
    for req in reqs:
        if req.task_id not in states:
            raise ValueError(f"pending request references unknown task {req.task_id!r}")
    return reqs


def plan(
    pending: Iterable[PendingRequest],
    states: Mapping[str, TaskState],
    edge: Optional[EngineProfile],
    cloud: Optional[EngineProfile],
    net: Optional[NetworkModel],
    now: TimePoint,
    cfg: SchedulerConfig,
    *,
    edge_in_flight: int = 0,
    cloud_in_flight: int = 0,
) -> DispatchPlan:
    """One planning round under the configured policy."""
    reqs = _checked_pending(pending, states)
    if cfg.policy == KAIROS:
        ordered = _ordered_kairos(reqs, states, now, cfg)
    elif cfg.policy == FIFO:
        ordered = _ordered_fifo(reqs)
    else:
        ordered = _ordered_las(reqs, states)
    return _place(
        ordered, edge, cloud, net, cfg, now, states, edge_in_flight, cloud_in_flight
    )


def plan_fifo(pending, states, edge, cloud, net, now, cfg, **kw) -> DispatchPlan:
    return plan(pending, states, edge, cloud, net, now, replace(cfg, policy=FIFO), **kw)


def plan_las(pending, states, edge, cloud, net, now, cfg, **kw) -> DispatchPlan:
    return plan(pending, states, edge, cloud, net, now, replace(cfg, policy=LAS), **kw)
