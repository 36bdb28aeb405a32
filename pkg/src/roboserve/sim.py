"""Deterministic discrete-event replay of traces against the serving model.

The loop is strictly single-threaded. Events are processed in causal order;
the exported log is canonically sorted by (time, kind priority, subject), and
identical inputs produce bit-identical logs.

Round 0 of a task is requested at arrival; round j >= 1 is requested the
instant execution of round j-1 reaches its recorded trigger index. A robot
whose executed prefix runs out before the next chunk lands stalls until
delivery. Engines serve requests in batches formed at dispatch; a tier's
capacity bounds how many requests may be in flight on it at once, so a
saturated tier serializes into back-to-back full batches while an
underutilized one starts work the moment it arrives.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import (
    Duration,
    LastExecInfo,
    PendingRequest,
    TaskState,
    TimePoint,
    exec_duration,
    us_from_actions,
)
from .engines import CLOUD, DOWN, EDGE, UP, EngineProfile, NetworkModel, batch_latency, transfer_time
from .scheduler import SchedulerConfig, plan
from .waiting import ledger_from_history
from .workload import TaskTrace

EVENT_KINDS = (
    "task_arrival",
    "request_issued",
    "plan_invoked",
    "batch_started",
    "batch_completed",
    "chunk_delivered",
    "exec_started",
    "exec_completed",
    "stall_started",
    "stall_ended",
    "task_completed",
)
_KIND_PRIORITY = {kind: i for i, kind in enumerate(EVENT_KINDS)}

PLAN_EVENT_DRIVEN = "event"
PLAN_FIXED_INTERVAL = "interval"


class SimulationError(RuntimeError):
    pass


class LivelockError(SimulationError):
    """No event progress while tasks remain incomplete."""


@dataclass(frozen=True)
class Event:
    at: TimePoint
    kind: str
    task_id: str = ""
    round_id: int = -1
    tier: str = ""
    batch_id: int = -1

    def sort_key(self):
        return (self.at, _KIND_PRIORITY[self.kind], self.task_id, self.round_id,
                self.tier, self.batch_id)

    def to_dict(self) -> dict:
        return {
            "at": self.at,
            "kind": self.kind,
            "task_id": self.task_id,
            "round_id": self.round_id,
            "tier": self.tier,
            "batch_id": self.batch_id,
        }


@dataclass(frozen=True)
class SimConfig:
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    edge: Optional[EngineProfile] = None
    cloud: Optional[EngineProfile] = None
    network: Optional[NetworkModel] = None
    edge_network: Optional[NetworkModel] = None
    plan_mode: str = PLAN_EVENT_DRIVEN
    plan_interval_us: Duration = 50_000
    seed: int = 0
    max_events: int = 50_000_000

    def __post_init__(self) -> None:
        if self.edge is None and self.cloud is None:
            raise ValueError("need at least one serving tier")
        if self.edge is not None and self.edge.tier != EDGE:
            raise ValueError("edge profile must have tier='edge'")
        if self.cloud is not None and self.cloud.tier != CLOUD:
            raise ValueError("cloud profile must have tier='cloud'")
        if self.cloud is not None and self.network is None:
            raise ValueError("a cloud tier requires a network model")
        if self.plan_mode not in (PLAN_EVENT_DRIVEN, PLAN_FIXED_INTERVAL):
            raise ValueError(f"unknown plan_mode {self.plan_mode!r}")
        if self.plan_mode == PLAN_FIXED_INTERVAL and self.plan_interval_us < 1:
            raise ValueError("plan_interval_us must be >= 1")


@dataclass(frozen=True)
class TaskRunStats:
    task_id: str
    arrival: TimePoint
    completed_at: TimePoint
    latency_us: Duration
    wait_us: Duration
    offloaded_rounds: int
    total_rounds: int
    success: bool


@dataclass(frozen=True)
class SimResult:
    events: tuple
    states: dict
    task_stats: dict

    def event_log_lines(self) -> list[str]:
        return [json.dumps(e.to_dict(), separators=(",", ":")) for e in self.events]

    def write_event_log(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.event_log_lines()) + "\n", encoding="utf-8")


@dataclass
class _TaskRun:
    trace: TaskTrace
    state: TaskState
    arrival: TimePoint
    delivered: dict = field(default_factory=dict)
    round_tier: dict = field(default_factory=dict)
    exec_begun: set = field(default_factory=set)
    waiting_for: Optional[int] = None
    done: bool = False


@dataclass
class _Batch:
    batch_id: int
    tier: str
    members: tuple  # (task_id, round_id) in dispatch order
    started_at: TimePoint = -1


class _TierRun:
    def __init__(self, profile: EngineProfile, network: Optional[NetworkModel]):
        self.profile = profile
        self.network = network
        self.in_flight = 0


class _Sim:
    def __init__(
        self,
        traces: Sequence[TaskTrace],
        cfg: SimConfig,
        arrivals: Optional[Sequence[TimePoint]] = None,
        fleet_slots: Optional[int] = None,
    ):
        if (arrivals is None) == (fleet_slots is None):
            raise ValueError("exactly one of arrivals or fleet_slots must be given")
        if arrivals is not None and len(arrivals) != len(traces):
            raise ValueError(
                f"{len(arrivals)} arrivals for {len(traces)} traces; counts must match"
            )
        if fleet_slots is not None and fleet_slots < 1:
            raise ValueError("fleet size must be >= 1")
        ids = [t.task_id for t in traces]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate task ids in trace set")

        self.cfg = cfg
        self.traces = list(traces)
        self.arrivals = list(arrivals) if arrivals is not None else None
        self.fleet_slots = fleet_slots
        self.tiers: dict[str, _TierRun] = {}
        if cfg.edge is not None:
            self.tiers[EDGE] = _TierRun(cfg.edge, cfg.edge_network)
        if cfg.cloud is not None:
            self.tiers[CLOUD] = _TierRun(cfg.cloud, cfg.network)

        self.tasks: dict[str, _TaskRun] = {}
        self.states: dict[str, TaskState] = {}
        self.pending: dict[str, PendingRequest] = {}
        self.events: list[Event] = []
        self.heap: list = []
        self.seq = 0
        self.batch_seq = 0
        self.completed = 0
        self.fleet_queue: list[TaskTrace] = []
        self.plan_scheduled_at: Optional[TimePoint] = None
        self.now: TimePoint = 0

    # -- event plumbing -------------------------------------------------

    def _push(self, at: TimePoint, kind: str, handler, subject=("", -1, "", -1)):
        prio = _KIND_PRIORITY.get(kind, 1)  # internal kinds ride at issue priority
        heapq.heappush(self.heap, (at, prio, subject, self.seq, kind, handler))
        self.seq += 1

    def _log(self, at, kind, task_id="", round_id=-1, tier="", batch_id=-1):
        self.events.append(
            Event(at=at, kind=kind, task_id=task_id, round_id=round_id, tier=tier,
                  batch_id=batch_id)
        )

    # -- arrival / request issue -----------------------------------------

    def _on_arrival(self, at: TimePoint, trace: TaskTrace):
        state = TaskState(task_id=trace.task_id, t_start=at)
        self.states[trace.task_id] = state
        self.tasks[trace.task_id] = _TaskRun(trace=trace, state=state, arrival=at)
        self._log(at, "task_arrival", task_id=trace.task_id)
        self._issue_request(at, trace.task_id, 0)

    def _issue_request(self, at: TimePoint, task_id: str, round_id: int):
        task = self.tasks[task_id]
        trace = task.trace
        if round_id == 0:
            last = LastExecInfo(exec_start=at, remaining_actions=0)
        else:
            prev = task.state.exec_intervals[round_id - 1]
            remaining = (
                trace.rounds[round_id - 1].horizon
                - trace.rounds[round_id].trigger_action_index
            )
            last = LastExecInfo(exec_start=prev.start, remaining_actions=remaining)
        req = PendingRequest(
            task_id=task_id,
            round_id=round_id,
            issued_at=at,
            obs_captured_at=at,
            last_exec_info=last,
            payload_bytes=trace.obs_payload_bytes,
            skipped=0,
        )
        self._log(at, "request_issued", task_id=task_id, round_id=round_id)
        edge_net = self.cfg.edge_network
        if edge_net is not None:
            arrive = at + transfer_time(edge_net, req.payload_bytes, UP)
            self._push(arrive, "_request_arrived",
                       lambda t, r=req: self._on_request_arrived(t, r),
                       subject=(task_id, round_id, "", -1))
        else:
            self._on_request_arrived(at, req)

    def _on_request_arrived(self, at: TimePoint, req: PendingRequest):
        if req.task_id in self.pending:
            raise SimulationError(
                f"task {req.task_id} already has a pending request"
            )
        self.pending[req.task_id] = req
        if self._any_availability():
            self._schedule_plan(at)

    # -- planning ---------------------------------------------------------

    def _any_availability(self) -> bool:
        return any(t.in_flight < t.profile.capacity for t in self.tiers.values())

    def _schedule_plan(self, at: TimePoint):
        if self.cfg.plan_mode != PLAN_EVENT_DRIVEN:
            return
        if self.plan_scheduled_at == at:
            return
        self.plan_scheduled_at = at
        self._push(at, "plan_invoked", lambda t: self._on_plan(t))

    def _on_plan(self, at: TimePoint):
        if self.plan_scheduled_at == at:
            self.plan_scheduled_at = None
        if self.cfg.plan_mode == PLAN_FIXED_INTERVAL:
            if self.completed < len(self.traces) or self.fleet_queue:
                self._push(at + self.cfg.plan_interval_us, "plan_invoked",
                           lambda t: self._on_plan(t))
        if not self.pending or not self._any_availability():
            return

        edge = self.tiers.get(EDGE)
        cloud = self.tiers.get(CLOUD)
        self._log(at, "plan_invoked")
        decision = plan(
            list(self.pending.values()),
            self.states,
            edge.profile if edge else None,
            cloud.profile if cloud else None,
            self.cfg.network,
            at,
            self.cfg.scheduler,
            edge_in_flight=edge.in_flight if edge else 0,
            cloud_in_flight=cloud.in_flight if cloud else 0,
        )
        self.pending = {r.task_id: r for r in decision.deferred}
        self._dispatch(at, EDGE, decision.edge, decision.refetch_task_ids)
        self._dispatch(at, CLOUD, decision.cloud, decision.refetch_task_ids)

    def _refetch_delay(self, req: PendingRequest) -> Duration:
        net = self.cfg.edge_network
        if net is None:
            return 0
        return transfer_time(net, 0, DOWN) + transfer_time(net, req.payload_bytes, UP)

    def _dispatch(self, at: TimePoint, tier_name: str, reqs: Sequence[PendingRequest],
                  refetch_ids: frozenset):
        if not reqs:
            return
        tier = self.tiers[tier_name]
        tier.in_flight += len(reqs)
        immediate = []
        for req in reqs:
            delay = self._refetch_delay(req) if req.task_id in refetch_ids else 0
            if delay > 0:
                # The refreshed observation arrives one client round-trip
                # later; only this request's dispatch slips, not its batch.
                fresh = replace(req, obs_captured_at=at + delay)
                self._push(at + delay, "_dispatch_single",
                           lambda t, r=fresh, tn=tier_name: self._start_batch(t, tn, (r,)),
                           subject=(req.task_id, req.round_id, tier_name, -1))
            else:
                immediate.append(req)
        max_batch = tier.profile.max_batch
        for i in range(0, len(immediate), max_batch):
            self._start_batch(at, tier_name, tuple(immediate[i:i + max_batch]))

    def _start_batch(self, at: TimePoint, tier_name: str, reqs: tuple):
        tier = self.tiers[tier_name]
        batch = _Batch(
            batch_id=self.batch_seq,
            tier=tier_name,
            members=tuple((r.task_id, r.round_id) for r in reqs),
        )
        self.batch_seq += 1
        start = at
        if tier_name == CLOUD:
            start = at + max(
                transfer_time(self.cfg.network, r.payload_bytes, UP) for r in reqs
            )
        self._push(start, "batch_started",
                   lambda t, b=batch: self._on_batch_started(t, b),
                   subject=("", -1, tier_name, batch.batch_id))

    def _on_batch_started(self, at: TimePoint, batch: _Batch):
        batch.started_at = at
        tier = self.tiers[batch.tier]
        self._log(at, "batch_started", tier=batch.tier, batch_id=batch.batch_id)
        for task_id, round_id in batch.members:
            self.states[task_id].begin_generation(round_id, at)
        done = at + batch_latency(tier.profile, len(batch.members))
        self._push(done, "batch_completed",
                   lambda t, b=batch: self._on_batch_completed(t, b),
                   subject=("", -1, batch.tier, batch.batch_id))

    def _on_batch_completed(self, at: TimePoint, batch: _Batch):
        tier = self.tiers[batch.tier]
        tier.in_flight -= len(batch.members)
        self._log(at, "batch_completed", tier=batch.tier, batch_id=batch.batch_id)
        compute = at - batch.started_at
        for task_id, round_id in batch.members:
            state = self.states[task_id]
            state.finish_generation(round_id, at)
            state.accumulated_generation += compute
            task = self.tasks[task_id]
            task.round_tier[round_id] = batch.tier
            delivery = at + self._delivery_transfer(batch.tier, task.trace)
            self._push(delivery, "chunk_delivered",
                       lambda t, tid=task_id, rid=round_id: self._on_delivered(t, tid, rid),
                       subject=(task_id, round_id, batch.tier, batch.batch_id))
        if self.pending:
            self._schedule_plan(at)

    def _delivery_transfer(self, tier_name: str, trace: TaskTrace) -> Duration:
        total = 0
        if tier_name == CLOUD:
            total += transfer_time(self.cfg.network, trace.action_payload_bytes, DOWN)
        if self.cfg.edge_network is not None:
            total += transfer_time(self.cfg.edge_network, trace.action_payload_bytes, DOWN)
        return total

    # -- execution ---------------------------------------------------------

    def _begin_exec(self, at: TimePoint, task_id: str, round_id: int):
        task = self.tasks[task_id]
        if round_id in task.exec_begun:
            return
        task.exec_begun.add(round_id)
        self._push(at, "exec_started",
                   lambda t, tid=task_id, rid=round_id: self._on_exec_started(t, tid, rid),
                   subject=(task_id, round_id, "", -1))

    def _on_delivered(self, at: TimePoint, task_id: str, round_id: int):
        task = self.tasks[task_id]
        self._log(at, "chunk_delivered", task_id=task_id, round_id=round_id)
        task.delivered[round_id] = at
        if round_id == 0:
            self._begin_exec(at, task_id, round_id)
            return
        prev_end = task.state.exec_intervals[round_id - 1].end
        if task.waiting_for == round_id:
            task.waiting_for = None
            self._log(at, "stall_ended", task_id=task_id, round_id=round_id)
            self._begin_exec(at, task_id, round_id)
        elif at >= prev_end:
            # Previous round finished this same instant; its completion event
            # is still queued behind this delivery, so no stall was recorded.
            self._begin_exec(at, task_id, round_id)
        # else: delivered early; the previous round's completion chains us in.

    def _on_exec_started(self, at: TimePoint, task_id: str, round_id: int):
        task = self.tasks[task_id]
        trace = task.trace
        horizon = trace.rounds[round_id].horizon
        end = at + exec_duration(horizon, trace.control_hz)
        task.state.record_execution(round_id, at, end, horizon)
        self._log(at, "exec_started", task_id=task_id, round_id=round_id)
        if round_id + 1 < len(trace.rounds):
            trigger = trace.rounds[round_id + 1].trigger_action_index
            remaining = horizon - trigger
            issue_at = end - us_from_actions(remaining, trace.control_hz)
            self._push(issue_at, "request_issued",
                       lambda t, tid=task_id, rid=round_id + 1: self._issue_request(t, tid, rid),
                       subject=(task_id, round_id + 1, "", -1))
        self._push(end, "exec_completed",
                   lambda t, tid=task_id, rid=round_id: self._on_exec_completed(t, tid, rid),
                   subject=(task_id, round_id, "", -1))

    def _on_exec_completed(self, at: TimePoint, task_id: str, round_id: int):
        task = self.tasks[task_id]
        self._log(at, "exec_completed", task_id=task_id, round_id=round_id)
        if round_id + 1 >= len(task.trace.rounds):
            self._push(at, "task_completed",
                       lambda t, tid=task_id: self._on_task_completed(t, tid),
                       subject=(task_id, -1, "", -1))
            return
        nxt = round_id + 1
        if nxt in task.delivered:
            self._begin_exec(at, task_id, nxt)
        else:
            task.waiting_for = nxt
            self._log(at, "stall_started", task_id=task_id, round_id=nxt)

    def _on_task_completed(self, at: TimePoint, task_id: str):
        task = self.tasks[task_id]
        task.done = True
        self.completed += 1
        self._log(at, "task_completed", task_id=task_id)
        if self.fleet_queue:
            nxt = self.fleet_queue.pop(0)
            self._push(at, "task_arrival",
                       lambda t, tr=nxt: self._on_arrival(t, tr),
                       subject=(nxt.task_id, -1, "", -1))

    # -- main loop ----------------------------------------------------------

    def run(self) -> SimResult:
        if self.arrivals is not None:
            for trace, at in zip(self.traces, self.arrivals):
                self._push(at, "task_arrival",
                           lambda t, tr=trace: self._on_arrival(t, tr),
                           subject=(trace.task_id, -1, "", -1))
        else:
            head = self.traces[: self.fleet_slots]
            self.fleet_queue = list(self.traces[self.fleet_slots:])
            for trace in head:
                self._push(0, "task_arrival",
                           lambda t, tr=trace: self._on_arrival(t, tr),
                           subject=(trace.task_id, -1, "", -1))
        if self.cfg.plan_mode == PLAN_FIXED_INTERVAL:
            self._push(0, "plan_invoked", lambda t: self._on_plan(t))

        processed = 0
        while self.heap:
            at, _prio, _subj, _seq, _kind, handler = heapq.heappop(self.heap)
            if at < self.now:
                raise SimulationError("event queue moved backwards in time")
            self.now = at
            handler(at)
            processed += 1
            if processed > self.cfg.max_events:
                raise LivelockError(
                    f"exceeded {self.cfg.max_events} events with "
                    f"{len(self.traces) - self.completed} tasks incomplete"
                )

        if self.completed != len(self.traces):
            stuck = sorted(t for t, run in self.tasks.items() if not run.done)
            never = len(self.traces) - len(self.tasks)
            raise LivelockError(
                f"simulation drained with {len(stuck)} started tasks incomplete "
                f"({stuck[:5]}...) and {never} never started"
            )

        self.events.sort(key=Event.sort_key)
        return SimResult(
            events=tuple(self.events),
            states=self.states,
            task_stats=self._stats(),
        )

    def _stats(self) -> dict:
        out = {}
        for task_id, task in self.tasks.items():
            state = task.state
            done_at = state.exec_intervals[-1].end
            ledger = ledger_from_history(state)
            offloaded = sum(1 for t in task.round_tier.values() if t == CLOUD)
            out[task_id] = TaskRunStats(
                task_id=task_id,
                arrival=task.arrival,
                completed_at=done_at,
                latency_us=done_at - task.arrival,
                wait_us=ledger.total_wait,
                offloaded_rounds=offloaded,
                total_rounds=len(task.trace.rounds),
                success=task.trace.success,
            )
        return out


def run(
    traces: Sequence[TaskTrace],
    arrivals: Sequence[TimePoint],
    cfg: SimConfig,
) -> SimResult:
    """Replay traces with explicit arrival times."""
    return _Sim(traces, cfg, arrivals=arrivals).run()


def run_fleet(traces: Sequence[TaskTrace], slots: int, cfg: SimConfig) -> SimResult:
    """Replay traces back-to-back over a fixed number of robot slots.

    The first `slots` traces start at time zero in input order; each slot
    picks up the next queued trace the moment its current task completes.
    """
    return _Sim(traces, cfg, fleet_slots=slots).run()
