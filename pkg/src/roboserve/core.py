"""Shared domain types for multi-round generate-execute tasks.

Every timestamp in the system is an integer count of microseconds since the
simulation epoch, and every span is a non-negative integer microsecond count.
Conversions between action counts and durations round half-up, so time
arithmetic is closed over the integers and replays compare bit-exact.

Intervals are half-open ``[start, end)``: one phase may begin exactly where
the previous one ends with zero measured gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

TimePoint = int
Duration = int

US_PER_SECOND = 1_000_000


def round_half_up(x: Fraction) -> int:
    """floor(x + 1/2) for a non-negative rational, without float detours."""
    if x < 0:
        raise ValueError(f"round_half_up expects a non-negative value, got {x}")
    return (2 * x.numerator + x.denominator) // (2 * x.denominator)


def us_from_actions(count: int, control_hz: float) -> Duration:
    """Duration of `count` actions at `control_hz` actions per second.

    The exact rational count/control_hz seconds is converted to integer
    microseconds with round-half-up. `control_hz` may be int or float; floats
    are taken at their exact binary value so results are deterministic.
    """
    if count < 0:
        raise ValueError(f"action count must be >= 0, got {count}")
    if control_hz <= 0:
        raise ValueError(f"control_hz must be > 0, got {control_hz}")
    return round_half_up(Fraction(count) * US_PER_SECOND / Fraction(control_hz))


def exec_duration(horizon: int, control_hz: float) -> Duration:
    """Time to execute `horizon` actions at the given control frequency."""
    return us_from_actions(horizon, control_hz)


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open time interval [start, end) in microseconds."""

    start: TimePoint
    end: TimePoint

    def __post_init__(self) -> None:
        if self.end < self.start:
            raise ValueError(f"interval end {self.end} precedes start {self.start}")

    def __len__(self) -> int:
        return self.end - self.start

    @property
    def length(self) -> Duration:
        return self.end - self.start


@dataclass(frozen=True)
class ActionChunk:
    """One inference round's output: N actions, of which the first H execute."""

    chunk_size: int
    control_hz: float
    horizon: int

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.control_hz <= 0:
            raise ValueError(f"control_hz must be > 0, got {self.control_hz}")
        if not 1 <= self.horizon <= self.chunk_size:
            raise ValueError(
                f"horizon must satisfy 1 <= H <= {self.chunk_size}, got {self.horizon}"
            )

    @property
    def prefix_duration(self) -> Duration:
        """Execution time of the retained H-action prefix."""
        return exec_duration(self.horizon, self.control_hz)


@dataclass(frozen=True)
class RoundTimeline:
    """Completed generation and execution intervals of one round."""

    round_id: int
    gen: Interval
    exec: Interval
    horizon_used: int

    def __post_init__(self) -> None:
        if self.round_id < 0:
            raise ValueError(f"round_id must be >= 0, got {self.round_id}")
        if self.horizon_used < 1:
            raise ValueError(f"horizon_used must be >= 1, got {self.horizon_used}")
        if self.exec.start < self.gen.end:
            raise ValueError(
                f"round {self.round_id}: execution starts at {self.exec.start} "
                f"before generation ends at {self.gen.end}"
            )


@dataclass(frozen=True)
class LastExecInfo:
    """Piggybacked metadata: where the previous execution phase stood at issue.

    A round-0 request, which has no previous execution, carries the degenerate
    (issue time, 0) pair; its reconstructed interval is empty.
    """

    exec_start: TimePoint
    remaining_actions: int

    def __post_init__(self) -> None:
        if self.remaining_actions < 0:
            raise ValueError(
                f"remaining_actions must be >= 0, got {self.remaining_actions}"
            )


@dataclass(frozen=True)
class PendingRequest:
    """One generation request awaiting dispatch.

    At most one request per task is pending at any time; `skipped` mirrors the
    task's consecutive-deferral counter so ordering can read it directly.
    """

    task_id: str
    round_id: int
    issued_at: TimePoint
    obs_captured_at: TimePoint
    last_exec_info: LastExecInfo
    payload_bytes: int
    skipped: int = 0

    def __post_init__(self) -> None:
        if self.round_id < 0:
            raise ValueError(f"round_id must be >= 0, got {self.round_id}")
        if self.payload_bytes < 0:
            raise ValueError(f"payload_bytes must be >= 0, got {self.payload_bytes}")
        if self.skipped < 0:
            raise ValueError(f"skipped must be >= 0, got {self.skipped}")


def exec_end_from_piggyback(req: PendingRequest, control_hz: float) -> TimePoint:
    """End of the previous execution phase, reconstructed from the request.

    The robot drains remaining actions at a fixed rate, so the previous phase
    ends remaining_actions/control_hz after the request was issued. With zero
    remaining actions this is the issue time itself.
    """
    return req.issued_at + us_from_actions(
        req.last_exec_info.remaining_actions, control_hz
    )


@dataclass
class TaskState:
    """Mutable per-task record kept by the serving side.

    Generation intervals are recorded in two steps (start at batch start, end
    at batch completion) because the wait-ratio signal needs the successor's
    generation start before that generation finishes. Execution intervals are
    recorded whole: the end is fixed the moment execution starts.

    Only the single-threaded simulation loop mutates a TaskState.
    """

    task_id: str
    t_start: TimePoint
    skipped: int = 0
    accumulated_generation: Duration = 0
    gen_starts: list = field(default_factory=list)
    gen_ends: list = field(default_factory=list)
    exec_intervals: list = field(default_factory=list)
    horizons: list = field(default_factory=list)

    def begin_generation(self, round_id: int, at: TimePoint) -> None:
        if round_id != len(self.gen_starts):
            raise ValueError(
                f"task {self.task_id}: generation for round {round_id} out of order "
                f"(expected round {len(self.gen_starts)})"
            )
        self.gen_starts.append(at)
        self.gen_ends.append(None)

    def finish_generation(self, round_id: int, at: TimePoint) -> None:
        if round_id >= len(self.gen_starts) or self.gen_ends[round_id] is not None:
            raise ValueError(
                f"task {self.task_id}: round {round_id} generation not in flight"
            )
        if at < self.gen_starts[round_id]:
            raise ValueError(
                f"task {self.task_id}: round {round_id} generation ends before it starts"
            )
        self.gen_ends[round_id] = at

    def record_execution(
        self, round_id: int, start: TimePoint, end: TimePoint, horizon: int
    ) -> None:
        if round_id != len(self.exec_intervals):
            raise ValueError(
                f"task {self.task_id}: execution for round {round_id} out of order "
                f"(expected round {len(self.exec_intervals)})"
            )
        self.exec_intervals.append(Interval(start, end))
        self.horizons.append(horizon)

    def gen_interval(self, round_id: int) -> Optional[Interval]:
        """Completed generation interval for a round, or None if still open."""
        if round_id >= len(self.gen_starts) or self.gen_ends[round_id] is None:
            return None
        return Interval(self.gen_starts[round_id], self.gen_ends[round_id])

    def last_exec_duration(self) -> Optional[Duration]:
        if not self.exec_intervals:
            return None
        return self.exec_intervals[-1].length

    @property
    def rounds_recorded(self) -> int:
        return len(self.exec_intervals)

    @property
    def timelines(self) -> tuple:
        """RoundTimeline for every round whose generation and execution are both complete."""
        out = []
        for j, exec_iv in enumerate(self.exec_intervals):
            gen_iv = self.gen_interval(j)
            if gen_iv is None:
                break
            out.append(
                RoundTimeline(
                    round_id=j, gen=gen_iv, exec=exec_iv, horizon_used=self.horizons[j]
                )
            )
        return tuple(out)
