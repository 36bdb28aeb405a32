"""Per-round wait measurement and the wait-ratio priority signal.

A round's wait is measured on its dominant side. When generation dominates
(|G_j| >= |E_j|), even a perfect schedule leaves a gap on the execution side,
so the wait is the gap between G_j ending and G_{j+1} starting. When execution
dominates, the next generation can fully overlap the ongoing execution, so the
wait is the gap between E_j ending and E_{j+1} starting. Negative gaps clamp
to zero: waiting is a delay, never a credit.

The wait ratio divides a task's accumulated wait by its lifetime, giving a
[0, 1] priority signal that favours disproportionately delayed tasks without
the long-task bias of raw accumulated wait.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import Duration, Interval, TaskState, TimePoint


@dataclass(frozen=True)
class WaitLedger:
    """Ordered per-round waits for one task, with their cached sum."""

    waits: tuple
    total_wait: Duration

    @classmethod
    def from_waits(cls, waits: Sequence[Duration]) -> "WaitLedger":
        waits = tuple(int(w) for w in waits)
        if any(w < 0 for w in waits):
            raise ValueError("per-round waits must be >= 0")
        return cls(waits=waits, total_wait=sum(waits))


def _check_round_pair(gen: Interval, exc: Interval, label: str) -> None:
    if exc.start < gen.end:
        raise ValueError(
            f"{label}: execution [{exc.start}, {exc.end}) begins before "
            f"generation [{gen.start}, {gen.end}) ends"
        )


def round_wait(
    gen_j: Interval,
    exec_j: Interval,
    gen_next: Interval,
    exec_next: Interval,
) -> Duration:
    """Wait between round j and round j+1, measured on round j's dominant side."""
    _check_round_pair(gen_j, exec_j, "round j")
    _check_round_pair(gen_next, exec_next, "round j+1")
    if gen_next.start < gen_j.start or exec_next.start < exec_j.start:
        raise ValueError("round j+1 intervals precede round j: rounds out of order")
    if gen_j.length >= exec_j.length:
        return max(0, gen_next.start - gen_j.end)
    return max(0, exec_next.start - exec_j.end)


def wait_ratio(ledger: WaitLedger, t_start: TimePoint, t_now: TimePoint) -> float:
    """Accumulated wait over lifetime, clamped into [0, 1]."""
    if t_now <= t_start:
        raise ValueError(f"t_now {t_now} must be after t_start {t_start}")
    return min(1.0, max(0.0, ledger.total_wait / (t_now - t_start)))


def ledger_from_history(state: TaskState) -> WaitLedger:
    """Build a task's wait ledger from whatever history is recorded so far.

    For each consecutive round pair, the dominant side of round j decides
    which successor timestamp is needed: the gen branch needs G_{j+1}'s start
    (known once its batch starts), the exec branch needs E_{j+1}'s start. A
    pair whose needed timestamp is not yet recorded contributes nothing until
    it is. The final round of a task has no successor and accrues no wait.
    """
    waits: list[Duration] = []
    # Execution is only ever recorded after its generation completed, so every
    # round with a recorded execution interval has a closed gen interval too.
    n_rounds = len(state.exec_intervals)
    for j in range(n_rounds):
        gen_j = state.gen_interval(j)
        exec_j = state.exec_intervals[j]
        if gen_j.length >= exec_j.length:
            # Gen branch: needs only the successor's generation start, which
            # is known the moment its batch starts, even mid-flight.
            if len(state.gen_starts) > j + 1:
                waits.append(max(0, state.gen_starts[j + 1] - gen_j.end))
        else:
            if j + 1 < n_rounds:
                waits.append(max(0, state.exec_intervals[j + 1].start - exec_j.end))
    return WaitLedger.from_waits(waits)


def current_wait_ratio(state: TaskState, now: TimePoint) -> float:
    """Wait ratio of a live task at `now`; zero while the task has no lifetime."""
    if now <= state.t_start:
        return 0.0
    return wait_ratio(ledger_from_history(state), state.t_start, now)
