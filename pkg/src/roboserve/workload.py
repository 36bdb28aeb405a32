"""Task traces: schema, JSONL round-trip, arrival and fixture generation.

A trace is the full observation-inference-execution history of one task run
in isolation, and is the unit of workload replay: at replay time the task
issues each round's request at the recorded action index of the previous
round's executed prefix, preserving the recorded horizons exactly.

Trace files are JSON Lines, one task per line, durations in integer
microseconds, matrices as nested arrays. They are meant to be streamed and
diffed, not read by humans.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Duration, TimePoint, exec_duration, us_from_actions
from .horizon import HorizonPolicyConfig, UpdateMagnitudes, decide_horizon


class TraceFormatError(ValueError):
    """Malformed or invariant-violating trace data.

    Carries enough context to name the offender: the 1-based line number for
    parse-level problems, plus task_id/round_id for semantic ones.
    """

    def __init__(
        self,
        message: str,
        *,
        line: Optional[int] = None,
        task_id: Optional[str] = None,
        round_id: Optional[int] = None,
    ) -> None:
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if task_id is not None:
            prefix.append(f"task {task_id!r}")
        if round_id is not None:
            prefix.append(f"round {round_id}")
        full = (": ".join([", ".join(prefix), message]) if prefix else message)
        super().__init__(full)
        self.raw_message = message
        self.line = line
        self.task_id = task_id
        self.round_id = round_id


@dataclass(frozen=True)
class RoundRecord:
    """One recorded generate-execute round.

    trigger_action_index is the index into the previous round's executed
    prefix at which this round's request was issued; round 0 is issued at task
    arrival and records index 0. update_magnitudes and action_trajectory are
    optional analysis payloads.
    """

    round_id: int
    trigger_action_index: int
    horizon: int
    chunk_size: int
    update_magnitudes: Optional[UpdateMagnitudes] = None
    action_trajectory: Optional[tuple] = None

    def __post_init__(self) -> None:
        if self.round_id < 0:
            raise TraceFormatError("round_id must be >= 0", round_id=self.round_id)
        if self.trigger_action_index < 0:
            raise TraceFormatError(
                "trigger_action_index must be >= 0", round_id=self.round_id
            )
        if not 1 <= self.horizon <= self.chunk_size:
            raise TraceFormatError(
                f"horizon {self.horizon} outside [1, chunk_size={self.chunk_size}]",
                round_id=self.round_id,
            )


@dataclass(frozen=True)
class TaskTrace:
    task_id: str
    control_hz: float
    obs_payload_bytes: int
    action_payload_bytes: int
    success: bool
    rounds: tuple

    def __post_init__(self) -> None:
        if not self.task_id:
            raise TraceFormatError("task_id must be non-empty")
        if self.control_hz <= 0:
            raise TraceFormatError("control_hz must be > 0", task_id=self.task_id)
        if self.obs_payload_bytes < 0 or self.action_payload_bytes < 0:
            raise TraceFormatError("payload sizes must be >= 0", task_id=self.task_id)
        if not self.rounds:
            raise TraceFormatError("trace has no rounds", task_id=self.task_id)
        for idx, rnd in enumerate(self.rounds):
            if rnd.round_id != idx:
                raise TraceFormatError(
                    f"round ids must be contiguous from 0, found {rnd.round_id} "
                    f"at position {idx}",
                    task_id=self.task_id,
                    round_id=rnd.round_id,
                )
            if idx >= 1:
                prev_h = self.rounds[idx - 1].horizon
                if rnd.trigger_action_index >= prev_h:
                    raise TraceFormatError(
                        f"trigger_action_index {rnd.trigger_action_index} must be "
                        f"< previous horizon {prev_h}",
                        task_id=self.task_id,
                        round_id=rnd.round_id,
                    )

    @property
    def total_actions(self) -> int:
        return sum(r.horizon for r in self.rounds)


# --- JSONL serialization ---------------------------------------------------

def _round_to_dict(rnd: RoundRecord) -> dict:
    out = {
        "round_id": rnd.round_id,
        "trigger_action_index": rnd.trigger_action_index,
        "horizon": rnd.horizon,
        "chunk_size": rnd.chunk_size,
        "update_magnitudes": None,
        "action_trajectory": None,
    }
    if rnd.update_magnitudes is not None:
        out["update_magnitudes"] = rnd.update_magnitudes.u.tolist()
    if rnd.action_trajectory is not None:
        out["action_trajectory"] = [list(row) for row in rnd.action_trajectory]
    return out


def trace_to_dict(trace: TaskTrace) -> dict:
    return {
        "task_id": trace.task_id,
        "control_hz": trace.control_hz,
        "obs_payload_bytes": trace.obs_payload_bytes,
        "action_payload_bytes": trace.action_payload_bytes,
        "success": trace.success,
        "rounds": [_round_to_dict(r) for r in trace.rounds],
    }


_ROUND_FIELDS = ("round_id", "trigger_action_index", "horizon", "chunk_size")
_TRACE_FIELDS = (
    "task_id",
    "control_hz",
    "obs_payload_bytes",
    "action_payload_bytes",
    "success",
    "rounds",
)


def _round_from_dict(data: dict, task_id: str, line: int) -> RoundRecord:
    for name in _ROUND_FIELDS:
        if name not in data:
            raise TraceFormatError(
                f"round is missing field {name!r}", line=line, task_id=task_id
            )
    round_id = data["round_id"]
    mags = None
    if data.get("update_magnitudes") is not None:
        try:
            mags = UpdateMagnitudes(np.asarray(data["update_magnitudes"]))
        except ValueError as exc:
            raise TraceFormatError(
                f"bad update_magnitudes: {exc}",
                line=line,
                task_id=task_id,
                round_id=round_id,
            ) from None
    traj = None
    if data.get("action_trajectory") is not None:
        traj = tuple(tuple(float(v) for v in row) for row in data["action_trajectory"])
    return RoundRecord(
        round_id=round_id,
        trigger_action_index=data["trigger_action_index"],
        horizon=data["horizon"],
        chunk_size=data["chunk_size"],
        update_magnitudes=mags,
        action_trajectory=traj,
    )


def trace_from_dict(data: dict, line: int = 0) -> TaskTrace:
    for name in _TRACE_FIELDS:
        if name not in data:
            raise TraceFormatError(f"trace is missing field {name!r}", line=line)
    task_id = data["task_id"]
    try:
        rounds = tuple(
            _round_from_dict(r, task_id, line) for r in data["rounds"]
        )
        return TaskTrace(
            task_id=task_id,
            control_hz=data["control_hz"],
            obs_payload_bytes=data["obs_payload_bytes"],
            action_payload_bytes=data["action_payload_bytes"],
            success=bool(data["success"]),
            rounds=rounds,
        )
    except TraceFormatError as exc:
        if exc.line is None:
            raise TraceFormatError(
                exc.raw_message,
                line=line,
                task_id=exc.task_id if exc.task_id is not None else task_id,
                round_id=exc.round_id,
            ) from None
        raise


def store_traces(traces: Iterable[TaskTrace], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_to_dict(trace), separators=(",", ":")))
            fh.write("\n")


def load_traces(path: str | Path) -> list[TaskTrace]:
    path = Path(path)
    traces: list[TaskTrace] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"invalid JSON: {exc.msg}", line=lineno) from None
            if not isinstance(data, dict):
                raise TraceFormatError("trace line must be a JSON object", line=lineno)
            traces.append(trace_from_dict(data, line=lineno))
    return traces


def load_trace_dir(path: str | Path) -> list[TaskTrace]:
    """All traces under a directory, files in sorted order."""
    path = Path(path)
    files = sorted(path.glob("*.jsonl"))
    traces: list[TaskTrace] = []
    for f in files:
        traces.extend(load_traces(f))
    return traces


# --- arrivals ----------------------------------------------------------------

def poisson_arrivals(rate: float, count: int, seed: int) -> list[TimePoint]:
    """Arrival timestamps of a seeded Poisson process, in microseconds.

    Gaps are i.i.d. exponential(rate) draws; each rounds to at least one
    microsecond so arrivals are strictly increasing.
    """
    if rate <= 0:
        raise ValueError(f"rate must be > 0, got {rate}")
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    gaps_s = rng.exponential(scale=1.0 / rate, size=count)
    arrivals: list[TimePoint] = []
    t = 0
    for gap in gaps_s:
        t += max(1, int(round(gap * 1_000_000)))
        arrivals.append(t)
    return arrivals


# --- synthetic traces --------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic task fixture.

    The magnitude model is geometric per-action decay u0 * rho^k with small
    multiplicative noise; a per-round tail of uncertain actions gets a
    final-step bump large enough to trip the thresholds under study. This is a
    fixture generator exercising the policy's trip logic, not a statistical
    claim about real refinement updates.
    """

    chunk_size: int = 50
    diffusion_steps: int = 6
    control_hz: float = 30.0
    action_budget: int = 200
    uncertain_fraction: float = 0.2
    decay: float = 0.55
    noise_scale: float = 0.05
    bump_factor: float = 1.8
    obs_payload_bytes: int = 300_000
    action_payload_bytes: int = 4_000
    success_rate: float = 1.0

    def __post_init__(self) -> None:
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.diffusion_steps < 2:
            raise ValueError("diffusion_steps must be >= 2")
        if self.control_hz <= 0:
            raise ValueError("control_hz must be > 0")
        if self.action_budget < 1:
            raise ValueError("action_budget must be >= 1")
        if not 0.0 <= self.uncertain_fraction <= 1.0:
            raise ValueError("uncertain_fraction must be in [0, 1]")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must be in (0, 1)")
        if not 0.0 <= self.noise_scale < 0.5:
            raise ValueError("noise_scale must be in [0, 0.5)")
        if self.bump_factor <= 1.0:
            raise ValueError("bump_factor must be > 1")
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError("success_rate must be in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown synthetic-spec fields: {sorted(unknown)}")
        return cls(**data)


def _synth_round_magnitudes(
    spec: SyntheticSpec, rng: np.random.Generator
) -> UpdateMagnitudes:
    k, n = spec.diffusion_steps, spec.chunk_size
    rho = rng.uniform(max(0.05, spec.decay - 0.15), min(0.9, spec.decay + 0.15), size=n)
    u0 = rng.uniform(0.5, 2.0, size=n)
    steps = np.arange(k).reshape(k, 1)
    noise = 1.0 + rng.uniform(-spec.noise_scale, spec.noise_scale, size=(k, n))
    u = u0 * (rho ** steps) * noise

    # The uncertain tail length varies round to round around the configured
    # fraction, which is what makes per-round horizons vary.
    frac = min(1.0, rng.uniform(0.0, 2.0 * spec.uncertain_fraction))
    n_uncertain = int(round(frac * n))
    if n_uncertain > 0:
        tail = slice(n - n_uncertain, n)
        earlier_mean = u[:-1, tail].mean(axis=0)
        u[-1, tail] = spec.bump_factor * earlier_mean
    return UpdateMagnitudes(u)


def generation_slack_actions(gen_latency: Duration, control_hz: float) -> int:
    """Actions the robot executes while one generation is in flight (ceil)."""
    return math.ceil(Fraction(gen_latency) * Fraction(control_hz) / 1_000_000)


def synthesize_trace(
    spec: SyntheticSpec,
    policy: HorizonPolicyConfig,
    gen_latency: Duration,
    seed: int,
    task_id: str = "task-0",
    with_trajectories: bool = False,
    trajectory_dim: int = 3,
) -> TaskTrace:
    """Generate one task trace whose request timing assumes zero contention.

    Each round's trigger index is placed so that, with `gen_latency` between
    issue and delivery, the next chunk lands exactly as the current prefix
    runs out. Generation must fit within the policy's smallest possible
    prefix, otherwise the construction cannot make the task progress.
    """
    floor_duration = exec_duration(min(policy.floor, spec.chunk_size), spec.control_hz)
    if gen_latency >= floor_duration:
        raise ValueError(
            f"gen_latency {gen_latency}us does not fit inside the smallest "
            f"retained prefix ({floor_duration}us); the task could never keep up"
        )

    rng = np.random.default_rng(seed)
    slack = generation_slack_actions(gen_latency, spec.control_hz)

    rounds: list[RoundRecord] = []
    executed = 0
    prev_h: Optional[int] = None
    while executed < spec.action_budget:
        mags = _synth_round_magnitudes(spec, rng)
        h = decide_horizon(policy, mags)
        if prev_h is None:
            trigger = 0
        else:
            # Issue while the previous prefix is still executing; the overlap
            # region of the new chunk is discarded by the trigger placement.
            trigger = max(0, prev_h - slack)
            trigger = min(trigger, prev_h - 1)
        traj = None
        if with_trajectories:
            steps = rng.normal(0.0, 0.05, size=(h, trajectory_dim))
            traj = tuple(tuple(float(v) for v in row) for row in np.cumsum(steps, axis=0))
        rounds.append(
            RoundRecord(
                round_id=len(rounds),
                trigger_action_index=trigger,
                horizon=h,
                chunk_size=spec.chunk_size,
                update_magnitudes=mags,
                action_trajectory=traj,
            )
        )
        executed += h
        prev_h = h

    success = bool(rng.random() < spec.success_rate)
    return TaskTrace(
        task_id=task_id,
        control_hz=spec.control_hz,
        obs_payload_bytes=spec.obs_payload_bytes,
        action_payload_bytes=spec.action_payload_bytes,
        success=success,
        rounds=tuple(rounds),
    )


def synthesize_family(
    spec: SyntheticSpec,
    policy: HorizonPolicyConfig,
    gen_latency: Duration,
    count: int,
    seed: int,
    id_prefix: str = "task",
    **kwargs,
) -> list[TaskTrace]:
    """A family of traces with per-task sub-seeds derived from one seed."""
    root = np.random.default_rng(seed)
    sub_seeds = root.integers(0, 2**63 - 1, size=count)
    return [
        synthesize_trace(
            spec,
            policy,
            gen_latency,
            int(sub_seeds[i]),
            task_id=f"{id_prefix}-{i:04d}",
            **kwargs,
        )
        for i in range(count)
    ]


# --- offline horizon analysis -------------------------------------------------

def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def round_optimal_horizon(
    reference: Sequence[Sequence[float]],
    candidate: Sequence[Sequence[float]],
    sim_threshold: float,
) -> int:
    """Longest candidate prefix that tracks the reference trajectory.

    Action i counts toward the prefix while cosine similarity between the
    candidate and reference action vectors stays at or above the threshold;
    the first action below it ends the prefix. Two zero vectors count as
    identical, one zero vector as maximally dissimilar.
    """
    if not 0.0 < sim_threshold <= 1.0:
        raise ValueError(f"sim_threshold must be in (0, 1], got {sim_threshold}")
    ref = np.asarray(reference, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if ref.ndim != 2 or cand.ndim != 2 or ref.shape[1] != cand.shape[1]:
        raise ValueError(
            f"trajectories must share action dimensionality, got shapes "
            f"{ref.shape} and {cand.shape}"
        )
    limit = min(len(ref), len(cand))
    for i in range(limit):
        if _cosine(cand[i], ref[i]) < sim_threshold:
            return i
    return limit
