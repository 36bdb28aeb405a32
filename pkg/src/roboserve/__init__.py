"""Execution-aware serving for chunked robot-policy inference, at desk scale.

The package has three layers:

* policy primitives: execution-horizon selection from refinement-update
  magnitudes (`horizon`), dominant-phase wait accounting (`waiting`), and the
  bucketed wait-ratio scheduler with FIFO and least-attained-generation
  baselines (`scheduler`);
* platform models: batch-latency engine profiles and analytic networks
  (`engines`), plus the trace schema, arrival and fixture generators
  (`workload`);
* a deterministic discrete-event simulator (`sim`) and experiment harness
  (`experiments`, `cli`) that replay traces against it.
"""

from .core import (
    ActionChunk,
    Duration,
    Interval,
    LastExecInfo,
    PendingRequest,
    RoundTimeline,
    TaskState,
    TimePoint,
    exec_duration,
    exec_end_from_piggyback,
    us_from_actions,
)
from .engines import (
    EngineProfile,
    NetworkModel,
    ProfileError,
    batch_latency,
    cloud_round_trip,
    load_engine_profile,
    load_network_model,
    transfer_time,
)
from .horizon import (
    HorizonPolicyConfig,
    UpdateMagnitudes,
    decide_horizon,
    sweep_thresholds,
)
from .scheduler import (
    DispatchPlan,
    SchedulerConfig,
    assign_bucket,
    estimate_exec_latency,
    order_within_bucket,
    plan,
    plan_fifo,
    plan_las,
)
from .sim import Event, LivelockError, SimConfig, SimResult, run, run_fleet
from .waiting import (
    WaitLedger,
    current_wait_ratio,
    ledger_from_history,
    round_wait,
    wait_ratio,
)
from .workload import (
    RoundRecord,
    SyntheticSpec,
    TaskTrace,
    TraceFormatError,
    load_traces,
    poisson_arrivals,
    round_optimal_horizon,
    store_traces,
    synthesize_family,
    synthesize_trace,
)

__all__ = [
    "ActionChunk",
    "DispatchPlan",
    "Duration",
    "EngineProfile",
    "Event",
    "HorizonPolicyConfig",
    "Interval",
    "LastExecInfo",
    "LivelockError",
    "NetworkModel",
    "PendingRequest",
    "ProfileError",
    "RoundRecord",
    "RoundTimeline",
    "SchedulerConfig",
    "SimConfig",
    "SimResult",
    "SyntheticSpec",
    "TaskState",
    "TaskTrace",
    "TimePoint",
    "TraceFormatError",
    "UpdateMagnitudes",
    "WaitLedger",
    "assign_bucket",
    "batch_latency",
    "cloud_round_trip",
    "current_wait_ratio",
    "decide_horizon",
    "estimate_exec_latency",
    "exec_duration",
    "exec_end_from_piggyback",
    "ledger_from_history",
    "load_engine_profile",
    "load_network_model",
    "load_traces",
    "order_within_bucket",
    "plan",
    "plan_fifo",
    "plan_las",
    "poisson_arrivals",
    "round_optimal_horizon",
    "round_wait",
    "run",
    "run_fleet",
    "store_traces",
    "sweep_thresholds",
    "synthesize_family",
    "synthesize_trace",
    "transfer_time",
    "us_from_actions",
    "wait_ratio",
]
