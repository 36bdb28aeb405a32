"""Experiment execution and metric reporting around the simulator.

An experiment cell replays one trace set under one scheduler configuration,
either online (Poisson arrivals at a given task rate) or offline (a fleet of
n robot slots working through the traces back-to-back). Latency is the
wall-clock span from a task's first request to its last executed action.
Percentiles use the nearest-rank method: deterministic and assumption-free.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from .sim import SimConfig, SimResult, run, run_fleet
from .workload import TaskTrace, poisson_arrivals

CSV_COLUMNS = (
    "task_id",
    "scheduler",
    "rate_or_fleet",
    "latency_us",
    "wait_us",
    "offloaded_rounds",
    "total_rounds",
)


def percentile_nearest_rank(values: Sequence[int], pct: float) -> int:
    """Smallest value whose rank covers pct percent of the sample."""
    if not values:
        raise ValueError("cannot take a percentile of no values")
    if not 0 < pct <= 100:
        raise ValueError(f"pct must be in (0, 100], got {pct}")
    ordered = sorted(values)
    rank = math.ceil(pct / 100.0 * len(ordered))
    return ordered[rank - 1]


@dataclass(frozen=True)
class ExperimentResult:
    scheduler: str
    rate: Optional[float]
    fleet: Optional[int]
    seed: int
    rows: tuple  # TaskRunStats in input trace order
    avg_latency_us: float
    p25_latency_us: int
    p90_latency_us: int
    p95_latency_us: int
    offload_fraction: float
    total_wait_us: int
    config: dict

    def __post_init__(self) -> None:
        if self.p25_latency_us > self.p95_latency_us:
            raise ValueError("P25 latency cannot exceed P95 latency")
        if not 0.0 <= self.offload_fraction <= 1.0:
            raise ValueError("offload fraction must be in [0, 1]")

    @property
    def mode_label(self) -> str:
        return f"rate={self.rate}" if self.rate is not None else f"fleet={self.fleet}"


def _config_echo(cfg: SimConfig) -> dict:
    return {
        "scheduler": {
            "policy": cfg.scheduler.policy,
            "buckets": cfg.scheduler.buckets,
            "aging_interval": cfg.scheduler.aging_interval,
            "stale_threshold": cfg.scheduler.stale_threshold,
            "default_exec_estimate": cfg.scheduler.default_exec_estimate,
        },
        "edge": cfg.edge.to_dict() if cfg.edge else None,
        "cloud": cfg.cloud.to_dict() if cfg.cloud else None,
        "network": cfg.network.to_dict() if cfg.network else None,
        "edge_network": cfg.edge_network.to_dict() if cfg.edge_network else None,
        "plan_mode": cfg.plan_mode,
        "seed": cfg.seed,
    }


def summarize(
    sim: SimResult,
    traces: Sequence[TaskTrace],
    cfg: SimConfig,
    *,
    rate: Optional[float] = None,
    fleet: Optional[int] = None,
    seed: int = 0,
) -> ExperimentResult:
    rows = tuple(sim.task_stats[t.task_id] for t in traces)
    latencies = [r.latency_us for r in rows]
    rounds_total = sum(r.total_rounds for r in rows)
    offloaded = sum(r.offloaded_rounds for r in rows)
    return ExperimentResult(
        scheduler=cfg.scheduler.policy,
        rate=rate,
        fleet=fleet,
        seed=seed,
        rows=rows,
        avg_latency_us=sum(latencies) / len(latencies),
        p25_latency_us=percentile_nearest_rank(latencies, 25),
        p90_latency_us=percentile_nearest_rank(latencies, 90),
        p95_latency_us=percentile_nearest_rank(latencies, 95),
        offload_fraction=(offloaded / rounds_total) if rounds_total else 0.0,
        total_wait_us=sum(r.wait_us for r in rows),
        config=_config_echo(cfg),
    )


def run_experiment(
    traces: Sequence[TaskTrace],
    cfg: SimConfig,
    *,
    rate: Optional[float] = None,
    fleet: Optional[int] = None,
    seed: int = 0,
) -> tuple[ExperimentResult, SimResult]:
    """Run one experiment cell. Exactly one of rate/fleet selects the mode."""
    if (rate is None) == (fleet is None):
        raise ValueError("exactly one of rate or fleet must be given")
    if not traces:
        raise ValueError("no traces to replay")
    if rate is not None:
        arrivals = poisson_arrivals(rate, len(traces), seed)
        sim = run(traces, arrivals, cfg)
    else:
        sim = run_fleet(traces, fleet, cfg)
    result = summarize(sim, traces, cfg, rate=rate, fleet=fleet, seed=seed)
    return result, sim


def write_csv(result: ExperimentResult, path: str | Path, include_timestamp: bool = True) -> None:
    lines = []
    if include_timestamp:
        lines.append(f"# generated_at={datetime.now(timezone.utc).isoformat()}")
    lines.append(",".join(CSV_COLUMNS))
    for row in result.rows:
        lines.append(
            ",".join(
                str(v)
                for v in (
                    row.task_id,
                    result.scheduler,
                    result.mode_label,
                    row.latency_us,
                    row.wait_us,
                    row.offloaded_rounds,
                    row.total_rounds,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def summary_dict(result: ExperimentResult) -> dict:
    return {
        "scheduler": result.scheduler,
        "rate": result.rate,
        "fleet": result.fleet,
        "seed": result.seed,
        "tasks": len(result.rows),
        "avg_latency_us": result.avg_latency_us,
        "p25_latency_us": result.p25_latency_us,
        "p90_latency_us": result.p90_latency_us,
        "p95_latency_us": result.p95_latency_us,
        "offload_fraction": result.offload_fraction,
        "total_wait_us": result.total_wait_us,
        "config": result.config,
    }


def write_summary(result: ExperimentResult, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(summary_dict(result), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
