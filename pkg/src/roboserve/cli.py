"""Command-line experiment runner.

Subcommands:
  gen-traces  synthesize a JSONL trace family from a spec file
  run         replay a trace directory under a chosen scheduler
  pareto      sweep static horizons and confidence thresholds over a family

Errors exit nonzero with a single machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .engines import load_engine_profile, load_network_model
from .experiments import run_experiment, write_csv, write_summary
from .horizon import HorizonPolicyConfig, UpdateMagnitudes, decide_horizon
from .scheduler import POLICIES, SchedulerConfig
from .sim import PLAN_EVENT_DRIVEN, PLAN_FIXED_INTERVAL, SimConfig
from .workload import (
    SyntheticSpec,
    load_trace_dir,
    store_traces,
    synthesize_family,
)


def _policy_from_args(args) -> HorizonPolicyConfig:
    if args.policy == "static":
        if args.static_h is None:
            raise ValueError("--static-h is required with --policy static")
        return HorizonPolicyConfig.static(args.static_h)
    return HorizonPolicyConfig.confidence(threshold=args.threshold, min_horizon=args.h_min)


def cmd_gen_traces(args) -> int:
    spec_data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    count = spec_data.pop("count", 1)
    seed = spec_data.pop("seed", 0)
    gen_latency = spec_data.pop("gen_latency_us", 300_000)
    spec = SyntheticSpec.from_dict(spec_data)
    policy = _policy_from_args(args)
    traces = synthesize_family(spec, policy, gen_latency, count, seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "traces.jsonl"
    store_traces(traces, out_path)
    print(f"wrote {len(traces)} traces to {out_path}")
    return 0


def cmd_run(args) -> int:
    if (args.rate is None) == (args.fleet is None):
        raise ValueError("exactly one of --rate or --fleet is required")
    traces = load_trace_dir(args.traces)
    if not traces:
        raise ValueError(f"no traces found under {args.traces}")

    edge = load_engine_profile(args.edge_profile) if args.edge_profile else None
    cloud = load_engine_profile(args.cloud_profile) if args.cloud_profile else None
    network = load_network_model(args.network) if args.network else None
    edge_network = load_network_model(args.edge_network) if args.edge_network else None

    sched = SchedulerConfig(
        policy=args.scheduler,
        buckets=args.buckets,
        aging_interval=args.aging,
    )
    if args.stale_threshold is not None:
        sched = replace(sched, stale_threshold=args.stale_threshold)
    cfg = SimConfig(
        scheduler=sched,
        edge=edge,
        cloud=cloud,
        network=network,
        edge_network=edge_network,
        plan_mode=args.plan_mode,
        plan_interval_us=args.plan_interval_us,
        seed=args.seed,
    )
    result, sim = run_experiment(
        traces, cfg, rate=args.rate, fleet=args.fleet, seed=args.seed
    )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(result, out_dir / "results.csv", include_timestamp=not args.no_timestamp)
    write_summary(result, out_dir / "summary.json")
    if args.event_log:
        sim.write_event_log(args.event_log)
    print(
        f"{result.scheduler} {result.mode_label}: "
        f"avg={result.avg_latency_us / 1e6:.3f}s "
        f"p25={result.p25_latency_us / 1e6:.3f}s "
        f"p95={result.p95_latency_us / 1e6:.3f}s "
        f"offload={result.offload_fraction:.3f}"
    )
    return 0


def _parse_grid(text: str, cast):
    return [cast(tok) for tok in text.split(",") if tok.strip()]


def cmd_pareto(args) -> int:
    traces = load_trace_dir(args.traces)
    if not traces:
        raise ValueError(f"no traces found under {args.traces}")

    rounds: list[UpdateMagnitudes] = []
    for trace in traces:
        for rnd in trace.rounds:
            if rnd.update_magnitudes is None:
                raise ValueError(
                    f"trace {trace.task_id!r} round {rnd.round_id} has no "
                    "update magnitudes; pareto sweeps need them"
                )
            rounds.append(rnd.update_magnitudes)
    success_fraction = sum(1 for t in traces if t.success) / len(traces)

    cells = []
    for h in _parse_grid(args.static_grid, int):
        cells.append(("static", float(h), HorizonPolicyConfig.static(h)))
    for t in _parse_grid(args.threshold_grid, float):
        cells.append(
            ("confidence", t, HorizonPolicyConfig.confidence(t, min_horizon=args.h_min))
        )

    lines = ["policy,parameter,mean_horizon,success_fraction"]
    for name, param, cfg in cells:
        mean_h = sum(decide_horizon(cfg, m) for m in rounds) / len(rounds)
        lines.append(f"{name},{param},{mean_h},{success_fraction}")
    out = Path(args.out)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(cells)} sweep rows to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roboserve")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-traces", help="synthesize a trace family")
    gen.add_argument("--spec", required=True, help="synthetic-spec JSON file")
    gen.add_argument("--out-dir", required=True)
    gen.add_argument("--policy", choices=("static", "confidence"), default="confidence")
    gen.add_argument("--static-h", type=int, default=None)
    gen.add_argument("--threshold", type=float, default=0.4)
    gen.add_argument("--h-min", type=int, default=5)
    gen.set_defaults(func=cmd_gen_traces)

    runp = sub.add_parser("run", help="replay a trace directory")
    runp.add_argument("--traces", required=True, help="directory of .jsonl trace files")
    runp.add_argument("--scheduler", choices=POLICIES, default="kairos")
    runp.add_argument("--rate", type=float, default=None, help="Poisson task arrival rate (tasks/s)")
    runp.add_argument("--fleet", type=int, default=None, help="robot slots running tasks back-to-back")
    runp.add_argument("--buckets", type=int, default=10)
    runp.add_argument("--aging", type=int, default=5)
    runp.add_argument("--stale-threshold", type=int, default=None, help="microseconds")
    runp.add_argument("--edge-profile", default=None)
    runp.add_argument("--cloud-profile", default=None)
    runp.add_argument("--network", default=None, help="edge-to-cloud link model JSON")
    runp.add_argument("--edge-network", default=None, help="client-to-edge link model JSON")
    runp.add_argument("--plan-mode", choices=(PLAN_EVENT_DRIVEN, PLAN_FIXED_INTERVAL),
                      default=PLAN_EVENT_DRIVEN)
    runp.add_argument("--plan-interval-us", type=int, default=50_000)
    runp.add_argument("--seed", type=int, default=0)
    runp.add_argument("--out", required=True, help="output directory")
    runp.add_argument("--event-log", default=None, help="optional JSONL event-log path")
    runp.add_argument("--no-timestamp", action="store_true")
    runp.set_defaults(func=cmd_run)

    par = sub.add_parser("pareto", help="horizon-policy parameter sweep")
    par.add_argument("--traces", required=True)
    par.add_argument("--static-grid", default="10,20,30,40,50")
    par.add_argument("--threshold-grid", default="0.1,0.2,0.4,0.6,0.8")
    par.add_argument("--h-min", type=int, default=5)
    par.add_argument("--out", required=True)
    par.set_defaults(func=cmd_pareto)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface sub-module failures with context
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
