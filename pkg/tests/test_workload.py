from __future__ import annotations

import json

import numpy as np
import pytest

from roboserve.core import exec_duration
from roboserve.horizon import HorizonPolicyConfig, UpdateMagnitudes
from roboserve.workload import (
    RoundRecord,
    SyntheticSpec,
    TaskTrace,
    TraceFormatError,
    generation_slack_actions,
    load_traces,
    poisson_arrivals,
    round_optimal_horizon,
    store_traces,
    synthesize_family,
    synthesize_trace,
    trace_from_dict,
    trace_to_dict,
)


def tiny_trace(task_id="t0") -> TaskTrace:
    mags = UpdateMagnitudes(np.array([[1.0, 0.9], [0.5, 0.4]]))
    rounds = (
        RoundRecord(round_id=0, trigger_action_index=0, horizon=2, chunk_size=2,
                    update_magnitudes=mags),
        RoundRecord(round_id=1, trigger_action_index=1, horizon=1, chunk_size=2),
    )
    return TaskTrace(task_id=task_id, control_hz=30, obs_payload_bytes=1000,
                     action_payload_bytes=100, success=True, rounds=rounds)


class TestTraceRoundTrip:
    def test_store_then_load_identity(self, tmp_path):
        path = tmp_path / "traces.jsonl"
        original = [tiny_trace("a"), tiny_trace("b")]
        store_traces(original, path)
        loaded = load_traces(path)
        assert [trace_to_dict(t) for t in loaded] == [trace_to_dict(t) for t in original]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_traces(path) == []

    def test_single_task_single_round(self, tmp_path):
        trace = TaskTrace(
            task_id="solo", control_hz=30, obs_payload_bytes=0,
            action_payload_bytes=0, success=False,
            rounds=(RoundRecord(0, 0, 5, 10),),
        )
        path = tmp_path / "one.jsonl"
        store_traces([trace], path)
        loaded = load_traces(path)
        assert len(loaded) == 1
        assert loaded[0].rounds[0].horizon == 5

    def test_magnitudes_survive_exactly(self, tmp_path):
        path = tmp_path / "m.jsonl"
        store_traces([tiny_trace()], path)
        loaded = load_traces(path)
        np.testing.assert_array_equal(
            loaded[0].rounds[0].update_magnitudes.u,
            tiny_trace().rounds[0].update_magnitudes.u,
        )


class TestTraceValidation:
    def test_bad_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        store_traces([tiny_trace()], path)
        with path.open("a") as fh:
            fh.write("{broken\n")
        with pytest.raises(TraceFormatError, match="line 2") as info:
            load_traces(path)
        assert info.value.line == 2

    def test_trigger_bound_names_round(self):
        data = trace_to_dict(tiny_trace())
        data["rounds"][1]["trigger_action_index"] = 2  # >= previous horizon 2
        with pytest.raises(TraceFormatError, match="round 1") as info:
            trace_from_dict(data, line=7)
        assert info.value.round_id == 1
        assert info.value.task_id == "t0"
        assert info.value.line == 7

    def test_noncontiguous_rounds_rejected(self):
        data = trace_to_dict(tiny_trace())
        data["rounds"][1]["round_id"] = 5
        with pytest.raises(TraceFormatError, match="contiguous"):
            trace_from_dict(data)

    def test_empty_rounds_rejected(self):
        data = trace_to_dict(tiny_trace())
        data["rounds"] = []
        with pytest.raises(TraceFormatError, match="no rounds"):
            trace_from_dict(data)

    def test_horizon_bounds_rejected(self):
        data = trace_to_dict(tiny_trace())
        data["rounds"][0]["horizon"] = 3  # chunk_size is 2
        with pytest.raises(TraceFormatError, match="horizon"):
            trace_from_dict(data)

    def test_missing_field_named(self):
        data = trace_to_dict(tiny_trace())
        del data["control_hz"]
        with pytest.raises(TraceFormatError, match="control_hz"):
            trace_from_dict(data)

    def test_bad_magnitudes_rejected(self):
        data = trace_to_dict(tiny_trace())
        data["rounds"][0]["update_magnitudes"] = [[1.0, -2.0], [0.5, 0.1]]
        with pytest.raises(TraceFormatError, match="update_magnitudes"):
            trace_from_dict(data)


class TestPoissonArrivals:
    def test_empty(self):
        assert poisson_arrivals(1.0, 0, seed=1) == []

    def test_mean_gap_near_rate(self):
        arrivals = poisson_arrivals(1.0, 10_000, seed=42)
        mean_gap_s = arrivals[-1] / len(arrivals) / 1e6
        assert abs(mean_gap_s - 1.0) < 0.05

    def test_seed_determinism(self):
        a = poisson_arrivals(3.0, 500, seed=7)
        b = poisson_arrivals(3.0, 500, seed=7)
        assert a == b
        c = poisson_arrivals(3.0, 500, seed=8)
        assert a != c

    def test_strictly_increasing(self):
        arrivals = poisson_arrivals(100_000.0, 2_000, seed=3)
        assert all(b > a for a, b in zip(arrivals, arrivals[1:]))


class TestSynthesize:
    POLICY = HorizonPolicyConfig.confidence(threshold=0.4, min_horizon=5)

    def test_budget_reached(self):
        spec = SyntheticSpec(chunk_size=20, action_budget=100, uncertain_fraction=0.3)
        trace = synthesize_trace(spec, self.POLICY, gen_latency=100_000, seed=1)
        assert trace.total_actions >= 100
        assert trace.total_actions - trace.rounds[-1].horizon < 100

    def test_trigger_placement(self):
        # 400 ms of generation at 30 Hz covers ceil(12) actions, so a round
        # following a 30-action round triggers at index 18.
        assert generation_slack_actions(400_000, 30) == 12
        spec = SyntheticSpec(chunk_size=30, action_budget=90, uncertain_fraction=0.0)
        policy = HorizonPolicyConfig.static(30)
        trace = synthesize_trace(spec, policy, gen_latency=400_000, seed=2)
        assert all(r.horizon == 30 for r in trace.rounds)
        assert all(r.trigger_action_index == 18 for r in trace.rounds[1:])

    def test_zero_latency_clamps_to_prefix_interior(self):
        spec = SyntheticSpec(chunk_size=10, action_budget=30, uncertain_fraction=0.0)
        policy = HorizonPolicyConfig.static(10)
        trace = synthesize_trace(spec, policy, gen_latency=0, seed=3)
        assert all(r.trigger_action_index == 9 for r in trace.rounds[1:])

    def test_static_policy_fills_chunks(self):
        spec = SyntheticSpec(chunk_size=25, action_budget=100, uncertain_fraction=0.0)
        policy = HorizonPolicyConfig.static(25)
        trace = synthesize_trace(spec, policy, gen_latency=100_000, seed=4)
        assert all(r.horizon == 25 for r in trace.rounds)
        assert len(trace.rounds) == 4

    def test_oversized_generation_rejected(self):
        spec = SyntheticSpec(chunk_size=10, action_budget=30)
        policy = HorizonPolicyConfig.confidence(threshold=0.4, min_horizon=5)
        # 5 actions at 30 Hz run for ~166.7 ms; generation must fit inside.
        with pytest.raises(ValueError, match="smallest retained prefix"):
            synthesize_trace(spec, policy, gen_latency=exec_duration(5, 30), seed=5)

    def test_seed_determinism(self):
        spec = SyntheticSpec(chunk_size=40, action_budget=200, uncertain_fraction=0.4)
        a = synthesize_trace(spec, self.POLICY, 150_000, seed=11)
        b = synthesize_trace(spec, self.POLICY, 150_000, seed=11)
        assert trace_to_dict(a) == trace_to_dict(b)

    def test_family_ids_and_determinism(self):
        spec = SyntheticSpec(chunk_size=30, action_budget=60)
        fam = synthesize_family(spec, self.POLICY, 100_000, count=5, seed=9)
        assert [t.task_id for t in fam] == [f"task-{i:04d}" for i in range(5)]
        fam2 = synthesize_family(spec, self.POLICY, 100_000, count=5, seed=9)
        assert [trace_to_dict(t) for t in fam] == [trace_to_dict(t) for t in fam2]

    def test_smaller_threshold_means_more_rounds(self):
        spec = SyntheticSpec(chunk_size=50, action_budget=300, uncertain_fraction=0.4)
        tight = HorizonPolicyConfig.confidence(threshold=0.1, min_horizon=5)
        loose = HorizonPolicyConfig.confidence(threshold=0.9, min_horizon=5)
        rounds_tight = len(synthesize_trace(spec, tight, 100_000, seed=21).rounds)
        rounds_loose = len(synthesize_trace(spec, loose, 100_000, seed=21).rounds)
        assert rounds_tight >= rounds_loose

    def test_uncertainty_produces_varied_horizons(self):
        spec = SyntheticSpec(chunk_size=50, action_budget=500, uncertain_fraction=0.5)
        trace = synthesize_trace(spec, self.POLICY, 100_000, seed=13)
        horizons = {r.horizon for r in trace.rounds}
        assert len(horizons) > 1


class TestRoundOptimalHorizon:
    def test_identical_trajectories(self):
        ref = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        assert round_optimal_horizon(ref, ref, 0.9) == 3

    def test_orthogonal_tail_cut_at_twelve(self):
        rng = np.random.default_rng(0)
        ref = rng.normal(size=(20, 3))
        cand = ref.copy()
        for i in range(12, 20):
            v = ref[i]
            ortho = np.array([-v[1], v[0], 0.0])
            cand[i] = ortho
        assert round_optimal_horizon(ref, cand, 0.9) == 12

    def test_zero_vector_conventions(self):
        zeros = [[0.0, 0.0]]
        assert round_optimal_horizon(zeros, zeros, 0.9) == 1
        assert round_optimal_horizon([[1.0, 0.0]], zeros, 0.9) == 0

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            round_optimal_horizon([[1.0]], [[1.0]], 0.0)
        with pytest.raises(ValueError):
            round_optimal_horizon([[1.0]], [[1.0]], 1.5)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            round_optimal_horizon([[1.0, 2.0]], [[1.0]], 0.9)
