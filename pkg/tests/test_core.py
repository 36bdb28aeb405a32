from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from roboserve.core import (
    ActionChunk,
    Interval,
    LastExecInfo,
    PendingRequest,
    RoundTimeline,
    TaskState,
    exec_duration,
    exec_end_from_piggyback,
    us_from_actions,
)


def _req(issued_at, remaining, exec_start=0):
    return PendingRequest(
        task_id="t",
        round_id=1,
        issued_at=issued_at,
        obs_captured_at=issued_at,
        last_exec_info=LastExecInfo(exec_start=exec_start, remaining_actions=remaining),
        payload_bytes=0,
    )


class TestExecEndFromPiggyback:
    def test_ten_actions_at_thirty_hz(self):
        # 10/30 s = 333,333.3us, rounded half-up.
        assert exec_end_from_piggyback(_req(1_000_000, 10), 30) == 1_333_333

    def test_zero_remaining_returns_issue_time(self):
        assert exec_end_from_piggyback(_req(5_000_000, 0), 30) == 5_000_000

    def test_exactly_one_second_of_actions(self):
        assert exec_end_from_piggyback(_req(0, 30), 30) == 1_000_000


class TestExecDuration:
    def test_paper_short_horizon(self):
        # ~0.3 s at H=10, 30 Hz
        assert exec_duration(10, 30) == 333_333

    def test_paper_long_horizon(self):
        # ~1.6 s at H=50, 30 Hz
        assert exec_duration(50, 30) == 1_666_667

    def test_zero_horizon(self):
        assert exec_duration(0, 30) == 0
        assert exec_duration(0, 7.5) == 0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            exec_duration(-1, 30)
        with pytest.raises(ValueError):
            exec_duration(1, 0)

    def test_round_half_up_boundary(self):
        # 1 action at 2 Hz: exactly 500,000us, no rounding involved;
        # 1 action at 3 Hz: 333,333.3 rounds down; 2 at 3 Hz: 666,666.7 rounds up.
        assert us_from_actions(1, 2) == 500_000
        assert us_from_actions(1, 3) == 333_333
        assert us_from_actions(2, 3) == 666_667


@given(count=st.integers(0, 10_000), hz=st.sampled_from([1, 3, 7.5, 10, 30, 50, 100]))
def test_time_arithmetic_closed_over_integers(count, hz):
    out = us_from_actions(count, hz)
    assert isinstance(out, int)
    assert out >= 0


@given(a=st.integers(0, 500), b=st.integers(0, 500), hz=st.sampled_from([3, 30, 50]))
def test_us_from_actions_monotone(a, b, hz):
    lo, hi = sorted((a, b))
    assert us_from_actions(lo, hz) <= us_from_actions(hi, hz)


class TestActionChunk:
    def test_prefix_duration(self):
        chunk = ActionChunk(chunk_size=50, control_hz=30, horizon=10)
        assert chunk.prefix_duration == exec_duration(10, 30)

    @pytest.mark.parametrize("horizon", [0, 51])
    def test_horizon_bounds(self, horizon):
        with pytest.raises(ValueError):
            ActionChunk(chunk_size=50, control_hz=30, horizon=horizon)


class TestInterval:
    def test_length(self):
        assert Interval(3, 10).length == 7
        assert len(Interval(3, 3)) == 0

    def test_rejects_reversed(self):
        with pytest.raises(ValueError):
            Interval(10, 3)


class TestRoundTimeline:
    def test_exec_cannot_precede_generation(self):
        with pytest.raises(ValueError):
            RoundTimeline(
                round_id=0,
                gen=Interval(0, 100),
                exec=Interval(50, 150),
                horizon_used=1,
            )

    def test_adjacent_phases_ok(self):
        tl = RoundTimeline(
            round_id=0, gen=Interval(0, 100), exec=Interval(100, 200), horizon_used=3
        )
        assert tl.exec.start == tl.gen.end


class TestTaskState:
    def test_records_are_ordered(self):
        st_ = TaskState(task_id="t", t_start=0)
        st_.begin_generation(0, 10)
        st_.finish_generation(0, 50)
        st_.record_execution(0, 50, 150, 3)
        st_.begin_generation(1, 90)
        assert st_.gen_interval(0) == Interval(10, 50)
        assert st_.gen_interval(1) is None
        assert st_.last_exec_duration() == 100
        tls = st_.timelines
        assert len(tls) == 1 and tls[0].round_id == 0

    def test_out_of_order_generation_rejected(self):
        st_ = TaskState(task_id="t", t_start=0)
        with pytest.raises(ValueError):
            st_.begin_generation(1, 10)

    def test_out_of_order_execution_rejected(self):
        st_ = TaskState(task_id="t", t_start=0)
        st_.begin_generation(0, 0)
        st_.finish_generation(0, 5)
        with pytest.raises(ValueError):
            st_.record_execution(1, 5, 10, 1)
