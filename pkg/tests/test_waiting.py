from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roboserve.core import Interval, TaskState
from roboserve.waiting import (
    WaitLedger,
    current_wait_ratio,
    ledger_from_history,
    round_wait,
    wait_ratio,
)

MS = 1000

# Each fixture row: (G_j, E_j, G_next, E_next, expected wait), hand-computed
# from the dominant-phase rule. Times in microseconds.
WAIT_FIXTURES = [
    # --- generation-dominated (|G| >= |E|): wait is the G-side gap ---
    (Interval(1_600_000, 2_000_000), Interval(2_000_000, 2_300_000),
     Interval(2_500_000, 2_900_000), Interval(2_900_000, 3_200_000), 500 * MS),
    (Interval(0, 400_000), Interval(400_000, 500_000),
     Interval(400_000, 800_000), Interval(800_000, 900_000), 0),
    (Interval(0, 300_000), Interval(300_000, 500_000),
     Interval(310_000, 610_000), Interval(700_000, 900_000), 10 * MS),
    (Interval(0, 500_000), Interval(500_000, 600_000),
     Interval(1_500_000, 2_000_000), Interval(2_000_000, 2_100_000), 1_000 * MS),
    (Interval(100_000, 200_000), Interval(200_000, 250_000),
     Interval(200_000, 300_000), Interval(300_000, 350_000), 0),
    # gen-dominated, successor gen starts before G_j ends: negative gap clamps
    (Interval(0, 600_000), Interval(600_000, 700_000),
     Interval(550_000, 1_150_000), Interval(1_150_000, 1_250_000), 0),
    (Interval(0, 1_000_000), Interval(1_000_000, 1_000_000),
     Interval(1_250_000, 2_250_000), Interval(2_250_000, 2_250_000), 250 * MS),
    # --- the tie |G| == |E| takes the generation branch ---
    (Interval(0, 300_000), Interval(300_000, 600_000),
     Interval(450_000, 750_000), Interval(750_000, 1_050_000), 150 * MS),
    (Interval(0, 300_000), Interval(300_000, 600_000),
     Interval(300_000, 600_000), Interval(600_000, 900_000), 0),
    # tie with an exec-side gap that must NOT be measured
    (Interval(0, 200_000), Interval(200_000, 400_000),
     Interval(200_000, 400_000), Interval(999_000, 1_199_000), 0),
    # --- execution-dominated (|E| > |G|): wait is the E-side gap ---
    (Interval(4_000_000, 4_200_000), Interval(4_200_000, 5_000_000),
     Interval(4_500_000, 4_700_000), Interval(5_000_000, 5_800_000), 0),
    (Interval(0, 200_000), Interval(200_000, 1_100_000),
     Interval(500_000, 700_000), Interval(1_100_000, 2_000_000), 0),
    (Interval(0, 200_000), Interval(200_000, 1_100_000),
     Interval(1_100_000, 1_300_000), Interval(1_300_000, 2_200_000), 200 * MS),
    (Interval(0, 100_000), Interval(100_000, 800_000),
     Interval(900_000, 1_000_000), Interval(1_000_000, 1_700_000), 200 * MS),
    (Interval(0, 300_000), Interval(300_000, 1_000_000),
     Interval(600_000, 900_000), Interval(1_033_333, 1_733_333), 33_333),
    # exec-dominated, perfectly pipelined: zero wait
    (Interval(0, 300_000), Interval(300_000, 1_200_000),
     Interval(600_000, 900_000), Interval(1_200_000, 2_100_000), 0),
    # exec-dominated, successor exec overlaps (degenerate): clamps to zero
    (Interval(0, 100_000), Interval(100_000, 700_000),
     Interval(200_000, 300_000), Interval(650_000, 1_250_000), 0),
    # --- assorted magnitudes, both branches ---
    (Interval(0, 50_000), Interval(50_000, 60_000),
     Interval(75_000, 125_000), Interval(125_000, 135_000), 25 * MS),
    (Interval(0, 10_000), Interval(10_000, 500_000),
     Interval(505_000, 515_000), Interval(515_000, 1_005_000), 15 * MS),
    (Interval(0, 1), Interval(1, 2),
     Interval(1, 2), Interval(2, 3), 0),
    (Interval(0, 2), Interval(2, 3),
     Interval(5, 7), Interval(7, 8), 3),
    (Interval(0, 1), Interval(1, 4),
     Interval(2, 3), Interval(9, 12), 5),
]


@pytest.mark.parametrize("g1, e1, g2, e2, expected", WAIT_FIXTURES)
def test_round_wait_fixture(g1, e1, g2, e2, expected):
    assert round_wait(g1, e1, g2, e2) == expected


def test_round_wait_rejects_out_of_order_rounds():
    with pytest.raises(ValueError):
        round_wait(
            Interval(1_000, 2_000), Interval(2_000, 3_000),
            Interval(0, 500), Interval(500, 600),
        )


def test_round_wait_rejects_exec_before_gen():
    with pytest.raises(ValueError):
        round_wait(
            Interval(1_000, 2_000), Interval(1_500, 3_000),
            Interval(3_000, 4_000), Interval(4_000, 5_000),
        )


class TestWaitRatio:
    def test_zero_waits(self):
        ledger = WaitLedger.from_waits([])
        assert wait_ratio(ledger, 0, 10_000_000) == 0.0

    def test_quarter(self):
        ledger = WaitLedger.from_waits([200_000, 300_000])
        assert wait_ratio(ledger, 0, 2_000_000) == 0.25

    def test_clamps_to_one(self):
        ledger = WaitLedger.from_waits([3_000_000])
        assert wait_ratio(ledger, 0, 2_500_000) == 1.0

    def test_rejects_zero_lifetime(self):
        with pytest.raises(ValueError):
            wait_ratio(WaitLedger.from_waits([]), 5, 5)
        with pytest.raises(ValueError):
            wait_ratio(WaitLedger.from_waits([]), 5, 4)

    def test_ledger_caches_exact_sum(self):
        ledger = WaitLedger.from_waits([1, 2, 3])
        assert ledger.total_wait == 6
        assert ledger.waits == (1, 2, 3)

    def test_negative_wait_rejected(self):
        with pytest.raises(ValueError):
            WaitLedger.from_waits([-1])


@given(
    waits=st.lists(st.integers(0, 10_000_000), max_size=8),
    extra=st.integers(0, 1_000_000),
    lifetime=st.integers(1, 50_000_000),
)
@settings(max_examples=200, deadline=None)
def test_ratio_monotone_before_clamp(waits, extra, lifetime):
    base = sum(waits) / lifetime
    more_wait = (sum(waits) + extra) / lifetime
    longer_life = sum(waits) / (lifetime + extra)
    assert more_wait >= base
    assert longer_life <= base


def _state_with_rounds(rounds, t_start=0):
    """rounds: list of (gen_start, gen_end, exec_start, exec_end)."""
    state = TaskState(task_id="t", t_start=t_start)
    for j, (gs, ge, es, ee) in enumerate(rounds):
        state.begin_generation(j, gs)
        state.finish_generation(j, ge)
        state.record_execution(j, es, ee, 1)
    return state


class TestLedgerFromHistory:
    def test_gen_dominated_pair(self):
        state = _state_with_rounds([
            (0, 400_000, 400_000, 500_000),
            (900_000, 1_300_000, 1_300_000, 1_400_000),
        ])
        assert ledger_from_history(state).total_wait == 500_000

    def test_exec_dominated_pair(self):
        state = _state_with_rounds([
            (0, 200_000, 200_000, 1_100_000),
            (800_000, 1_000_000, 1_250_000, 2_150_000),
        ])
        assert ledger_from_history(state).total_wait == 150_000

    def test_final_round_accrues_nothing(self):
        state = _state_with_rounds([(0, 400_000, 400_000, 500_000)])
        assert ledger_from_history(state).total_wait == 0

    def test_gen_branch_counts_in_flight_successor(self):
        # Round 0 is gen-dominated and the successor's generation has started
        # but not finished: the wait is already measurable.
        state = _state_with_rounds([(0, 400_000, 400_000, 500_000)])
        state.begin_generation(1, 650_000)
        assert ledger_from_history(state).total_wait == 250_000

    def test_exec_branch_waits_for_successor_exec(self):
        # Round 0 is exec-dominated; successor generation recorded but its
        # execution has not begun, so no wait is measurable yet.
        state = _state_with_rounds([(0, 100_000, 100_000, 900_000)])
        state.begin_generation(1, 200_000)
        state.finish_generation(1, 300_000)
        assert ledger_from_history(state).total_wait == 0

    def test_current_wait_ratio_guards_zero_lifetime(self):
        state = TaskState(task_id="t", t_start=100)
        assert current_wait_ratio(state, 100) == 0.0
        assert current_wait_ratio(state, 50) == 0.0

    def test_current_wait_ratio_matches_manual(self):
        state = _state_with_rounds([
            (0, 400_000, 400_000, 500_000),
            (900_000, 1_300_000, 1_300_000, 1_400_000),
        ])
        assert current_wait_ratio(state, 2_000_000) == 0.25
