"""Exploration: find a 4-task synchronous instance where kairos < fifo and < las."""
from __future__ import annotations

import itertools
from roboserve.core import Interval, TaskState, PendingRequest, LastExecInfo
from roboserve.engines import EngineProfile
from roboserve.scheduler import SchedulerConfig, plan

MS = 1000


def timeline_for_order(exec_durs, gen, order):
    """Serve requests in the given global order (task ids with multiplicity).

    Synchronous single server. Returns (total_wait, per_task_latency) or None
    if order invalid (task exhausted its rounds).
    """
    n = len(exec_durs)
    rounds_done = [0] * n
    ready_at = [0] * n  # time the task's next request became ready
    finish = [0] * n
    t_server = 0  # server free time
    total_wait = 0
    for tid in order:
        j = rounds_done[tid]
        if j >= len(exec_durs[tid]):
            return None
        start = max(t_server, ready_at[tid])
        total_wait += start - ready_at[tid]
        gen_end = start + gen
        exec_end = gen_end + exec_durs[tid][j]
        t_server = gen_end
        rounds_done[tid] += 1
        ready_at[tid] = exec_end
        finish[tid] = exec_end
    return total_wait, finish


def _multiset_permutations(counts, prefix, out):
    if all(c == 0 for c in counts):
        out.append(tuple(prefix))
        return
    for tid, c in enumerate(counts):
        if c > 0:
            counts[tid] -= 1
            prefix.append(tid)
            _multiset_permutations(counts, prefix, out)
            prefix.pop()
            counts[tid] += 1


def brute_force(exec_durs, gen):
    """Map from every distinct service order to its total wait."""
    orders: list[tuple] = []
    _multiset_permutations([len(d) for d in exec_durs], [], orders)
    seen = {}
    for order in orders:
        res = timeline_for_order(exec_durs, gen, order)
        if res is not None:
            seen[order] = res[0]
    return seen


def policy_order(exec_durs, gen, choose):
    """Simulate the toy loop with a policy callback choosing among ready tasks."""
    n = len(exec_durs)
    rounds_done = [0] * n
    ready_at = [0] * n
    order = []
    t = 0
    total = sum(len(d) for d in exec_durs)
    while len(order) < total:
        ready = [i for i in range(n)
                 if rounds_done[i] < len(exec_durs[i]) and ready_at[i] <= t]
        if not ready:
            t = min(ready_at[i] for i in range(n) if rounds_done[i] < len(exec_durs[i]))
            continue
        pick = choose(ready, rounds_done, ready_at, t)
        order.append(pick)
        gen_end = t + gen
        ready_at[pick] = gen_end + exec_durs[pick][rounds_done[pick]]
        rounds_done[pick] += 1
        t = gen_end
    return tuple(order)


def fifo_choose(ready, rounds_done, ready_at, t):
    return min(ready, key=lambda i: (ready_at[i], i))


def las_choose_factory(gen):
    def choose(ready, rounds_done, ready_at, t):
        return min(ready, key=lambda i: (rounds_done[i] * gen, ready_at[i], i))
    return choose


def kairos_choose_factory(exec_durs, gen):
    """Drive the real planner: maintain TaskStates mirroring the toy timeline."""
    states = {str(i): TaskState(task_id=str(i), t_start=0) for i in range(len(exec_durs))}
    profile = EngineProfile(tier="edge", capacity=1, max_batch=1, points=((1, gen),))
    cfg = SchedulerConfig(policy="kairos", buckets=10, aging_interval=5,
                          stale_threshold=10**12, default_exec_estimate=gen)

    def choose(ready, rounds_done, ready_at, t):
        pending = []
        for i in ready:
            sid = str(i)
            j = rounds_done[i]
            pending.append(PendingRequest(
                task_id=sid, round_id=j, issued_at=ready_at[i],
                obs_captured_at=ready_at[i],
                last_exec_info=LastExecInfo(0, 0), payload_bytes=0,
                skipped=states[sid].skipped))
        now = max(t, max(ready_at[i] for i in ready) + 1)
        decision = plan(pending, states, profile, None, None, now, cfg)
        pick = int(decision.edge[0].task_id)
        # Mirror the toy timeline into the picked task's state.
        sid = str(pick)
        j = rounds_done[pick]
        start = t
        gen_end = start + gen
        states[sid].begin_generation(j, start)
        states[sid].finish_generation(j, gen_end)
        states[sid].record_execution(j, gen_end, gen_end + exec_durs[pick][j], 1)
        states[sid].accumulated_generation += gen
        return pick

    return choose


def evaluate(exec_durs, gen, verbose=False):
    table = brute_force(exec_durs, gen)
    fifo = policy_order(exec_durs, gen, fifo_choose)
    las = policy_order(exec_durs, gen, las_choose_factory(gen))
    kai = policy_order(exec_durs, gen, kairos_choose_factory(exec_durs, gen))
    w_fifo, w_las, w_kai = table[fifo], table[las], table[kai]
    w_opt = min(table.values())
    if verbose:
        print(f"  orders: kai={kai} fifo={fifo} las={las}")
    return w_kai, w_fifo, w_las, w_opt


candidates = [
    # exec durations per round per task, gen cost
    ([[900, 900], [100, 100], [500, 500], [300, 300]], 200),
    ([[900, 900], [150, 150], [600, 600], [300, 300]], 300),
    ([[1200, 1200], [100, 100], [700, 700], [400, 400]], 300),
    ([[900, 600], [100, 100], [500, 500], [300, 200]], 200),
    ([[1600, 1600], [333, 333], [1000, 1000], [666, 666]], 400),
    ([[1500, 1500, 1500], [300, 300], [900, 900], [600, 600]], 400),
    ([[900, 900, 900], [100, 100], [500, 500], [300, 300]], 250),
]

for durs, gen in candidates:
    durs_us = [[d * MS for d in task] for task in durs]
    w_kai, w_fifo, w_las, w_opt = evaluate(durs_us, gen * MS, verbose=True)
    ok = "STRICT" if (w_kai < w_fifo and w_kai < w_las) else "no"
    print(f"gen={gen}ms durs={durs}: kai={w_kai/1e6:.2f}s fifo={w_fifo/1e6:.2f}s "
          f"las={w_las/1e6:.2f}s opt={w_opt/1e6:.2f}s [{ok}]")
