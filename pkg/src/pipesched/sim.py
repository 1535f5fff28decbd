"""Deterministic discrete-event simulation of accelerator chains.

Execution is plan-based.  Every (task, accelerator) leg is compiled to a
sequence of layer plans; a layer runs as an input-prefetch fill, a row of
equal-length tile steps, and an output drain.  Preemption (EDF only) is
initiated when a segment with a strictly earlier absolute deadline arrives at
a busy accelerator, and takes effect at the next internal boundary of the
running segment:

  * end of a fill: the prefetched inputs are simply discarded and the fill is
    redone on resume (no switch time, the fill cycles are wasted),
  * end of a tile with tiles left: partial accumulators are saved
    (``save_cycles``) now and reloaded (``reload_cycles``) on resume,
  * end of a layer's last tile: the drain that had to happen anyway doubles
    as the hand-off, so the switch costs drain time but zero extra work,
  * end of a drain: the array holds nothing, the switch is free,
  * end of a restore: the just-reloaded accumulators are saved right back.

If the victim would anyway finish at or before the boundary (it was in its
final drain), the preemption is moot and the natural completion stands.
Every preemption therefore inflicts at most save + reload + one wasted fill
on the victim and stalls the preemptor by at most one boundary wait plus one
switch — both within the per-job analytical surcharge.

With ``preemption_overhead=False`` the engine instead freezes the victim at
its exact cycle position and resumes it for free (the idealized preemptive
processor model).

Events are totally ordered by (time, kind-class, keys, insertion serial)
with completions before releases before dispatches, so traces are exactly
reproducible; the only randomness is the seeded sporadic release generator.
"""

import bisect
import heapq
import json
import random
from dataclasses import dataclass, field

from .model import (
    DesignPoint,
    Policy,
    ReleaseModel,
    TaskSet,
    ceil_div,
    tile_costs,
)


class SimulationError(ValueError):
    """Raised for inconsistent simulation inputs."""


# --------------------------------------------------------------------------
# Execution plans


@dataclass(frozen=True)
class LayerPlan:
    """One layer's cycle structure on its accelerator."""

    tiles: int
    tile_cycles: int
    fill_cycles: int
    drain_cycles: int
    save_cycles: int
    reload_cycles: int

    def __post_init__(self):
        if self.tiles < 1 or self.tile_cycles < 1:
            raise SimulationError("a layer needs at least one nonempty tile")
        if min(self.fill_cycles, self.drain_cycles,
               self.save_cycles, self.reload_cycles) < 0:
            raise SimulationError("cycle counts cannot be negative")

    @property
    def total(self) -> int:
        return self.fill_cycles + self.tiles * self.tile_cycles + self.drain_cycles


@dataclass(frozen=True)
class LegPlan:
    """A maximal run of consecutive layers of one task on one accelerator."""

    acc: int
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def total(self) -> int:
        return sum(layer.total for layer in self.layers)


def isolated_response(legs) -> int:
    """Response time of one job on an otherwise empty platform."""
    return sum(leg.total for leg in legs)


def build_leg_plans(design: DesignPoint, ts: TaskSet,
                    preemption_overhead: bool = True,
                    layer_assignment=None) -> tuple:
    """Compile a design into per-task leg plans.

    ``layer_assignment`` optionally overrides the design's contiguous mapping
    with an explicit accelerator index per layer (one row per task), which
    may visit the same accelerator several times.  Legs are maximal runs of
    consecutive layers on the same accelerator, and each leg's uninterrupted
    duration equals the analytical latency of its layers.
    """
    num_accs = len(design.accs)
    if layer_assignment is None:
        rows = []
        for task in ts:
            row = []
            for acc_idx, count in enumerate(design.mapping.counts[task.task_id]):
                row.extend([acc_idx] * count)
            rows.append(tuple(row))
    else:
        rows = [tuple(r) for r in layer_assignment]
        if len(rows) != len(ts):
            raise SimulationError(
                f"layer_assignment has {len(rows)} rows for {len(ts)} tasks")
        for task, row in zip(ts, rows):
            if len(row) != len(task.layers):
                raise SimulationError(
                    f"task {task.task_id}: assignment lists {len(row)} layers, "
                    f"task has {len(task.layers)}")
            for acc_idx in row:
                if not 0 <= acc_idx < num_accs:
                    raise SimulationError(
                        f"task {task.task_id}: accelerator index {acc_idx} "
                        f"out of range for {num_accs} accelerators")

    plans = []
    for task, row in zip(ts, rows):
        legs = []
        start = 0
        for i in range(1, len(row) + 1):
            if i == len(row) or row[i] != row[start]:
                acc_idx = row[start]
                acc = design.accs[acc_idx]
                tc = tile_costs(acc)
                layers = []
                for layer in task.layers[start:i]:
                    tiles = (ceil_div(layer.m_dim, acc.tile_x)
                             * ceil_div(layer.k_dim, acc.tile_y)
                             * ceil_div(layer.n_dim, acc.tile_z))
                    layers.append(LayerPlan(
                        tiles=tiles,
                        tile_cycles=max(tc.e_tile, tc.e_load),
                        fill_cycles=tc.e_load,
                        drain_cycles=tc.e_store,
                        save_cycles=tc.e_store if preemption_overhead else 0,
                        reload_cycles=tc.e_load if preemption_overhead else 0,
                    ))
                legs.append(LegPlan(acc_idx, tuple(layers)))
                start = i
        plans.append(tuple(legs))
    return tuple(plans)


# --------------------------------------------------------------------------
# Plan walking: remaining work and suspension boundaries

# A position is (layer_index, tiles_done, need_fill, restore_cycles).
_START_POS = (0, 0, True, 0)


def _remaining(plan: LegPlan, pos) -> int:
    li, done, need_fill, restore = pos
    layer = plan.layers[li]
    rem = restore
    if need_fill:
        rem += layer.fill_cycles
    rem += (layer.tiles - done) * layer.tile_cycles + layer.drain_cycles
    for later in plan.layers[li + 1:]:
        rem += later.total
    return rem


@dataclass(frozen=True)
class _Suspension:
    boundary: int          # offset from segment start time
    moot: bool
    finish: int = 0        # natural completion offset (moot only)
    switch: int = 0        # accelerator transition time after the boundary
    save_overhead: int = 0  # portion of the switch that is genuine overhead
    waste: int = 0         # completed cycles that will be redone
    new_pos: tuple = _START_POS


def _suspension(plan: LegPlan, pos, delta: int) -> _Suspension:
    """First suspension opportunity at offset >= delta into the segment.

    ``delta`` must be smaller than the remaining work, which holds whenever
    preemption is initiated while the segment is genuinely running.
    """
    li, done, need_fill, restore = pos
    off = 0
    last = len(plan.layers) - 1
    for idx in range(li, len(plan.layers)):
        layer = plan.layers[idx]
        if idx == li:
            t0 = done
            if restore:
                off += restore
                if off >= delta:
                    return _Suspension(
                        boundary=off, moot=False,
                        switch=layer.save_cycles,
                        save_overhead=layer.save_cycles,
                        new_pos=(idx, t0, False, layer.reload_cycles))
            if need_fill:
                off += layer.fill_cycles
                if off >= delta:
                    return _Suspension(
                        boundary=off, moot=False, switch=0,
                        waste=layer.fill_cycles,
                        new_pos=(idx, 0, True, 0))
        else:
            t0 = 0
            off += layer.fill_cycles
            if off >= delta:
                return _Suspension(boundary=off, moot=False, switch=0,
                                   waste=layer.fill_cycles,
                                   new_pos=(idx, 0, True, 0))
        span = layer.tiles - t0
        if span and layer.tile_cycles:
            steps = ceil_div(max(delta - off, 0), layer.tile_cycles)
            steps = max(steps, 1)
        else:
            steps = 1
        if span and steps <= span:
            off += steps * layer.tile_cycles
            t_new = t0 + steps
            if t_new < layer.tiles:
                return _Suspension(
                    boundary=off, moot=False,
                    switch=layer.save_cycles,
                    save_overhead=layer.save_cycles,
                    new_pos=(idx, t_new, False, layer.reload_cycles))
            if idx == last:
                return _Suspension(boundary=off, moot=True,
                                   finish=off + layer.drain_cycles)
            # The drain writes this layer's results out regardless, so it
            # serves as the switch and costs no extra work.
            return _Suspension(boundary=off, moot=False,
                               switch=layer.drain_cycles,
                               new_pos=(idx + 1, 0, True, 0))
        off += span * layer.tile_cycles
        off += layer.drain_cycles
        if off >= delta:
            if idx == last:
                return _Suspension(boundary=off, moot=True, finish=off)
            return _Suspension(boundary=off, moot=False, switch=0,
                               new_pos=(idx + 1, 0, True, 0))
    raise SimulationError("suspension requested beyond the end of the segment")


# --------------------------------------------------------------------------
# Traces


@dataclass
class TraceEvent:
    time: int
    kind: str
    task: int = None
    job: int = None
    leg: int = None
    acc: int = None
    deadline: int = None
    response: int = None
    resumed: bool = None
    preemptor_task: int = None
    preemptor_job: int = None
    initiated_at: int = None
    switch: int = None
    save_overhead: int = None
    waste: int = None
    restore: int = None

    def to_dict(self) -> dict:
        out = {"time": self.time, "kind": self.kind}
        for key in ("task", "job", "leg", "acc", "deadline", "response",
                    "resumed", "preemptor_task", "preemptor_job",
                    "initiated_at", "switch", "save_overhead", "waste",
                    "restore"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass(frozen=True)
class PreemptionRecord:
    """Measured cost of one effective preemption."""

    acc: int
    victim_task: int
    victim_job: int
    preemptor_task: int
    preemptor_job: int
    inflicted: int   # extra work the victim's segment gains (save+reload+waste)
    suffered: int    # stall between initiation and the accelerator freeing up


@dataclass
class SimTrace:
    policy: str
    horizon: int
    num_accs: int
    events: list = field(default_factory=list)
    responses: dict = field(default_factory=dict)   # (task, job) -> (release, finish)
    unfinished: dict = field(default_factory=dict)  # (task, job) -> release
    occupancy: list = field(default_factory=lambda: [(0, 0)])
    busy: list = field(default_factory=list)
    preempts: list = field(default_factory=list)

    def response_times(self, task_id=None) -> list:
        items = sorted(self.responses.items())
        return [finish - release for (t, _), (release, finish) in items
                if task_id is None or t == task_id]

    def max_response(self, task_id=None):
        times = self.response_times(task_id)
        return max(times) if times else None

    @property
    def max_occupancy(self) -> int:
        return max(occ for _, occ in self.occupancy)

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for event in self.events:
                fh.write(json.dumps(event.to_dict(), sort_keys=False))
                fh.write("\n")


def preemption_overheads(trace: SimTrace) -> list:
    """Per-preemption measured overheads, for checking analytical bounds."""
    return list(trace.preempts)


# --------------------------------------------------------------------------
# Engine

K_DONE, K_RELEASE, K_DISPATCH = 0, 1, 2


class _Entry:
    """One (task, job, leg) unit of dispatchable work."""

    __slots__ = ("task", "job", "leg_idx", "plan", "release", "deadline",
                 "ready_time", "pos", "rem", "token", "started_at", "starts")

    def __init__(self, task, job, leg_idx, plan, release, deadline, ready_time):
        self.task = task
        self.job = job
        self.leg_idx = leg_idx
        self.plan = plan
        self.release = release
        self.deadline = deadline
        self.ready_time = ready_time
        self.pos = _START_POS
        self.rem = None
        self.token = 0
        self.started_at = None
        self.starts = 0


class _Pending:
    """A preemption that has been initiated and awaits its boundary."""

    __slots__ = ("victim", "preemptor_task", "preemptor_job", "initiated_at",
                 "suspension")

    def __init__(self, victim, preemptor, initiated_at, suspension):
        self.victim = victim
        self.preemptor_task = preemptor.task
        self.preemptor_job = preemptor.job
        self.initiated_at = initiated_at
        self.suspension = suspension


class _Engine:
    def __init__(self, legs_per_task, releases_per_task, num_accs, policy,
                 horizon, preserve_progress=False):
        if horizon < 1:
            raise SimulationError("horizon must be positive")
        if num_accs < 1:
            raise SimulationError("need at least one accelerator")
        for legs in legs_per_task:
            if not legs:
                raise SimulationError("every task needs at least one leg")
            for leg in legs:
                if not 0 <= leg.acc < num_accs:
                    raise SimulationError("leg accelerator index out of range")
        self.legs = legs_per_task
        self.releases = releases_per_task
        self.num_accs = num_accs
        self.policy = policy
        self.horizon = horizon
        self.preserve = preserve_progress

        self.heap = []
        self.serial = 0
        self.running = [None] * num_accs
        self.switching = [False] * num_accs
        self.pending = [None] * num_accs
        # Per-acc ready pools are heaps on the dispatch key, so overloaded
        # runs (growing backlog) stay O(n log n) instead of rescanning.
        self.pool = [[] for _ in range(num_accs)]
        self.busy_from = [0] * num_accs

        self.legs_on_acc = {}
        for task_id, legs in enumerate(legs_per_task):
            for leg in legs:
                key = (task_id, leg.acc)
                self.legs_on_acc[key] = self.legs_on_acc.get(key, 0) + 1
        self.leg_done = {}      # (task, leg_idx) -> completed jobs
        self.accleg_done = {}   # (task, job, acc) -> completed legs there
        self.initiated = set()  # (task, job, acc): jobs that already preempted there

        self.occ = 0
        self.trace = SimTrace(policy=policy.value, horizon=horizon,
                              num_accs=num_accs, busy=[0] * num_accs)
        self.released = []

    # -- plumbing

    def _push(self, time, klass, key, tag, payload):
        heapq.heappush(self.heap, (time, klass, key, self.serial, tag, payload))
        self.serial += 1

    def _pool_push(self, acc, entry):
        # Dispatch keys are unique (they end in task/job/leg), so the serial
        # only shields entries from being compared, never breaks a tie.
        heapq.heappush(self.pool[acc],
                       (self._dispatch_key(entry), self.serial, entry))
        self.serial += 1

    def _log(self, **kw):
        self.trace.events.append(TraceEvent(**kw))

    def _occ_step(self, time, delta):
        self.occ += delta
        self.trace.occupancy.append((time, self.occ))

    # -- main loop

    def run(self) -> SimTrace:
        for task_id, releases in enumerate(self.releases):
            for job, (release, deadline) in enumerate(releases):
                self._push(release, K_RELEASE, (task_id, job), "release",
                           (task_id, job, release, deadline))
        while self.heap:
            time, klass, key, _, tag, payload = heapq.heappop(self.heap)
            if time >= self.horizon:
                break
            if tag == "done":
                self._on_done(time, *payload)
            elif tag == "ppoint":
                self._on_preempt_point(time, payload)
            elif tag == "pdone":
                self._on_preempt_done(time, payload)
            elif tag == "release":
                self._on_release(time, *payload)
            else:  # dispatch
                self._on_dispatch(time, payload)
        for (task_id, job, release) in self.released:
            if (task_id, job) not in self.trace.responses:
                self.trace.unfinished[(task_id, job)] = release
        return self.trace

    # -- handlers

    def _on_release(self, now, task_id, job, release, deadline):
        self.released.append((task_id, job, release))
        self._occ_step(now, +1)
        self._log(time=now, kind="release", task=task_id, job=job,
                  deadline=deadline)
        entry = _Entry(task_id, job, 0, self.legs[task_id][0],
                       release, deadline, now)
        self._arrive(entry, now)

    def _arrive(self, entry, now):
        acc = entry.plan.acc
        self._pool_push(acc, entry)
        if self.policy is Policy.EDF:
            self._try_preempt(acc, entry, now)
        self._push(now, K_DISPATCH, acc, "dispatch", acc)

    def _gate_open(self, entry) -> bool:
        if entry.job == 0:
            return True
        if self.policy is Policy.FIFO_POLLING:
            return self.leg_done.get((entry.task, entry.leg_idx), 0) >= entry.job
        if self.policy is Policy.FIFO_NO_POLLING:
            acc = entry.plan.acc
            done = self.accleg_done.get((entry.task, entry.job - 1, acc), 0)
            return done == self.legs_on_acc[(entry.task, acc)]
        return True

    def _dispatch_key(self, entry):
        if self.policy is Policy.EDF:
            return (entry.deadline, entry.task, entry.job)
        return (entry.ready_time, entry.task, entry.job, entry.leg_idx)

    def _on_dispatch(self, now, acc):
        if self.running[acc] is not None:
            return
        # Pops come out in dispatch-key order, so the first gate-open entry
        # is exactly the minimum the linear scan would have chosen.
        pool = self.pool[acc]
        deferred = []
        best = None
        while pool:
            item = heapq.heappop(pool)
            if self._gate_open(item[2]):
                best = item[2]
                break
            deferred.append(item)
        for item in deferred:
            heapq.heappush(pool, item)
        if best is None:
            return
        self.running[acc] = best
        self.busy_from[acc] = now
        best.started_at = now
        if self.preserve:
            if best.rem is None:
                best.rem = _remaining(best.plan, best.pos)
            finish = now + best.rem
        else:
            finish = now + _remaining(best.plan, best.pos)
        self._log(time=now, kind="seg_start", task=best.task, job=best.job,
                  leg=best.leg_idx, acc=acc, resumed=best.starts > 0)
        best.starts += 1
        self._push(finish, K_DONE, acc, "done", (acc, best, best.token))

    def _try_preempt(self, acc, arriving, now):
        victim = self.running[acc]
        if (victim is None or self.switching[acc]
                or self.pending[acc] is not None):
            return
        if arriving.deadline >= victim.deadline:
            return
        # The analysis charges each job's switch cost once per accelerator,
        # so a job that already evicted someone here never does so again.
        if (arriving.task, arriving.job, acc) in self.initiated:
            return
        if self.preserve:
            self.initiated.add((arriving.task, arriving.job, acc))
            victim.token += 1
            victim.rem -= now - victim.started_at
            self.trace.busy[acc] += now - self.busy_from[acc]
            self.running[acc] = None
            victim.ready_time = now
            self._pool_push(acc, victim)
            self._log(time=now, kind="preempt", acc=acc, task=victim.task,
                      job=victim.job, leg=victim.leg_idx,
                      preemptor_task=arriving.task, preemptor_job=arriving.job,
                      initiated_at=now, switch=0, save_overhead=0, waste=0,
                      restore=0)
            self._log(time=now, kind="preempt_done", acc=acc, task=victim.task,
                      job=victim.job, leg=victim.leg_idx)
            self.trace.preempts.append(PreemptionRecord(
                acc, victim.task, victim.job, arriving.task, arriving.job,
                inflicted=0, suffered=0))
            self._push(now, K_DISPATCH, acc, "dispatch", acc)
            return
        delta = now - victim.started_at
        susp = _suspension(victim.plan, victim.pos, delta)
        victim.token += 1
        if susp.moot:
            # The segment finishes at its natural time; reinstate completion.
            finish = victim.started_at + susp.finish
            self._push(finish, K_DONE, acc, "done", (acc, victim, victim.token))
            return
        self.initiated.add((arriving.task, arriving.job, acc))
        self.pending[acc] = _Pending(victim, arriving, now, susp)
        self._push(victim.started_at + susp.boundary, K_DONE, acc,
                   "ppoint", acc)

    def _on_preempt_point(self, now, acc):
        pend = self.pending[acc]
        victim = pend.victim
        susp = pend.suspension
        victim.pos = susp.new_pos
        self.switching[acc] = True
        self._log(time=now, kind="preempt", acc=acc, task=victim.task,
                  job=victim.job, leg=victim.leg_idx,
                  preemptor_task=pend.preemptor_task,
                  preemptor_job=pend.preemptor_job,
                  initiated_at=pend.initiated_at, switch=susp.switch,
                  save_overhead=susp.save_overhead, waste=susp.waste,
                  restore=susp.new_pos[3])
        self.trace.preempts.append(PreemptionRecord(
            acc, victim.task, victim.job,
            pend.preemptor_task, pend.preemptor_job,
            inflicted=susp.save_overhead + susp.new_pos[3] + susp.waste,
            suffered=(now - pend.initiated_at) + susp.switch))
        self._push(now + susp.switch, K_DONE, acc, "pdone", acc)

    def _on_preempt_done(self, now, acc):
        pend = self.pending[acc]
        self.pending[acc] = None
        self.switching[acc] = False
        victim = pend.victim
        self.trace.busy[acc] += now - self.busy_from[acc]
        self.running[acc] = None
        victim.ready_time = now
        self._pool_push(acc, victim)
        self._log(time=now, kind="preempt_done", acc=acc, task=victim.task,
                  job=victim.job, leg=victim.leg_idx)
        self._push(now, K_DISPATCH, acc, "dispatch", acc)

    def _on_done(self, now, acc, entry, token):
        if token != entry.token:
            return
        self.trace.busy[acc] += now - self.busy_from[acc]
        self.running[acc] = None
        self._log(time=now, kind="seg_done", task=entry.task, job=entry.job,
                  leg=entry.leg_idx, acc=acc)
        key = (entry.task, entry.leg_idx)
        self.leg_done[key] = self.leg_done.get(key, 0) + 1
        akey = (entry.task, entry.job, acc)
        self.accleg_done[akey] = self.accleg_done.get(akey, 0) + 1
        legs = self.legs[entry.task]
        if entry.leg_idx + 1 < len(legs):
            nxt = _Entry(entry.task, entry.job, entry.leg_idx + 1,
                         legs[entry.leg_idx + 1], entry.release,
                         entry.deadline, now)
            self._arrive(nxt, now)
        else:
            self._occ_step(now, -1)
            self._log(time=now, kind="job_done", task=entry.task,
                      job=entry.job, response=now - entry.release)
            self.trace.responses[(entry.task, entry.job)] = (entry.release, now)
        self._push(now, K_DISPATCH, acc, "dispatch", acc)


# --------------------------------------------------------------------------
# Release sequences and public entry points


def periodic_release_sequence(ts: TaskSet, horizon: int) -> tuple:
    """Synchronized periodic releases: job k of task i at k * period."""
    out = []
    for task in ts:
        releases = []
        t = 0
        while t < horizon:
            releases.append((t, t + task.period))
            t += task.period
        out.append(tuple(releases))
    return tuple(out)


def sporadic_release_sequence(ts: TaskSet, horizon: int, seed: int) -> tuple:
    """Seeded sporadic releases: gaps uniform in [p, p + p // 2].

    One generator drives all tasks, consumed in task-id order, so a given
    (task set, horizon, seed) triple always yields the same sequence.
    """
    rng = random.Random(seed)
    out = []
    for task in ts:
        releases = []
        t = 0
        while t < horizon:
            releases.append((t, t + task.period))
            t += rng.randint(task.period, task.period + task.period // 2)
        out.append(tuple(releases))
    return tuple(out)


def simulate_plans(leg_plans, releases, num_accs, policy, horizon,
                   preserve_progress=False) -> SimTrace:
    """Low-level entry: run explicit leg plans against explicit releases.

    ``releases`` holds one (release_time, absolute_deadline) list per task.
    """
    engine = _Engine(leg_plans, releases, num_accs, policy, horizon,
                     preserve_progress)
    return engine.run()


def simulate(design: DesignPoint, ts: TaskSet, policy: Policy = None,
             horizon: int = None, release_model=None, seed: int = 0,
             layer_assignment=None, preemption_overhead: bool = True) -> SimTrace:
    """Simulate a design against a task set.

    The policy defaults to the design's own; the horizon defaults to 128x
    the largest period.  ``release_model`` overrides every task's release
    model when given.  With ``preemption_overhead=False`` the EDF engine
    preserves exact progress across preemptions and charges nothing for them.
    """
    if policy is None:
        policy = design.policy
    if horizon is None:
        horizon = 128 * ts.max_period
    plans = build_leg_plans(design, ts, preemption_overhead, layer_assignment)
    periodic = periodic_release_sequence(ts, horizon)
    sporadic = sporadic_release_sequence(ts, horizon, seed)
    releases = []
    for task in ts:
        model = release_model if release_model is not None else task.release_model
        chosen = sporadic if model is ReleaseModel.SPORADIC else periodic
        releases.append(chosen[task.task_id])
    return simulate_plans(plans, tuple(releases), len(design.accs), policy,
                          horizon, preserve_progress=not preemption_overhead)


# --------------------------------------------------------------------------
# Divergence detection


@dataclass(frozen=True)
class DivergenceReport:
    divergent: bool
    reasons: tuple

    def __bool__(self) -> bool:
        return self.divergent


def _max_occupancy_in(series, lo, hi) -> int:
    current = 0
    best = None
    for t, occ in series:
        if t <= lo:
            current = occ
        elif t <= hi:
            if best is None:
                best = current
            best = max(best, occ)
        else:
            break
    return current if best is None else best


def detect_divergence(trace: SimTrace, ts: TaskSet) -> DivergenceReport:
    """Decide whether a trace shows unbounded backlog growth.

    Requires a horizon of at least 100x the largest period so that steady
    state (for schedulable sets) is reached well inside the first half.
    A trace diverges when the backlog keeps growing — the peak number of
    in-flight jobs over the final quarter exceeds the first half's peak by
    more than the task count — or when some task's worst response over jobs
    released in the second half outgrows the first half's worst by more than
    one period (jobs unfinished at the horizon count as horizon - release).
    """
    if trace.horizon < 100 * ts.max_period:
        raise SimulationError(
            f"divergence detection needs horizon >= 100x the largest period "
            f"({100 * ts.max_period}), got {trace.horizon}")
    reasons = []
    h = trace.horizon
    first = _max_occupancy_in(trace.occupancy, 0, h // 2)
    last = _max_occupancy_in(trace.occupancy, 3 * h // 4, h)
    if last > first + len(ts):
        reasons.append(
            f"backlog growth: peak occupancy {last} in the final quarter vs "
            f"{first} in the first half")

    per_task = {task.task_id: ([], []) for task in ts}
    for (task_id, _), (release, finish) in trace.responses.items():
        per_task[task_id][0 if release < h // 2 else 1].append(finish - release)
    for (task_id, _), release in trace.unfinished.items():
        per_task[task_id][0 if release < h // 2 else 1].append(h - release)
    for task in ts:
        early, late = per_task[task.task_id]
        if early and late and max(late) > max(early) + task.period:
            reasons.append(
                f"task {task.task_id}: worst response grew from {max(early)} "
                f"to {max(late)} between halves")
    return DivergenceReport(bool(reasons), tuple(reasons))


# --------------------------------------------------------------------------
# Trace verification


def verify_trace(trace: SimTrace) -> list:
    """Independent consistency checks over a finished trace.

    Returns a list of violation strings (empty when the trace is coherent):
    monotone event times, response bookkeeping, precedence between legs,
    per-accelerator mutual exclusion, and — for EDF traces — that every
    dispatch picked an earliest-deadline ready segment.
    """
    problems = []
    last_time = 0
    for ev in trace.events:
        if ev.time < last_time:
            problems.append(f"time went backwards at {ev.kind}@{ev.time}")
        last_time = max(last_time, ev.time)

    releases = {}
    deadlines = {}
    seg_starts = {}    # (task, job, leg) -> [times]
    seg_dones = {}     # (task, job, leg) -> time
    for ev in trace.events:
        key = (ev.task, ev.job)
        if ev.kind == "release":
            releases[key] = ev.time
            deadlines[key] = ev.deadline
        elif ev.kind == "seg_start":
            seg_starts.setdefault(key + (ev.leg,), []).append(ev.time)
        elif ev.kind == "seg_done":
            seg_dones[key + (ev.leg,)] = ev.time
        elif ev.kind == "job_done":
            if key not in releases:
                problems.append(f"job_done for unreleased {key}")
            elif ev.response != ev.time - releases[key]:
                problems.append(f"response mismatch for {key}: "
                                f"{ev.response} != {ev.time - releases[key]}")

    for (task, job, leg), starts in seg_starts.items():
        first = min(starts)
        if leg == 0:
            lower = releases.get((task, job))
        else:
            lower = seg_dones.get((task, job, leg - 1))
        if lower is None:
            problems.append(f"segment ({task},{job},{leg}) started without "
                            f"its predecessor finishing")
        elif first < lower:
            problems.append(f"segment ({task},{job},{leg}) started at {first} "
                            f"before its predecessor at {lower}")

    # Per-accelerator busy intervals must not overlap.
    intervals = [[] for _ in range(trace.num_accs)]
    open_seg = [None] * trace.num_accs
    for ev in trace.events:
        if ev.kind == "seg_start":
            if open_seg[ev.acc] is not None:
                problems.append(f"acc {ev.acc}: seg_start at {ev.time} while busy")
            open_seg[ev.acc] = ev.time
        elif ev.kind in ("seg_done", "preempt_done"):
            if open_seg[ev.acc] is None:
                problems.append(f"acc {ev.acc}: {ev.kind} at {ev.time} while idle")
            else:
                intervals[ev.acc].append((open_seg[ev.acc], ev.time))
                open_seg[ev.acc] = None
    for acc, t0 in enumerate(open_seg):
        if t0 is not None:
            # Still running when the simulation cut off at the horizon.
            intervals[acc].append((t0, trace.horizon))
    for acc, spans in enumerate(intervals):
        spans.sort()
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if b0 < a1:
                problems.append(f"acc {acc}: overlapping busy intervals "
                                f"[{a0},{a1}) and [{b0},{b1})")

    windows = _ready_windows(trace, releases, deadlines, seg_dones)
    problems.extend(_verify_work_conservation(trace, intervals, windows,
                                              releases, seg_dones))
    if trace.policy == Policy.EDF.value:
        problems.extend(_verify_edf_dispatches(trace, windows))
    return problems


def _ready_windows(trace, releases, deadlines, seg_dones):
    """Waiting spans per dispatch: (ready, start, acc, deadline, ident).

    A segment waits from the moment it becomes ready — its release, its
    predecessor leg's completion, or the end of its eviction — until the
    seg_start that dispatched it.  Under the polling FIFO variants the
    handshake with the previous job further delays readiness.
    """
    window_opens = {}
    windows = []
    for ev in trace.events:
        if ev.kind == "seg_start":
            ident = (ev.task, ev.job, ev.leg)
            opened = window_opens.pop(ident, None)
            if opened is None:
                if ev.leg == 0:
                    opened = releases.get((ev.task, ev.job), ev.time)
                else:
                    opened = seg_dones.get((ev.task, ev.job, ev.leg - 1), ev.time)
            windows.append((opened, ev.time, ev.acc,
                            deadlines.get((ev.task, ev.job)), ident))
        elif ev.kind == "preempt_done":
            window_opens[(ev.task, ev.job, ev.leg)] = ev.time

    if trace.policy == Policy.FIFO_POLLING.value:
        done_times = {}
        for ev in trace.events:
            if ev.kind == "seg_done":
                done_times.setdefault((ev.task, ev.leg), []).append(ev.time)
        adjusted = []
        for opened, start, acc, deadline, ident in windows:
            task, job, leg = ident
            if job > 0:
                opened = max(opened, done_times[(task, leg)][job - 1])
            adjusted.append((opened, start, acc, deadline, ident))
        windows = adjusted
    elif trace.policy == Policy.FIFO_NO_POLLING.value:
        leg_accs = {}
        for _, _, acc, _, (task, job, leg) in windows:
            leg_accs.setdefault(task, {})[leg] = acc
        adjusted = []
        for opened, start, acc, deadline, ident in windows:
            task, job, leg = ident
            if job > 0:
                peers = [l for l, a in leg_accs[task].items() if a == acc]
                gate = max(seg_dones[(task, job - 1, l)] for l in peers)
                opened = max(opened, gate)
            adjusted.append((opened, start, acc, deadline, ident))
        windows = adjusted
    return windows


def _verify_work_conservation(trace, intervals, windows, releases, seg_dones):
    """No accelerator may sit idle while a ready segment waits for it."""
    gaps = []
    for spans in intervals:
        acc_gaps = []
        cursor = 0
        for a0, a1 in spans:
            if a0 > cursor:
                acc_gaps.append((cursor, a0))
            cursor = max(cursor, a1)
        if cursor < trace.horizon:
            acc_gaps.append((cursor, trace.horizon))
        gaps.append(acc_gaps)

    waits = list(windows)
    if trace.policy in (Policy.EDF.value, Policy.FIFO_PIPELINED.value):
        # Segments that never got dispatched wait until the horizon.
        leg_accs = {}
        job_done = set()
        started = set()
        for ev in trace.events:
            if ev.kind == "seg_start":
                leg_accs.setdefault(ev.task, {})[ev.leg] = ev.acc
                started.add((ev.task, ev.job, ev.leg))
            elif ev.kind == "job_done":
                job_done.add((ev.task, ev.job))
        for (task, job), release in releases.items():
            if (task, job, 0) not in started:
                acc = leg_accs.get(task, {}).get(0)
                if acc is not None:
                    waits.append((release, trace.horizon, acc, None,
                                  (task, job, 0)))
        last_done = {}
        for (task, job, leg), done in seg_dones.items():
            key = (task, job)
            if key not in last_done or leg > last_done[key][0]:
                last_done[key] = (leg, done)
        for (task, job), (leg, done) in last_done.items():
            if (task, job) in job_done:
                continue
            nxt = (task, job, leg + 1)
            acc = leg_accs.get(task, {}).get(leg + 1)
            if nxt not in started and acc is not None:
                waits.append((done, trace.horizon, acc, None, nxt))

    problems = []
    # Gaps are sorted and disjoint: the only candidate for a given wait is the
    # first gap ending after the wait opens.
    gap_ends = [[g1 for _, g1 in acc_gaps] for acc_gaps in gaps]
    for opened, until, acc, _, ident in waits:
        if opened >= until:
            continue
        idx = bisect.bisect_right(gap_ends[acc], opened)
        if idx < len(gaps[acc]) and gaps[acc][idx][0] < until:
            g0, g1 = gaps[acc][idx]
            problems.append(
                f"acc {acc} idle during [{max(g0, opened)},"
                f"{min(g1, until)}) while segment {ident} was ready")
    return problems


def _verify_edf_dispatches(trace, windows):
    problems = []
    starts = sorted((w[1], w[2], w[3], w[4]) for w in windows)
    by_open = sorted(windows)
    active = [{} for _ in range(trace.num_accs)]
    idx = 0
    for start_time, acc, deadline, ident in starts:
        while idx < len(by_open) and by_open[idx][0] <= start_time:
            o, s, a, d, i = by_open[idx]
            if s > start_time:
                active[a][i] = (s, d)
            idx += 1
        stale = [i for i, (s, _) in active[acc].items() if s <= start_time]
        for i in stale:
            del active[acc][i]
        for i, (s, d) in active[acc].items():
            if d < deadline:
                problems.append(
                    f"EDF violation: segment {ident} (deadline {deadline}) "
                    f"started at {start_time} while {i} (deadline {d}) was ready")
                break
    return problems
