"""Experiment harnesses on top of the search and the simulator.

Three studies, each with a deterministic CSV emitter:

  * ``period_sweep`` — instantiate a task-set template over a grid of
    per-task period ratios (period_i = reference_i / ratio_i, so larger
    ratios mean heavier workloads), run one or more design methods per cell,
    and record feasibility.  FIFO designs are judged by the exact
    utilization test; EDF designs must additionally survive a divergence
    check in simulation.
  * ``compare_policies`` — simulate one design under several scheduling
    policies (including the idealized overhead-free EDF) across seeds and
    summarize per-task response-time statistics.
  * ``beam_quality_study`` — sweep beam widths (including the unbounded
    oracle) and tabulate solution quality against search effort, counted in
    children generated rather than wall time.

All outputs are pure functions of their inputs plus explicit seeds, so a
rerun reproduces every file byte for byte.
"""

import csv
from dataclasses import dataclass, field
from fractions import Fraction

from .model import Policy, TaskSet, TaskSpec
from .dse import (
    SearchBudgetExceeded,
    beam_search,
    brute_force_dse,
    single_accelerator_design,
    throughput_guided_dse,
)
from .sim import build_leg_plans, detect_divergence, isolated_response, simulate

SWEEP_METHODS = ("beam", "throughput", "single")


def default_ratio_axis(points: int = 7, lo: float = 0.25, hi: float = 4.0):
    """Log-spaced period ratios, default 7 points spanning 0.25x..4x."""
    if points < 1:
        raise ValueError("need at least one grid point")
    if points == 1:
        return (lo,)
    step = (hi / lo) ** (1.0 / (points - 1))
    return tuple(lo * step ** k for k in range(points))


def reference_periods(ts: TaskSet, budget, policy: Policy = Policy.FIFO_PIPELINED):
    """Per-task reference periods: each task's isolated latency on the
    whole-budget single accelerator (the natural unit for ratio sweeps)."""
    design = single_accelerator_design(ts, budget, policy)
    if design is None:
        raise ValueError("no single accelerator fits the budget")
    plans = build_leg_plans(design, ts)
    return tuple(isolated_response(plans[task.task_id]) for task in ts)


def _with_periods(template: TaskSet, periods) -> TaskSet:
    return TaskSet(tuple(
        TaskSpec(t.task_id, t.layers, p, t.release_model)
        for t, p in zip(template, periods)))


@dataclass
class CellResult:
    """One (cell, method) outcome of a period sweep."""

    feasible: bool
    max_util: Fraction = None
    verdict: str = ""
    error: str = None


@dataclass
class FeasibilityGrid:
    axes: tuple                 # one ratio tuple per task
    methods: tuple
    reference_periods: tuple
    cells: dict = field(default_factory=dict)  # ratio tuple -> {method: CellResult}

    def feasible_counts(self) -> dict:
        counts = {m: 0 for m in self.methods}
        for per_method in self.cells.values():
            for method, result in per_method.items():
                if result.feasible:
                    counts[method] += 1
        return counts

    def exclusive_cells(self, method: str) -> list:
        """Cells where only the given method found a feasible design."""
        out = []
        for coord in sorted(self.cells):
            per_method = self.cells[coord]
            if per_method[method].feasible and all(
                    not r.feasible for m, r in per_method.items() if m != method):
                out.append(coord)
        return out


def _grid_coords(axes):
    coords = [()]
    for axis in axes:
        coords = [c + (r,) for c in coords for r in axis]
    return coords


def _run_method(method, ts, budget, max_m, beam_width, grid, policy):
    if method == "beam":
        return beam_search(ts, budget, max_m, beam_width, grid, policy).best
    if method == "throughput":
        return throughput_guided_dse(ts, budget, max_m, beam_width, grid,
                                     policy).best
    if method == "single":
        design = single_accelerator_design(ts, budget, policy)
        if design is None or design.max_util > 1:
            return None
        return design
    raise ValueError(f"unknown sweep method {method!r}")


def period_sweep(template: TaskSet, budget, ref_periods=None,
                 axes=None, methods=SWEEP_METHODS, max_m: int = 3,
                 beam_width: int = 8, grid: int = 4,
                 policy: Policy = Policy.FIFO_PIPELINED,
                 horizon_mult: int = 128, seed: int = 0) -> FeasibilityGrid:
    """Feasibility of each method across a grid of per-task period ratios.

    Periods are reference / ratio (rounded, floored at one cycle), so moving
    right along an axis shrinks that task's period and hardens the cell.
    A method is feasible in a cell when it finds a design with every
    utilization <= 1; EDF designs must also come back non-divergent from a
    simulation at ``horizon_mult`` x the largest period.  Per-cell failures
    are recorded in the cell, never raised.
    """
    if ref_periods is None:
        ref_periods = reference_periods(template, budget, policy)
    if axes is None:
        axes = tuple(default_ratio_axis() for _ in template)
    if len(axes) != len(template) or len(ref_periods) != len(template):
        raise ValueError("need one ratio axis and one reference period per task")
    out = FeasibilityGrid(tuple(tuple(a) for a in axes), tuple(methods),
                          tuple(ref_periods))
    for coord in _grid_coords(axes):
        periods = [max(1, round(p / r)) for p, r in zip(ref_periods, coord)]
        ts = _with_periods(template, periods)
        per_method = {}
        for method in methods:
            try:
                best = _run_method(method, ts, budget, max_m, beam_width,
                                   grid, policy)
            except Exception as exc:  # recorded, sweep continues
                per_method[method] = CellResult(False, verdict="error",
                                                error=str(exc))
                continue
            if best is None:
                per_method[method] = CellResult(False, verdict="no-design")
            elif policy is Policy.EDF:
                trace = simulate(best, ts, horizon=horizon_mult * ts.max_period,
                                 seed=seed)
                report = detect_divergence(trace, ts)
                per_method[method] = CellResult(
                    not report.divergent, best.max_util,
                    "diverged" if report.divergent else "sim-confirmed")
            else:
                per_method[method] = CellResult(True, best.max_util, "exact")
        out.cells[coord] = per_method
    return out


def write_sweep_csv(grid: FeasibilityGrid, path):
    """One row per (cell, method); ratios formatted to six significant digits."""
    n = len(grid.axes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"ratio_{i}" for i in range(n)]
                   + [f"period_{i}" for i in range(n)]
                   + ["method", "feasible", "max_util", "verdict", "error"])
        for coord in sorted(grid.cells):
            periods = [max(1, round(p / r))
                       for p, r in zip(grid.reference_periods, coord)]
            for method in grid.methods:
                r = grid.cells[coord][method]
                w.writerow([f"{c:.6g}" for c in coord] + periods + [
                    method, int(r.feasible),
                    "" if r.max_util is None else str(r.max_util),
                    r.verdict, r.error or ""])


@dataclass(frozen=True)
class PolicyRun:
    """One simulation configuration inside a policy comparison."""

    label: str
    policy: Policy
    preemption_overhead: bool = True


DEFAULT_POLICY_RUNS = (
    PolicyRun("fifo", Policy.FIFO_PIPELINED),
    PolicyRun("edf", Policy.EDF),
    PolicyRun("edf-free", Policy.EDF, preemption_overhead=False),
)


@dataclass
class ResponseStats:
    """Per-(task, policy run, seed) response summary."""

    task: int
    label: str
    seed: int
    count: int
    max_response: int
    p99_response: int
    mean_response: float
    fastest: int
    preemptions: int
    reliable: bool

    def validate(self):
        if self.count:
            if not (self.max_response >= self.p99_response
                    >= self.mean_response >= self.fastest):
                raise ValueError(f"implausible stats ordering: {self}")


def _p99(sorted_values):
    rank = -(-99 * len(sorted_values) // 100)  # nearest-rank, 1-indexed
    return sorted_values[rank - 1]


def compare_policies(design, ts: TaskSet, runs=DEFAULT_POLICY_RUNS,
                     horizon: int = None, seeds=(0,)) -> list:
    """Simulate one design under several policies; stats per task and seed.

    A run whose trace shows divergence (checkable only when the horizon is
    at least 100x the largest period) has its rows marked unreliable.
    """
    if horizon is None:
        horizon = 128 * ts.max_period
    plans = build_leg_plans(design, ts)
    rows = []
    for run in runs:
        for seed in seeds:
            trace = simulate(design, ts, policy=run.policy, horizon=horizon,
                             seed=seed,
                             preemption_overhead=run.preemption_overhead)
            reliable = True
            if horizon >= 100 * ts.max_period:
                reliable = not detect_divergence(trace, ts).divergent
            for task in ts:
                values = sorted(trace.response_times(task.task_id))
                preempts = sum(1 for p in trace.preempts
                               if p.victim_task == task.task_id)
                if values:
                    rows.append(ResponseStats(
                        task.task_id, run.label, seed, len(values),
                        values[-1], _p99(values),
                        sum(values) / len(values),
                        isolated_response(plans[task.task_id]),
                        preempts, reliable))
                else:
                    rows.append(ResponseStats(
                        task.task_id, run.label, seed, 0, 0, 0, 0.0,
                        isolated_response(plans[task.task_id]),
                        preempts, reliable))
    return rows


def winners_by_max_response(rows) -> dict:
    """Per task: the policy label with the smallest worst-case response."""
    worst = {}
    for row in rows:
        if not row.count:
            continue
        key = (row.task, row.label)
        worst[key] = max(worst.get(key, 0), row.max_response)
    out = {}
    for (task, label), value in sorted(worst.items()):
        if task not in out or value < out[task][1]:
            out[task] = (label, value)
    return {task: label for task, (label, _) in out.items()}


def write_response_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "policy", "seed", "count", "max", "p99", "mean",
                    "fastest", "preemptions", "reliable"])
        for r in sorted(rows, key=lambda r: (r.task, r.label, r.seed)):
            w.writerow([r.task, r.label, r.seed, r.count, r.max_response,
                        r.p99_response, f"{r.mean_response:.6f}", r.fastest,
                        r.preemptions, int(r.reliable)])


@dataclass
class BeamQualityRow:
    width: object            # int or None for the unbounded oracle
    best_max_util: Fraction  # None when nothing feasible
    feasible_count: int
    children: int
    parents: int
    first_feasible_children: int
    exceeded: bool = False

    @property
    def label(self) -> str:
        return "inf" if self.width is None else str(self.width)


def beam_quality_study(ts: TaskSet, budget, widths=(1, 2, 4, 8, None),
                       max_m: int = 3, grid: int = 4,
                       policy: Policy = Policy.FIFO_PIPELINED,
                       node_budget: int = 500_000) -> list:
    """Solution quality vs. search effort across beam widths.

    ``None`` requests the exhaustive oracle, which honors ``node_budget``
    and yields a row marked ``exceeded`` instead of running away.
    """
    rows = []
    for width in widths:
        try:
            if width is None:
                result = brute_force_dse(ts, budget, max_m, policy, grid,
                                         node_budget)
            else:
                result = beam_search(ts, budget, max_m, width, grid, policy)
        except SearchBudgetExceeded:
            rows.append(BeamQualityRow(width, None, 0, 0, 0, -1,
                                       exceeded=True))
            continue
        c = result.explored
        rows.append(BeamQualityRow(
            width,
            result.best.max_util if result.best else None,
            len(result.feasible), c.children_generated, c.parents_expanded,
            c.first_feasible_children))
    return rows


def write_beam_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["width", "best_max_util", "feasible_count", "children",
                    "parents", "first_feasible_children", "exceeded"])
        for r in rows:
            w.writerow([r.label,
                        "" if r.best_max_util is None else str(r.best_max_util),
                        r.feasible_count, r.children, r.parents,
                        r.first_feasible_children, int(r.exceeded)])
