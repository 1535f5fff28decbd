"""Design-space exploration for pipelined accelerator chains.

The search partitions the platform's resources into a chain of accelerators
and splits every task's layer sequence into contiguous slices across that
chain, one slice per accelerator.  It proceeds breadth-first over the number
of accelerators: each partial design carries the accelerators created so
far plus a synthetic "remainder" accelerator built from everything not yet
assigned.  Expanding a partial design peels one more real accelerator off
the remainder:

  * pick a resource fraction g/G of what is left (components floored,
    leftovers stay in the pool),
  * pick how many further layers of each task move onto the new accelerator,
  * synthesize the cheapest-utilization configuration for that slice set
    (``create_acc``), dropping the child when even the best configuration is
    overloaded,
  * rebuild the remainder accelerator over what is still unassigned.  When
    the remainder itself sustains its load, the child doubles as a complete
    feasible design.

Candidates are ranked by their bottleneck (maximum per-accelerator)
utilization and only the best ``beam_width`` children survive each round, so
the number of expanded parents is at most ``(max_accs - 2) * beam_width + 1``.
Brute force is the same walk with an unbounded beam plus an explicit node
budget, and the throughput-guided baseline is the same walk with every period
replaced by one — it balances raw WCET cycles and only learns the true
utilizations of what it picked after the fact.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product

from .model import (
    AcceleratorConfig,
    DesignPoint,
    Mapping,
    ResourceVector,
    TaskSet,
    _layer_cycles,
    _tile_costs,
    ceil_div,
)
from .model import Policy
from .schedulability import make_design_point, slice_wcet


class SearchBudgetExceeded(RuntimeError):
    """Raised when an exhaustive search would evaluate more nodes than allowed."""


@dataclass(frozen=True)
class WorkSlice:
    """A run of layers from one task together with that task's period."""

    layers: tuple
    period: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))


@dataclass
class SearchCounters:
    """Work accounting for one search run (complexity guard rails)."""

    parents_expanded: int = 0
    children_generated: int = 0
    children_pruned: int = 0
    dead_ends: int = 0
    kept_per_iteration: list = field(default_factory=list)
    create_acc_calls: int = 0
    designs_emitted: int = 0
    first_feasible_children: int = -1  # children generated when the first design appeared

    def note_feasible(self):
        if self.first_feasible_children < 0:
            self.first_feasible_children = self.children_generated


@dataclass(frozen=True)
class PartialDesign:
    """A prefix of a design: created accelerators plus the unassigned rest."""

    created: tuple            # ((AcceleratorConfig, per-task slice counts), ...)
    created_utils: tuple      # Fraction per created accelerator
    remaining_resources: ResourceVector
    remaining_layers: tuple   # per-task layers not yet assigned
    remain_acc: AcceleratorConfig
    remain_util: Fraction

    @property
    def score(self) -> Fraction:
        """Bottleneck utilization over created accelerators and the remainder."""
        return max(self.created_utils + (self.remain_util,))

    def sort_key(self) -> tuple:
        return (
            self.score,
            len(self.created),
            tuple((acc.sort_key(), counts) for acc, counts in self.created),
            self.remain_acc.sort_key(),
        )


@dataclass
class DseResult:
    """All feasible designs found, the best one, and the work done finding them."""

    feasible: list
    best: object  # DesignPoint | None
    explored: SearchCounters


def _pow2_upto(limit: int):
    v = 1
    while v <= limit:
        yield v
        v *= 2


def _pow2_ceil(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@lru_cache(maxsize=None)
def _config_candidates(budget: tuple, caps: tuple) -> tuple:
    """All array/tile geometries that fit a budget, in lexicographic order.

    Array dims range over powers of two within the PE budget; tile dims over
    power-of-two multiples of the array dims, capped at the power-of-two
    roundup of the largest layer dimension in play (larger tiles only add
    padding, so they are dominated and skipped).
    """
    pe, mem, bw, ddr = budget
    if pe < 1 or mem < 6 or bw < 3 or ddr < 1:
        return ()
    out = []
    for a in _pow2_upto(pe):
        for b in _pow2_upto(pe // a):
            for c in _pow2_upto(pe // (a * b)):
                if a * b + b * c + a * c > bw:
                    continue
                x = a
                while True:
                    y = b
                    while True:
                        if 2 * (x * y + y * c + x * c) > mem:
                            break
                        z = c
                        while True:
                            if 2 * (x * y + y * z + x * z) > mem:
                                break
                            out.append((a, b, c, x, y, z))
                            if z * 2 > max(c, caps[2]):
                                break
                            z *= 2
                        if y * 2 > max(b, caps[1]):
                            break
                        y *= 2
                    if x * 2 > max(a, caps[0]):
                        break
                    x *= 2
    return tuple(out)


def _dim_caps(slices) -> tuple:
    """Power-of-two roundups of the largest M/K/N dims across the slices."""
    m = k = n = 1
    for sl in slices:
        for layer in sl.layers:
            m = max(m, layer.m_dim)
            k = max(k, layer.k_dim)
            n = max(n, layer.n_dim)
    return (_pow2_ceil(m), _pow2_ceil(k), _pow2_ceil(n))


_create_acc_cache = {}


def create_acc(segments, budget: ResourceVector, policy: Policy,
               period_aware: bool = True):
    """Synthesize the minimum-utilization accelerator for a slice set.

    Scans the geometry grid and returns the configuration minimizing
    sum_i e_i / p_i over the non-empty slices (with EDF preemption surcharge
    when applicable), allocated the whole budget.  Ties go to the
    lexicographically smallest geometry.  Returns None when nothing fits the
    budget; with no work to place, the smallest valid configuration wins.

    With ``period_aware`` off, every period is treated as 1 — the objective
    degenerates to total WCET cycles (the throughput-guided baseline).
    """
    slices = [s for s in segments if s.layers]
    key = (tuple((s.layers, s.period if period_aware else 1) for s in slices),
           budget.as_tuple(), policy, period_aware)
    hit = _create_acc_cache.get(key, _create_acc_cache)
    if hit is not _create_acc_cache:
        return hit
    geo = _best_geometry(slices, budget, policy, period_aware)
    acc = None if geo is None else AcceleratorConfig(*geo, allocated=budget)
    _create_acc_cache[key] = acc
    return acc


def _best_geometry(slices, budget, policy, period_aware):
    cands = _config_candidates(budget.as_tuple(), _dim_caps(slices))
    if not cands:
        return None
    if period_aware and slices:
        common = math.lcm(*(s.period for s in slices))
        weights = [common // s.period for s in slices]
    else:
        weights = [1] * len(slices)
    r4 = budget.ddr_bw
    best = None
    best_score = None
    for geo in cands:
        a, b, c, x, y, z = geo
        score = 0
        for sl, w in zip(slices, weights):
            cycles = 0
            for layer in sl.layers:
                cycles += _layer_cycles(layer.m_dim, layer.k_dim, layer.n_dim,
                                        a, b, c, x, y, z, r4)
            if policy is Policy.EDF and cycles > 0:
                tc = _tile_costs(a, b, c, x, y, z, r4)
                cycles += tc.e_tile + tc.e_store + tc.e_load
            score += cycles * w
            if best_score is not None and score >= best_score:
                break
        if best_score is None or score < best_score:
            best_score = score
            best = geo
    return best


def _slice_util(slices, acc: AcceleratorConfig, policy: Policy,
                period_aware: bool) -> Fraction:
    """Utilization of one accelerator over its slices (periods=1 when unaware)."""
    total = Fraction(0)
    for sl in slices:
        wcet = slice_wcet(sl.layers, acc, policy)
        total += Fraction(wcet.total, sl.period if period_aware else 1)
    return total


def _task_slices(ts: TaskSet, start_counts, take_counts) -> list:
    """WorkSlices covering take_counts[i] layers of each task from start_counts[i]."""
    return [
        WorkSlice(t.layers[s:s + d], t.period)
        for t, s, d in zip(ts, start_counts, take_counts)
    ]


def _materialize(parent: PartialDesign, ts: TaskSet, policy: Policy,
                 extra=None) -> DesignPoint:
    """Turn a partial design (optionally plus its remainder) into a DesignPoint."""
    accs = [acc for acc, _ in parent.created]
    columns = [counts for _, counts in parent.created]
    if extra is not None:
        accs.append(extra)
        columns.append(parent.remaining_layers)
    rows = tuple(tuple(col[i] for col in columns) for i in range(len(ts)))
    return make_design_point(accs, Mapping(rows), policy, ts)


def expand(parent: PartialDesign, ts: TaskSet, grid: int, policy: Policy,
           counters: SearchCounters, period_aware: bool = True):
    """Generate the children of one partial design.

    Returns (children, designs): children are retained for further
    partitioning, designs are the complete feasible design points that fell
    out along the way.  Children whose new accelerator cannot sustain its
    slices are pruned (period-aware mode only); children whose remainder can
    no longer host any accelerator are dead ends and dropped.
    """
    children = []
    designs = []
    n = len(ts)
    total_layers = ts.layer_counts
    start = tuple(total_layers[i] - parent.remaining_layers[i] for i in range(n))
    for g in range(1, grid):
        child_budget = parent.remaining_resources.scale_floor(g, grid)
        rest_budget = parent.remaining_resources - child_budget
        for delta in product(*(range(r + 1) for r in parent.remaining_layers)):
            if not any(delta):
                continue
            counters.children_generated += 1
            new_slices = _task_slices(ts, start, delta)
            counters.create_acc_calls += 1
            acc = create_acc(new_slices, child_budget, policy, period_aware)
            if acc is None:
                counters.children_pruned += 1
                continue
            acc_util = _slice_util(new_slices, acc, policy, period_aware)
            if period_aware and acc_util > 1:
                counters.children_pruned += 1
                continue
            new_remaining = tuple(r - d for r, d in zip(parent.remaining_layers, delta))
            created = parent.created + ((acc, delta),)
            created_utils = parent.created_utils + (acc_util,)
            child = PartialDesign(created, created_utils, rest_budget,
                                  new_remaining, acc, acc_util)  # remainder patched below
            if not any(new_remaining):
                # Everything is assigned: the design completes without a
                # trailing idle accelerator, and there is nothing to expand.
                designs.append(_materialize(child, ts, policy))
                counters.designs_emitted += 1
                counters.note_feasible()
                continue
            rem_start = tuple(s + d for s, d in zip(start, delta))
            rem_slices = _task_slices(ts, rem_start, new_remaining)
            counters.create_acc_calls += 1
            remain = create_acc(rem_slices, rest_budget, policy, period_aware)
            if remain is None:
                # No accelerator fits the leftover budget, so no future split
                # can either: unassigned layers make this branch a dead end.
                counters.dead_ends += 1
                continue
            remain_util = _slice_util(rem_slices, remain, policy, period_aware)
            child = PartialDesign(created, created_utils, rest_budget,
                                  new_remaining, remain, remain_util)
            if not period_aware or remain_util <= 1:
                designs.append(_materialize(child, ts, policy, extra=remain))
                counters.designs_emitted += 1
                counters.note_feasible()
            children.append(child)
    return children, designs


def _root_partial(ts: TaskSet, budget: ResourceVector, policy: Policy,
                  counters: SearchCounters, period_aware: bool):
    slices = _task_slices(ts, (0,) * len(ts), ts.layer_counts)
    counters.create_acc_calls += 1
    remain = create_acc(slices, budget, policy, period_aware)
    if remain is None:
        return None
    util = _slice_util(slices, remain, policy, period_aware)
    return PartialDesign((), (), budget, ts.layer_counts, remain, util)


def _run_search(ts: TaskSet, budget: ResourceVector, max_accs: int,
                beam_width, grid: int, policy: Policy,
                period_aware: bool = True, node_budget=None) -> DseResult:
    if max_accs < 2:
        raise ValueError("max_accs must be >= 2")
    if grid < 2:
        raise ValueError("grid must be >= 2")
    if beam_width is not None and beam_width < 1:
        raise ValueError("beam_width must be >= 1 (None for unbounded)")
    counters = SearchCounters()
    feasible = []
    seen = set()

    def collect(designs):
        for d in designs:
            if d.max_util > 1:
                continue
            key = (tuple(a.sort_key() for a in d.accs), d.mapping.counts)
            if key in seen:
                continue
            seen.add(key)
            feasible.append(d)

    root = _root_partial(ts, budget, policy, counters, period_aware)
    if root is None:
        return DseResult([], None, counters)
    if not period_aware or root.remain_util <= 1:
        counters.designs_emitted += 1
        counters.note_feasible()
        collect([_materialize(root, ts, policy, extra=root.remain_acc)])

    parents = [root]
    counters.parents_expanded += 1
    for iteration in range(1, max_accs):
        all_children = []
        for parent in parents:
            children, designs = expand(parent, ts, grid, policy, counters,
                                       period_aware)
            collect(designs)
            all_children.extend(children)
            if node_budget is not None and counters.children_generated > node_budget:
                raise SearchBudgetExceeded(
                    f"exhaustive search exceeded the node budget of {node_budget} "
                    f"children (evaluated {counters.children_generated}); raise "
                    f"node_budget or lower max_accs/grid")
        if iteration == max_accs - 1:
            break
        all_children.sort(key=PartialDesign.sort_key)
        parents = all_children if beam_width is None else all_children[:beam_width]
        counters.kept_per_iteration.append(len(parents))
        if not parents:
            break
        counters.parents_expanded += len(parents)

    best = min(feasible, key=DesignPoint.sort_key) if feasible else None
    return DseResult(feasible, best, counters)


def beam_search(ts: TaskSet, budget: ResourceVector, max_accs: int,
                beam_width: int = 8, grid: int = 4,
                policy: Policy = Policy.FIFO_PIPELINED) -> DseResult:
    """Schedulability-guided beam search over chain designs."""
    return _run_search(ts, budget, max_accs, beam_width, grid, policy)


def brute_force_dse(ts: TaskSet, budget: ResourceVector, max_accs: int,
                    policy: Policy = Policy.FIFO_PIPELINED, grid: int = 4,
                    node_budget: int = 500_000) -> DseResult:
    """Exhaustive oracle: beam search with an unbounded beam and a node budget."""
    return _run_search(ts, budget, max_accs, None, grid, policy,
                       node_budget=node_budget)


def throughput_guided_dse(ts: TaskSet, budget: ResourceVector, max_accs: int,
                          beam_width: int = 8, grid: int = 4,
                          policy: Policy = Policy.FIFO_PIPELINED) -> DseResult:
    """Period-unaware baseline: same walk, every period treated as 1.

    Candidate accelerators and beam ranking are driven by raw WCET cycles, so
    the search balances throughput.  Completed designs are reported with
    their true utilizations, and the returned best is the explored design
    with the lowest true bottleneck utilization.
    """
    return _run_search(ts, budget, max_accs, beam_width, grid, policy,
                       period_aware=False)


def single_accelerator_design(ts: TaskSet, budget: ResourceVector,
                              policy: Policy = Policy.FIFO_PIPELINED):
    """Best single-accelerator design over the whole budget (None if nothing fits)."""
    counters = SearchCounters()
    root = _root_partial(ts, budget, policy, counters, period_aware=True)
    if root is None:
        return None
    return _materialize(root, ts, policy, extra=root.remain_acc)


def children_bound(ts: TaskSet, max_accs: int, beam_width, grid: int) -> int:
    """Closed-form cap on children generated by one bounded-beam run."""
    if beam_width is None:
        raise ValueError("children_bound applies to finite beam widths")
    parents = (max_accs - 2) * beam_width + 1
    per_parent = grid - 1
    for count in ts.layer_counts:
        per_parent *= count + 1
    return parents * per_parent


def parents_bound(max_accs: int, beam_width) -> int:
    """Closed-form cap on parents expanded by one bounded-beam run."""
    if beam_width is None:
        raise ValueError("parents_bound applies to finite beam widths")
    return (max_accs - 2) * beam_width + 1
