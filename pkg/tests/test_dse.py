"""Search-layer tests.

``oracle_best_geometry`` re-enumerates the whole geometry grid independently
and scores it with exact rationals, so ``create_acc`` is checked against a
from-scratch reimplementation rather than against itself.  The golden
two-task fixture freezes the end-to-end search results: a lone accelerator
is overloaded at 41/36 while the two-accelerator split reaches 41/45.
"""

from fractions import Fraction

import pytest

import helpers
from pipesched.dse import (
    SearchBudgetExceeded,
    WorkSlice,
    beam_search,
    brute_force_dse,
    children_bound,
    create_acc,
    parents_bound,
    single_accelerator_design,
    throughput_guided_dse,
)
from pipesched.model import (
    AcceleratorConfig,
    LayerShape,
    Policy,
    ResourceVector,
    TaskSet,
    TaskSpec,
)
from pipesched.schedulability import slice_wcet


# ---------------------------------------------------------------------------
# create_acc against an independent exhaustive enumeration
# ---------------------------------------------------------------------------


def _pow2_range(start, cap):
    v = start
    while v <= cap:
        yield v
        v *= 2


def _pow2_roundup(n):
    v = 1
    while v < n:
        v *= 2
    return v


def oracle_best_geometry(slices, budget, policy, period_aware=True):
    """Minimum-utilization geometry by brute force with Fraction scoring."""
    caps = [1, 1, 1]
    for sl in slices:
        for layer in sl.layers:
            caps[0] = max(caps[0], _pow2_roundup(layer.m_dim))
            caps[1] = max(caps[1], _pow2_roundup(layer.k_dim))
            caps[2] = max(caps[2], _pow2_roundup(layer.n_dim))
    best = None
    for a in _pow2_range(1, budget.pe):
        for b in _pow2_range(1, budget.pe // a):
            for c in _pow2_range(1, budget.pe // (a * b)):
                if a * b + b * c + a * c > budget.onchip_bw:
                    continue
                for x in _pow2_range(a, max(a, caps[0])):
                    for y in _pow2_range(b, max(b, caps[1])):
                        for z in _pow2_range(c, max(c, caps[2])):
                            if 2 * (x * y + y * z + x * z) > budget.mem_words:
                                continue
                            acc = AcceleratorConfig(a, b, c, x, y, z, allocated=budget)
                            util = sum(
                                (
                                    Fraction(
                                        slice_wcet(sl.layers, acc, policy).total,
                                        sl.period if period_aware else 1,
                                    )
                                    for sl in slices
                                ),
                                Fraction(0),
                            )
                            key = (util, (a, b, c, x, y, z))
                            if best is None or key < best:
                                best = key
    return best


@pytest.mark.parametrize("policy", [Policy.FIFO_PIPELINED, Policy.EDF])
def test_create_acc_matches_exhaustive_oracle(policy):
    budget = ResourceVector(8, 512, 16, 4)
    slice_sets = [
        [WorkSlice((LayerShape(16, 16, 16),), 4000)],
        [
            WorkSlice((LayerShape(8, 16, 4), LayerShape(4, 4, 32)), 900),
            WorkSlice((LayerShape(16, 2, 2),), 700),
        ],
        [WorkSlice((LayerShape(5, 7, 9),), 1000), WorkSlice((LayerShape(3, 3, 3),), 250)],
    ]
    for slices in slice_sets:
        want_util, want_geo = oracle_best_geometry(slices, budget, policy)
        acc = create_acc(slices, budget, policy)
        assert acc is not None
        assert acc.geometry == want_geo
        assert acc.allocated == budget
        got_util = sum(
            (Fraction(slice_wcet(s.layers, acc, policy).total, s.period) for s in slices),
            Fraction(0),
        )
        assert got_util == want_util


def test_create_acc_idle_budget_gives_smallest_config():
    acc = create_acc([], ResourceVector(8, 512, 16, 4), Policy.FIFO_PIPELINED)
    assert acc.geometry == (1, 1, 1, 1, 1, 1)


def test_create_acc_rejects_hopeless_budgets():
    assert create_acc([], ResourceVector(0, 512, 16, 4), Policy.FIFO_PIPELINED) is None
    assert create_acc([], ResourceVector(8, 5, 16, 4), Policy.FIFO_PIPELINED) is None
    assert create_acc([], ResourceVector(8, 512, 2, 4), Policy.FIFO_PIPELINED) is None
    assert create_acc([], ResourceVector(8, 512, 16, 0), Policy.FIFO_PIPELINED) is None


def test_create_acc_period_blind_ignores_periods():
    budget = ResourceVector(8, 512, 16, 4)
    slices_a = [WorkSlice((LayerShape(16, 16, 16),), 100),
                WorkSlice((LayerShape(4, 32, 4),), 100000)]
    slices_b = [WorkSlice((LayerShape(16, 16, 16),), 100000),
                WorkSlice((LayerShape(4, 32, 4),), 100)]
    a = create_acc(slices_a, budget, Policy.FIFO_PIPELINED, period_aware=False)
    b = create_acc(slices_b, budget, Policy.FIFO_PIPELINED, period_aware=False)
    assert a.geometry == b.geometry


# ---------------------------------------------------------------------------
# Golden fixture end-to-end results
# ---------------------------------------------------------------------------


def test_single_accelerator_overloaded(golden_ts, golden_budget):
    d = single_accelerator_design(golden_ts, golden_budget)
    assert d.max_util == Fraction(41, 36)
    assert d.accs[0].geometry == (2, 1, 8, 2, 1, 8)
    assert d.accs[0].allocated == golden_budget
    assert d.mapping.counts == ((2,), (2,))


def test_beam_finds_the_two_accelerator_split(golden_ts, golden_budget):
    res = beam_search(golden_ts, golden_budget, max_accs=3, beam_width=8, grid=4)
    best = res.best
    assert best.max_util == Fraction(41, 45)
    assert best.utilizations == (Fraction(4097, 4500), Fraction(41, 45))
    assert [a.geometry for a in best.accs] == [(2, 1, 2, 2, 1, 2), (2, 2, 4, 2, 2, 4)]
    assert [a.allocated.as_tuple() for a in best.accs] == [
        (6, 2048, 8, 4),
        (18, 6144, 24, 12),
    ]
    assert best.mapping.counts == ((0, 2), (1, 1))
    assert len(res.feasible) == 2
    assert res.explored.parents_expanded == 9
    assert res.explored.children_generated == 96


def test_unbounded_beam_equals_brute_force(golden_ts, golden_budget):
    inf = beam_search(golden_ts, golden_budget, max_accs=3, beam_width=None, grid=4)
    bf = brute_force_dse(golden_ts, golden_budget, max_accs=3, grid=4)
    assert inf.best == bf.best
    assert inf.best.max_util == Fraction(41, 45)
    assert len(inf.feasible) == len(bf.feasible) == 2
    assert inf.explored.children_generated == bf.explored.children_generated == 132


def test_wider_beams_never_hurt(golden_ts, golden_budget):
    prev = None
    for width in (1, 2, 4, 8, None):
        res = beam_search(golden_ts, golden_budget, max_accs=3, beam_width=width, grid=4)
        assert res.best is not None
        if prev is not None:
            assert res.best.max_util <= prev
        prev = res.best.max_util


def test_throughput_guided_on_golden(golden_ts, golden_budget):
    res = throughput_guided_dse(golden_ts, golden_budget, max_accs=3, beam_width=8, grid=4)
    assert res.best is not None
    assert res.best.max_util == Fraction(41, 45)
    assert len(res.feasible) == 2
    # every harvested design is genuinely schedulable even though the walk
    # itself ignored periods
    assert all(d.max_util <= 1 for d in res.feasible)


def test_throughput_guided_walk_is_period_blind(golden_budget):
    # The walk explores the same tree whatever the periods are; only the
    # final feasibility filter sees them.  Relaxing one period can therefore
    # only grow the harvested set.
    layer = LayerShape(32, 32, 32)
    fast = TaskSet((TaskSpec(0, (layer, layer), 6000), TaskSpec(1, (layer, layer), 9000)))
    slow = TaskSet((TaskSpec(0, (layer, layer), 60000), TaskSpec(1, (layer, layer), 9000)))
    a = throughput_guided_dse(fast, golden_budget, max_accs=3, beam_width=8, grid=4)
    b = throughput_guided_dse(slow, golden_budget, max_accs=3, beam_width=8, grid=4)
    assert a.explored.children_generated == b.explored.children_generated
    assert a.explored.parents_expanded == b.explored.parents_expanded
    assert a.explored.kept_per_iteration == b.explored.kept_per_iteration

    def structures(res):
        return {(tuple(x.geometry for x in d.accs), d.mapping.counts) for d in res.feasible}

    assert structures(a) <= structures(b)


def test_beam_results_are_valid_designs(golden_ts, golden_budget):
    res = beam_search(golden_ts, golden_budget, max_accs=3, beam_width=8, grid=4)
    for d in res.feasible:
        assert d.max_util <= 1
        assert d.total_allocated().fits_within(golden_budget)
        assert d.policy is Policy.FIFO_PIPELINED


def test_edf_policy_search_carries_surcharge(golden_ts, golden_budget):
    fifo = beam_search(golden_ts, golden_budget, max_accs=3, beam_width=8, grid=4)
    edf = beam_search(
        golden_ts, golden_budget, max_accs=3, beam_width=8, grid=4, policy=Policy.EDF
    )
    assert edf.best is None or edf.best.policy is Policy.EDF
    if edf.best is not None:
        assert edf.best.max_util >= fifo.best.max_util


def test_no_feasible_design_when_periods_too_tight(golden_ts, golden_budget):
    squeezed = golden_ts.scaled_periods(1, 10)
    res = beam_search(squeezed, golden_budget, max_accs=3, beam_width=8, grid=4)
    assert res.best is None
    assert res.feasible == []


def test_brute_force_node_budget_trips():
    ts = helpers.golden_taskset()
    with pytest.raises(SearchBudgetExceeded):
        brute_force_dse(ts, helpers.golden_budget(), max_accs=3, grid=4, node_budget=5)


# ---------------------------------------------------------------------------
# Complexity bounds
# ---------------------------------------------------------------------------


def test_bound_formulas():
    assert parents_bound(3, 8) == 9
    assert parents_bound(2, 8) == 1  # one accelerator: root only
    assert parents_bound(4, 2) == 5
    ts = helpers.golden_taskset()  # layer counts (2, 2)
    assert children_bound(ts, 3, 8, 4) == 9 * 3 * 9


def test_golden_counters_respect_bounds(golden_ts, golden_budget):
    for width in (1, 2, 4, 8):
        res = beam_search(golden_ts, golden_budget, max_accs=3, beam_width=width, grid=4)
        c = res.explored
        assert c.parents_expanded <= parents_bound(3, width)
        assert c.children_generated <= children_bound(golden_ts, 3, width, 4)
        assert c.kept_per_iteration and max(c.kept_per_iteration) <= width
