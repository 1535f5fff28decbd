"""Analytic schedulability tests.

All utilizations are exact rationals, so every comparison is an equality.
The 608-cycle numbers trace back to the 2x2x2/16^3 accelerator: one 16^3
layer costs 512 compute + 64 load + 32 store = 608, which is also the
context-switch bound (finish a tile + save + reload).
"""

from fractions import Fraction

import pytest

from pipesched.model import (
    AcceleratorConfig,
    LayerShape,
    Mapping,
    ModelError,
    Policy,
    ResourceVector,
    TaskSet,
    TaskSpec,
)
from pipesched.schedulability import (
    Confidence,
    UtilizationProfile,
    accelerator_utilization,
    make_design_point,
    max_utilization,
    schedulability_verdict,
    segment_wcet,
    slice_wcet,
    srt_schedulable,
    utilization_profile,
)

import helpers


def acc_2x16():
    return AcceleratorConfig(2, 2, 2, 16, 16, 16, allocated=ResourceVector(8, 1536, 12, 8))


def small_task():
    return TaskSpec(0, (LayerShape(16, 16, 16),), 4000)


# ---------------------------------------------------------------------------
# Segment WCET
# ---------------------------------------------------------------------------


def test_slice_wcet_fifo_has_no_switch_cost():
    w = slice_wcet((LayerShape(16, 16, 16),), acc_2x16(), Policy.FIFO_PIPELINED)
    assert (w.base, w.overhead, w.total) == (608, 0, 608)


def test_slice_wcet_edf_adds_one_switch_bound():
    w = slice_wcet((LayerShape(16, 16, 16),), acc_2x16(), Policy.EDF)
    assert (w.base, w.overhead, w.total) == (608, 608, 1216)


def test_slice_wcet_empty_is_zero_even_under_edf():
    w = slice_wcet((), acc_2x16(), Policy.EDF)
    assert (w.base, w.overhead, w.total) == (0, 0, 0)


def test_slice_wcet_sums_layers_with_single_surcharge():
    layers = (LayerShape(16, 16, 16), LayerShape(64, 64, 64))
    w = slice_wcet(layers, acc_2x16(), Policy.EDF)
    assert w.base == 608 + 32864
    assert w.overhead == 608  # one switch bound per job visit, not per layer


def test_segment_wcet_uses_layer_range():
    task = TaskSpec(0, (LayerShape(16, 16, 16), LayerShape(64, 64, 64)), 10**6)
    w = segment_wcet(task, (1, 2), acc_2x16(), Policy.FIFO_PIPELINED)
    assert w.total == 32864
    assert segment_wcet(task, (0, 0), acc_2x16(), Policy.EDF).total == 0


def test_fifo_wcet_never_exceeds_edf_wcet():
    layers = (LayerShape(8, 16, 32), LayerShape(16, 16, 16))
    fifo = slice_wcet(layers, acc_2x16(), Policy.FIFO_PIPELINED)
    edf = slice_wcet(layers, acc_2x16(), Policy.EDF)
    assert fifo.base == edf.base
    assert fifo.total <= edf.total


# ---------------------------------------------------------------------------
# Utilization
# ---------------------------------------------------------------------------


def test_blocking_fixture_utilization_edf():
    design, ts = helpers.blocking_fixture()
    prof = utilization_profile(design, ts)
    # (608+608)/4000 + (32864+608)/80000 = 903/1250 = 0.7224
    assert prof.per_acc == (Fraction(903, 1250),)
    assert prof.max_util == Fraction(903, 1250)


def test_blocking_fixture_utilization_fifo():
    design, ts = helpers.blocking_fixture()
    fifo = make_design_point(design.accs, design.mapping, Policy.FIFO_PIPELINED, ts)
    # 608/4000 + 32864/80000 = 1407/2500 = 0.5628
    assert utilization_profile(fifo, ts).per_acc == (Fraction(1407, 2500),)


def test_accelerator_utilization_is_exact_rational():
    ts = TaskSet((small_task(), TaskSpec(1, (LayerShape(16, 16, 16),), 3000)))
    u = accelerator_utilization(ts, Mapping(((1,), (1,))), 0, acc_2x16(), Policy.FIFO_PIPELINED)
    assert u == Fraction(608, 4000) + Fraction(608, 3000)
    assert isinstance(u, Fraction)


def test_utilization_scales_inversely_with_periods():
    design, ts = helpers.blocking_fixture()
    for s in (2, 3, 7):
        scaled = ts.scaled_periods(s, 1)
        u0 = utilization_profile(design, ts).per_acc
        u1 = utilization_profile(design, scaled).per_acc
        assert all(b == a / s for a, b in zip(u0, u1))


def test_bypassed_accelerator_has_zero_utilization():
    ts = TaskSet((small_task(),))
    accs = (acc_2x16(), acc_2x16())
    prof = utilization_profile(
        make_design_point(accs, Mapping(((1, 0),)), Policy.FIFO_PIPELINED, ts), ts
    )
    assert prof.per_acc == (Fraction(608, 4000), Fraction(0))


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


def test_srt_boundary_is_inclusive():
    assert srt_schedulable(UtilizationProfile((Fraction(1),)))
    assert not srt_schedulable(UtilizationProfile((Fraction(10**9 + 1, 10**9),)))


def test_verdict_confidence_by_policy():
    design, ts = helpers.blocking_fixture()
    v = schedulability_verdict(design, ts)
    assert v.schedulable and v.confidence is Confidence.VERIFY_BY_SIMULATION
    fifo = make_design_point(design.accs, design.mapping, Policy.FIFO_PIPELINED, ts)
    v2 = schedulability_verdict(fifo, ts)
    assert v2.schedulable and v2.confidence is Confidence.EXACT
    assert v.max_util == Fraction(903, 1250)


def test_verdict_flags_overload():
    design, ts = helpers.blocking_fixture()
    squeezed = ts.scaled_periods(1, 2)
    d2 = make_design_point(design.accs, design.mapping, Policy.EDF, squeezed)
    v = schedulability_verdict(d2, squeezed)
    assert not v.schedulable and v.max_util > 1


def test_max_utilization_matches_profile():
    design, ts = helpers.blocking_fixture()
    assert max_utilization(design, ts) == utilization_profile(design, ts).max_util


# ---------------------------------------------------------------------------
# make_design_point
# ---------------------------------------------------------------------------


def test_make_design_point_fills_utilizations():
    ts = TaskSet((small_task(),))
    d = make_design_point((acc_2x16(),), Mapping(((1,),)), Policy.FIFO_PIPELINED, ts)
    assert d.utilizations == (Fraction(608, 4000),)
    assert d.max_util == Fraction(19, 125)


def test_make_design_point_rejects_bad_mapping():
    ts = TaskSet((small_task(),))
    with pytest.raises(ModelError):
        make_design_point((acc_2x16(),), Mapping(((2,),)), Policy.FIFO_PIPELINED, ts)
