"""Utilization-based schedulability analysis for pipelined accelerator chains.

Each task contributes one worst-case execution segment per accelerator it is
mapped to.  Accelerator k is sustainable when the exact rational utilization

    u_k = sum_i e_i_k / p_i

does not exceed 1, and a design is accepted when every accelerator passes.
Under FIFO this bound is tight for bounded response times; under EDF the
segment WCETs are first inflated by a per-job preemption surcharge (finish
one tile, save partials, restore them later), so the same test is a
conservative screen whose verdict should be confirmed by simulation.

All utilizations are ``fractions.Fraction`` — no floating point is involved,
so boundary cases like u == 1 are decided exactly.
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .model import (
    AcceleratorConfig,
    DesignPoint,
    Mapping,
    ModelError,
    Policy,
    TaskSet,
    TaskSpec,
    layer_latency,
    require_valid_mapping,
    tile_costs,
)


@dataclass(frozen=True)
class SegmentWcet:
    """Worst-case cycles of one task's slice on one accelerator."""

    base: int
    overhead: int

    @property
    def total(self) -> int:
        return self.base + self.overhead


@dataclass(frozen=True)
class UtilizationProfile:
    """Per-accelerator utilizations of one design under one policy."""

    per_acc: tuple

    def __post_init__(self):
        object.__setattr__(self, "per_acc", tuple(self.per_acc))
        if not self.per_acc:
            raise ModelError("utilization profile needs at least one accelerator")

    @property
    def max_util(self) -> Fraction:
        return max(self.per_acc)


class Confidence(Enum):
    """How much the utilization verdict can be trusted for the policy."""

    EXACT = "exact"
    VERIFY_BY_SIMULATION = "verify_by_simulation"


@dataclass(frozen=True)
class SchedVerdict:
    schedulable: bool
    confidence: Confidence
    max_util: Fraction


def slice_wcet(layers, acc: AcceleratorConfig, policy: Policy) -> SegmentWcet:
    """WCET of a run of layers on one accelerator under a policy.

    Empty slices cost nothing — a job that skips an accelerator can neither
    execute nor preempt there, so it also pays no preemption surcharge.
    """
    base = sum(layer_latency(layer, acc) for layer in layers)
    overhead = 0
    if policy is Policy.EDF and base > 0:
        overhead = tile_costs(acc).preemption_bound
    return SegmentWcet(base, overhead)


def segment_wcet(task: TaskSpec, layer_range: tuple,
                 acc: AcceleratorConfig, policy: Policy) -> SegmentWcet:
    """WCET of task's layers [start, stop) on one accelerator."""
    start, stop = layer_range
    if not (0 <= start <= stop <= task.num_layers):
        raise ModelError(
            f"layer range {layer_range} out of bounds for task {task.task_id} "
            f"with {task.num_layers} layers")
    return slice_wcet(task.layers[start:stop], acc, policy)


def accelerator_utilization(ts: TaskSet, mapping: Mapping, k: int,
                            acc: AcceleratorConfig, policy: Policy) -> Fraction:
    """Exact utilization sum_i e_i_k / p_i of accelerator k."""
    total = Fraction(0)
    for task in ts:
        wcet = segment_wcet(task, mapping.layer_range(task.task_id, k), acc, policy)
        total += Fraction(wcet.total, task.period)
    return total


def utilization_profile(design: DesignPoint, ts: TaskSet) -> UtilizationProfile:
    """Recompute the per-accelerator utilizations of a design from scratch."""
    require_valid_mapping(ts, design.mapping, design.num_accs)
    return UtilizationProfile(tuple(
        accelerator_utilization(ts, design.mapping, k, acc, design.policy)
        for k, acc in enumerate(design.accs)
    ))


def srt_schedulable(profile: UtilizationProfile) -> bool:
    """True iff every accelerator's utilization is at most one (boundary included)."""
    return all(u <= 1 for u in profile.per_acc)


def max_utilization(design: DesignPoint, ts: TaskSet) -> Fraction:
    return utilization_profile(design, ts).max_util


def schedulability_verdict(design: DesignPoint, ts: TaskSet) -> SchedVerdict:
    """Utilization test plus a policy-dependent confidence tag.

    FIFO verdicts are exact for bounded response times; EDF verdicts rest on
    conservatively inflated WCETs and should be confirmed by simulation.
    """
    profile = utilization_profile(design, ts)
    confidence = (Confidence.EXACT if design.policy is Policy.FIFO_PIPELINED
                  else Confidence.VERIFY_BY_SIMULATION)
    return SchedVerdict(srt_schedulable(profile), confidence, profile.max_util)


def make_design_point(accs, mapping: Mapping, policy: Policy, ts: TaskSet) -> DesignPoint:
    """Build a DesignPoint with freshly computed utilizations."""
    accs = tuple(accs)
    require_valid_mapping(ts, mapping, len(accs))
    utils = tuple(
        accelerator_utilization(ts, mapping, k, acc, policy)
        for k, acc in enumerate(accs)
    )
    return DesignPoint(accs, mapping, policy, utils)
