"""Shared builders for the test suite.

Everything here is deterministic: every generator takes an explicit seed and
uses its own ``random.Random`` instance, so the corpora used by the
acceptance tests are reproducible byte for byte.
"""

import random
from fractions import Fraction

from pipesched.model import (
    AcceleratorConfig,
    LayerShape,
    Mapping,
    Policy,
    ResourceVector,
    TaskSet,
    TaskSpec,
)
from pipesched.schedulability import make_design_point, utilization_profile


# ---------------------------------------------------------------------------
# Hand-built fixtures
# ---------------------------------------------------------------------------


def golden_budget() -> ResourceVector:
    return ResourceVector(pe=24, mem_words=8192, onchip_bw=32, ddr_bw=16)


def golden_taskset() -> TaskSet:
    """Two identical-shape tasks whose periods make a single accelerator
    overloaded (41/36) while a two-accelerator split fits (41/45)."""
    layer = LayerShape(32, 32, 32)
    return TaskSet(
        (
            TaskSpec(0, (layer, layer), 6000),
            TaskSpec(1, (layer, layer), 9000),
        )
    )


def blocking_fixture():
    """One shared accelerator, a short-period small task and a long-period
    bulky task.  Under FIFO the small task can sit behind a ~30k-cycle job;
    under EDF it preempts and finishes about 28x faster."""
    acc = AcceleratorConfig(
        pe_a=2,
        pe_b=2,
        pe_c=2,
        tile_x=16,
        tile_y=16,
        tile_z=16,
        allocated=ResourceVector(8, 1536, 12, 8),
    )
    ts = TaskSet(
        (
            TaskSpec(0, (LayerShape(16, 16, 16),), 4000),
            TaskSpec(1, (LayerShape(64, 64, 64),), 80000),
        )
    )
    mapping = Mapping(((1,), (1,)))
    design = make_design_point((acc,), mapping, Policy.EDF, ts)
    return design, ts


def sweep_demo_budget() -> ResourceVector:
    return ResourceVector(pe=256, mem_words=16000, onchip_bw=512, ddr_bw=8)


def sweep_demo_template() -> TaskSet:
    """A tall-matrix task and a wide-matrix task that want opposite
    accelerator geometries.  Periods are placeholders; sweeps derive the
    real ones from isolated latencies."""
    tall = LayerShape(1024, 32, 8)
    wide = LayerShape(8, 32, 512)
    return TaskSet(
        (
            TaskSpec(0, (tall, tall, tall), 10**6),
            TaskSpec(1, (wide, wide), 10**6),
        )
    )


# ---------------------------------------------------------------------------
# Random design/workload generator
# ---------------------------------------------------------------------------

_ARRAY_DIMS = (1, 2)
_TILE_MULTS = (1, 2, 4)
_DDR_SHARES = (2, 4, 8)
_LAYER_DIMS = (2, 4, 8)


def random_pipeline(rng: random.Random, policy: Policy = Policy.FIFO_PIPELINED):
    """One random pipelined design: 2-4 accelerators, 2-4 tasks with 1-3
    layers each, and a random contiguous mapping.  Allocations are exactly
    the resource cost of each accelerator, so the design is always valid."""
    num_accs = rng.randint(2, 4)
    num_tasks = rng.randint(2, 4)

    accs = []
    for _ in range(num_accs):
        a = rng.choice(_ARRAY_DIMS)
        b = rng.choice(_ARRAY_DIMS)
        c = rng.choice(_ARRAY_DIMS)
        x = a * rng.choice(_TILE_MULTS)
        y = b * rng.choice(_TILE_MULTS)
        z = c * rng.choice(_TILE_MULTS)
        ddr = rng.choice(_DDR_SHARES)
        alloc = ResourceVector(
            pe=a * b * c,
            mem_words=2 * (x * y + y * z + x * z),
            onchip_bw=a * b + b * c + a * c,
            ddr_bw=ddr,
        )
        accs.append(AcceleratorConfig(a, b, c, x, y, z, allocated=alloc))

    base = rng.randint(40, 120)
    tasks = []
    for i in range(num_tasks):
        layers = tuple(
            LayerShape(
                rng.choice(_LAYER_DIMS), rng.choice(_LAYER_DIMS), rng.choice(_LAYER_DIMS)
            )
            for _ in range(rng.randint(1, 3))
        )
        tasks.append(TaskSpec(i, layers, base * rng.randint(1, 3)))
    ts = TaskSet(tuple(tasks))

    rows = []
    for t in ts:
        counts = [0] * num_accs
        for _ in range(t.num_layers):
            counts[rng.randrange(num_accs)] += 1
        rows.append(tuple(counts))
    design = make_design_point(tuple(accs), Mapping(tuple(rows)), policy, ts)
    return design, ts


def rescale_to_band(design, ts, target: Fraction, lo: Fraction, hi: Fraction):
    """Rescale all periods by one rational factor so the max per-accelerator
    utilization lands near ``target``; return the redone (design, taskset) or
    None when rounding pushed it outside [lo, hi]."""
    util = utilization_profile(design, ts).max_util
    if util == 0:
        return None
    factor = util / target  # periods scale by util/target => util moves to target
    ts2 = ts.scaled_periods(factor.numerator, factor.denominator)
    design2 = make_design_point(design.accs, design.mapping, design.policy, ts2)
    util2 = utilization_profile(design2, ts2).max_util
    if lo <= util2 <= hi:
        return design2, ts2
    return None


def build_corpus(seed, count, target, lo, hi, policy=Policy.FIFO_PIPELINED):
    """``count`` random designs rescaled so max utilization sits in [lo, hi]."""
    rng = random.Random(seed)
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 50 * count:
            raise RuntimeError("corpus generator failed to hit the target band")
        design, ts = random_pipeline(rng, policy)
        scaled = rescale_to_band(design, ts, target, lo, hi)
        if scaled is not None:
            out.append(scaled)
    return out


def feasible_corpus(seed, count, policy=Policy.FIFO_PIPELINED):
    """Designs with every per-accelerator utilization in (0, 0.95]."""
    return build_corpus(seed, count, Fraction(17, 20), Fraction(3, 10), Fraction(19, 20), policy)


def overload_corpus(seed, count, policy=Policy.FIFO_PIPELINED):
    """Designs where the hottest accelerator is clearly past capacity."""
    return build_corpus(seed, count, Fraction(9, 5), Fraction(13, 10), Fraction(5, 2), policy)


# ---------------------------------------------------------------------------
# Small instances for exhaustive-search comparisons
# ---------------------------------------------------------------------------


def small_instances(count, seed=20260817):
    """2-task instances small enough to brute force: <=3 layers per task,
    modest budgets, and periods rescaled so the single-accelerator design's
    utilization lands at 0.6/0.85/1.1/1.4 (mix of roomy, tight, and
    single-acc-infeasible cases)."""
    from pipesched.dse import single_accelerator_design

    rng = random.Random(seed)
    shapes = (4, 8, 16, 32)
    out = []
    while len(out) < count:
        layers = []
        for task_id in range(2):
            layers.append(
                tuple(
                    LayerShape(rng.choice(shapes), rng.choice(shapes), rng.choice(shapes))
                    for _ in range(rng.randint(1, 3))
                )
            )
        template = TaskSet(
            (TaskSpec(0, layers[0], 10**9), TaskSpec(1, layers[1], 10**9))
        )
        budget = ResourceVector(
            pe=rng.choice((8, 16, 24)),
            mem_words=rng.choice((2048, 4096, 8192)),
            onchip_bw=rng.choice((16, 32)),
            ddr_bw=rng.choice((4, 8, 16)),
        )
        single = single_accelerator_design(template, budget)
        if single is None:
            continue
        util = single.max_util
        if util == 0:
            continue
        target = Fraction(rng.choice((60, 85, 110, 140)), 100)
        factor = util / target
        ts = template.scaled_periods(factor.numerator, factor.denominator)
        grid = rng.choice((3, 4))
        max_m = rng.choice((2, 3))
        out.append((ts, budget, grid, max_m))
    return out
