"""Analytic latency and resource model for tiled matrix-multiply accelerators.

An accelerator is a 3-D array of processing elements (``pe_a * pe_b * pe_c``)
that consumes on-chip tiles of size ``tile_x * tile_y * tile_z`` taken along
the M/K/N dimensions of a matmul.  With double buffering, transfers overlap
compute in steady state, so the cost of one layer collapses to closed-form
tile arithmetic:

    e_tile  = (X/A) * (Y/B) * (Z/C)          cycles to compute one tile
    e_load  = ceil((X*Y + Y*Z) / r4)         refill the input/weight buffers
    e_store = ceil((X*Z) / r4)               drain one output tile
    latency = TM*TK*TN * max(e_tile, e_load) + e_load + e_store

where ``TM = ceil(M/X)``, ``TK = ceil(K/Y)``, ``TN = ceil(N/Z)`` and ``r4``
is the accelerator's share of DRAM bandwidth in words per cycle.  The fill is
paid once up front, the drain once at the end, and every one of the
``TM*TK*TN`` tile steps costs whichever of compute or reload is the
bottleneck.

All times are integer cycles.  Wall-clock units only appear at the reporting
boundary (a config carries a clock frequency for printing milliseconds).
"""

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache


class ModelError(ValueError):
    """Raised for structurally invalid model inputs (e.g. zero DRAM share)."""


class Policy(Enum):
    """Per-accelerator dispatch policy.

    Design points are built for FIFO_PIPELINED or EDF.  The two polling
    variants are simulation-only baselines for mappings that revisit an
    accelerator (non-pipelined layer assignments).
    """

    FIFO_PIPELINED = "fifo"
    EDF = "edf"
    FIFO_NO_POLLING = "fifo_no_polling"
    FIFO_POLLING = "fifo_polling"


#: Policies a DesignPoint may be constructed for.
DESIGN_POLICIES = (Policy.FIFO_PIPELINED, Policy.EDF)


class ReleaseModel(Enum):
    PERIODIC = "periodic"
    SPORADIC = "sporadic"


def ceil_div(a: int, b: int) -> int:
    """Integer ceiling division for non-negative a and positive b."""
    return -(-a // b)


@dataclass(frozen=True)
class LayerShape:
    """One matmul layer: an (M x K) by (K x N) product."""

    m_dim: int
    k_dim: int
    n_dim: int

    def __post_init__(self):
        if min(self.m_dim, self.k_dim, self.n_dim) < 1:
            raise ModelError(f"layer dimensions must be >= 1, got {self}")


@dataclass(frozen=True)
class TaskSpec:
    """A periodic/sporadic stream of jobs, each running a fixed layer chain."""

    task_id: int
    layers: tuple
    period: int
    release_model: ReleaseModel = ReleaseModel.PERIODIC

    def __post_init__(self):
        if not self.layers:
            raise ModelError(f"task {self.task_id} has no layers")
        if self.period < 1:
            raise ModelError(f"task {self.task_id} period must be >= 1 cycle")
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class TaskSet:
    """An ordered collection of tasks with dense ids 0..n-1."""

    tasks: tuple

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ModelError("task set is empty")
        for i, t in enumerate(self.tasks):
            if t.task_id != i:
                raise ModelError(f"task ids must be dense 0..n-1, got {t.task_id} at {i}")

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i: int):
        return self.tasks[i]

    @property
    def layer_counts(self) -> tuple:
        return tuple(t.num_layers for t in self.tasks)

    @property
    def max_period(self) -> int:
        return max(t.period for t in self.tasks)

    def scaled_periods(self, num: int, den: int) -> "TaskSet":
        """Return a copy with every period multiplied by num/den (rounded up, >= 1)."""
        tasks = tuple(
            TaskSpec(t.task_id, t.layers, max(1, ceil_div(t.period * num, den)), t.release_model)
            for t in self.tasks
        )
        return TaskSet(tasks)


@dataclass(frozen=True)
class ResourceVector:
    """A bundle of the four partitionable platform resources."""

    pe: int
    mem_words: int
    onchip_bw: int
    ddr_bw: int

    def __post_init__(self):
        if min(self.pe, self.mem_words, self.onchip_bw, self.ddr_bw) < 0:
            raise ModelError(f"resource components must be >= 0, got {self}")

    def as_tuple(self) -> tuple:
        return (self.pe, self.mem_words, self.onchip_bw, self.ddr_bw)

    def fits_within(self, other: "ResourceVector") -> bool:
        return all(a <= b for a, b in zip(self.as_tuple(), other.as_tuple()))

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector(*(a - b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def scale_floor(self, num: int, den: int) -> "ResourceVector":
        """Component-wise floor of (num/den) of this vector."""
        return ResourceVector(*((c * num) // den for c in self.as_tuple()))


@dataclass(frozen=True)
class TileCosts:
    """Per-tile cycle costs of one accelerator configuration."""

    e_tile: int
    e_load: int
    e_store: int

    @property
    def tile_cycles(self) -> int:
        """Duration of one steady-state tile step (compute/reload bottleneck)."""
        return max(self.e_tile, self.e_load)

    @property
    def preemption_bound(self) -> int:
        """Worst extra cycles one preemption can cost: finish a tile, save, restore."""
        return self.e_tile + self.e_store + self.e_load


@dataclass(frozen=True)
class AcceleratorConfig:
    """A concrete PE-array geometry plus the resource share that backs it.

    Tiles must be whole multiples of the array dims so a tile maps onto the
    array without remainder, and the configuration must fit inside its
    allocated share.
    """

    pe_a: int
    pe_b: int
    pe_c: int
    tile_x: int
    tile_y: int
    tile_z: int
    allocated: ResourceVector

    def __post_init__(self):
        dims = (self.pe_a, self.pe_b, self.pe_c, self.tile_x, self.tile_y, self.tile_z)
        if min(dims) < 1:
            raise ModelError(f"array/tile dimensions must be >= 1, got {dims}")
        for tile, pe, name in (
            (self.tile_x, self.pe_a, "tile_x/pe_a"),
            (self.tile_y, self.pe_b, "tile_y/pe_b"),
            (self.tile_z, self.pe_c, "tile_z/pe_c"),
        ):
            if tile % pe != 0:
                raise ModelError(f"{name}: tile {tile} is not a multiple of array dim {pe}")
        if self.allocated.ddr_bw < 1:
            raise ModelError("accelerator needs a nonzero DRAM bandwidth share")
        cost = resource_cost(self)
        if not cost.fits_within(self.allocated):
            raise ModelError(
                f"configuration cost {cost.as_tuple()} exceeds allocation "
                f"{self.allocated.as_tuple()}"
            )

    @property
    def geometry(self) -> tuple:
        return (self.pe_a, self.pe_b, self.pe_c, self.tile_x, self.tile_y, self.tile_z)

    def sort_key(self) -> tuple:
        return self.geometry + self.allocated.as_tuple()


@lru_cache(maxsize=None)
def _tile_costs(a: int, b: int, c: int, x: int, y: int, z: int, r4: int) -> TileCosts:
    e_tile = (x // a) * (y // b) * (z // c)
    e_load = ceil_div(x * y + y * z, r4)
    e_store = ceil_div(x * z, r4)
    return TileCosts(e_tile, e_load, e_store)


def tile_costs(acc: AcceleratorConfig) -> TileCosts:
    """Per-tile compute/fill/drain costs of one accelerator."""
    if acc.allocated.ddr_bw < 1:
        raise ModelError("zero DRAM bandwidth share")
    return _tile_costs(acc.pe_a, acc.pe_b, acc.pe_c,
                       acc.tile_x, acc.tile_y, acc.tile_z, acc.allocated.ddr_bw)


@lru_cache(maxsize=None)
def _layer_cycles(m: int, k: int, n: int,
                  a: int, b: int, c: int, x: int, y: int, z: int, r4: int) -> int:
    costs = _tile_costs(a, b, c, x, y, z, r4)
    steps = ceil_div(m, x) * ceil_div(k, y) * ceil_div(n, z)
    return steps * costs.tile_cycles + costs.e_load + costs.e_store


def layer_latency(layer: LayerShape, acc: AcceleratorConfig) -> int:
    """Cycles to run one layer on one accelerator, uncontended."""
    return _layer_cycles(layer.m_dim, layer.k_dim, layer.n_dim,
                         acc.pe_a, acc.pe_b, acc.pe_c,
                         acc.tile_x, acc.tile_y, acc.tile_z, acc.allocated.ddr_bw)


def resource_cost(acc: AcceleratorConfig) -> ResourceVector:
    """Platform resources consumed by a configuration.

    PEs for the array, double-buffered words for the three tile buffers,
    on-chip bandwidth for the three data faces of the array, and the DRAM
    share it was given (DRAM is partitioned, not derived).
    """
    pe = acc.pe_a * acc.pe_b * acc.pe_c
    mem = 2 * (acc.tile_x * acc.tile_y + acc.tile_y * acc.tile_z + acc.tile_x * acc.tile_z)
    bw = acc.pe_a * acc.pe_b + acc.pe_b * acc.pe_c + acc.pe_a * acc.pe_c
    return ResourceVector(pe, mem, bw, acc.allocated.ddr_bw)


@dataclass(frozen=True)
class Mapping:
    """Per-task contiguous layer counts across an ordered accelerator chain.

    ``counts[i][k]`` is how many consecutive layers of task i run on
    accelerator k; each row must sum to the task's layer count.  Zero entries
    mean the task bypasses that accelerator.
    """

    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(tuple(row) for row in self.counts))

    @property
    def num_tasks(self) -> int:
        return len(self.counts)

    @property
    def num_accs(self) -> int:
        return len(self.counts[0]) if self.counts else 0

    def layer_range(self, task: int, acc: int) -> tuple:
        """Half-open [start, stop) layer indices of task's slice on acc."""
        row = self.counts[task]
        start = sum(row[:acc])
        return (start, start + row[acc])


@dataclass(frozen=True)
class MappingViolation:
    """One structural defect found in a mapping."""

    task_id: int
    acc_index: int  # -1 when the violation is not tied to one accelerator
    message: str


def validate_mapping(ts: TaskSet, mapping: Mapping, num_accs: int) -> list:
    """Check a mapping against a task set; returns [] when well-formed."""
    violations = []
    if mapping.num_tasks != len(ts):
        violations.append(MappingViolation(
            -1, -1, f"mapping has {mapping.num_tasks} rows for {len(ts)} tasks"))
        return violations
    for i, task in enumerate(ts):
        row = mapping.counts[i]
        if len(row) != num_accs:
            violations.append(MappingViolation(
                i, -1, f"task {i} row has {len(row)} entries for {num_accs} accelerators"))
            continue
        for k, cnt in enumerate(row):
            if cnt < 0:
                violations.append(MappingViolation(
                    i, k, f"task {i} has negative count {cnt} on accelerator {k}"))
        if sum(row) != task.num_layers:
            violations.append(MappingViolation(
                i, -1,
                f"task {i} maps {sum(row)} layers but has {task.num_layers}"))
    return violations


def require_valid_mapping(ts: TaskSet, mapping: Mapping, num_accs: int) -> None:
    problems = validate_mapping(ts, mapping, num_accs)
    if problems:
        raise ModelError("; ".join(v.message for v in problems))


@dataclass(frozen=True)
class DesignPoint:
    """A complete system design: accelerator chain, mapping, policy, utilizations.

    ``utilizations[k]`` is the exact rational utilization of accelerator k for
    the task set the design was built against (overhead-inflated under EDF).
    """

    accs: tuple
    mapping: Mapping
    policy: Policy
    utilizations: tuple

    def __post_init__(self):
        object.__setattr__(self, "accs", tuple(self.accs))
        object.__setattr__(self, "utilizations", tuple(self.utilizations))
        if self.policy not in DESIGN_POLICIES:
            raise ModelError(f"design policy must be one of {DESIGN_POLICIES}")
        if not self.accs:
            raise ModelError("design has no accelerators")
        if len(self.utilizations) != len(self.accs):
            raise ModelError("one utilization per accelerator required")
        if self.mapping.num_accs != len(self.accs):
            raise ModelError("mapping width does not match accelerator count")

    @property
    def num_accs(self) -> int:
        return len(self.accs)

    @property
    def max_util(self) -> Fraction:
        return max(self.utilizations)

    def total_allocated(self) -> ResourceVector:
        total = ResourceVector(0, 0, 0, 0)
        for acc in self.accs:
            total = total + acc.allocated
        return total

    def sort_key(self) -> tuple:
        """Deterministic tie-break order: utilization, then size, then geometry."""
        return (self.max_util, self.num_accs,
                tuple(a.sort_key() for a in self.accs), self.mapping.counts)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy.value,
            "accelerators": [
                {
                    "pe": [a.pe_a, a.pe_b, a.pe_c],
                    "tile": [a.tile_x, a.tile_y, a.tile_z],
                    "allocated": {
                        "pe": a.allocated.pe,
                        "mem_words": a.allocated.mem_words,
                        "onchip_bw": a.allocated.onchip_bw,
                        "ddr_bw": a.allocated.ddr_bw,
                    },
                }
                for a in self.accs
            ],
            "mapping": [list(row) for row in self.mapping.counts],
            "utilizations": [f"{u.numerator}/{u.denominator}" for u in self.utilizations],
        }
