"""Experiment configuration: YAML parsing with line-anchored diagnostics.

A config file describes the platform budget, the task set, and the knobs of
the search / simulation / sweep harnesses.  Parsing is strict: unknown keys
are errors (typos never pass silently), every value is type- and
range-checked, and each diagnostic carries the config path (``taskset[0]
.period_us``) and the source line it points at.  ``parse_config`` raises a
``ConfigError`` whose ``diagnostics`` list all problems found, not just the
first.

Periods may be given either directly in cycles or in microseconds together
with a platform clock; the microsecond form must land on a whole number of
cycles (checked with exact decimal arithmetic, no float rounding).

The module also reads and writes design files — the structured form of a
``DesignPoint`` emitted by the search — so a found design can be fed back
into the simulator.
"""

from dataclasses import dataclass, field
from difflib import get_close_matches
from fractions import Fraction

import yaml

from .model import (
    AcceleratorConfig,
    DesignPoint,
    LayerShape,
    Mapping,
    ModelError,
    Policy,
    ReleaseModel,
    ResourceVector,
    TaskSet,
    TaskSpec,
)
from .schedulability import make_design_point

#: Policy names accepted in configs and on the command line.
POLICY_BY_NAME = {
    "fifo": Policy.FIFO_PIPELINED,
    "edf": Policy.EDF,
}

RELEASE_BY_NAME = {
    "periodic": ReleaseModel.PERIODIC,
    "sporadic": ReleaseModel.SPORADIC,
}

SWEEP_METHOD_NAMES = ("beam", "throughput", "single")


@dataclass(frozen=True)
class Diagnostic:
    """One problem found in a config, anchored to a path and source line."""

    path: str
    line: object  # int | None
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        at = f"{self.path}: " if self.path else ""
        return f"{where}{at}{self.message}"


class ConfigError(ValueError):
    """Carries every diagnostic produced while parsing one config."""

    def __init__(self, diagnostics):
        self.diagnostics = tuple(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# --------------------------------------------------------------------------
# Config dataclasses


@dataclass(frozen=True)
class PlatformConfig:
    pe: int
    mem_words: int
    onchip_bw: int
    ddr_bw: int
    clock_mhz: object = None  # number | None; only needed for period_us

    def budget(self) -> ResourceVector:
        return ResourceVector(self.pe, self.mem_words, self.onchip_bw, self.ddr_bw)


@dataclass(frozen=True)
class TaskConfig:
    layers: tuple            # LayerShape per layer
    period_cycles: int
    release: ReleaseModel = ReleaseModel.PERIODIC


@dataclass(frozen=True)
class DseConfig:
    max_m: int = 3
    beam_width: object = 8   # int | None (None = unbounded beam)
    grid: int = 4
    policy: Policy = Policy.FIFO_PIPELINED
    node_budget: int = 500_000


@dataclass(frozen=True)
class SimConfig:
    horizon_mult: int = 128
    seeds: tuple = (0,)


@dataclass(frozen=True)
class SweepConfig:
    points: int = 7
    lo: float = 0.25
    hi: float = 4.0
    axes: object = None      # None | one ratio tuple per task
    methods: tuple = SWEEP_METHOD_NAMES

    def resolve_axes(self, num_tasks: int) -> tuple:
        """Explicit axes when given, else the default log-spaced axis per task."""
        if self.axes is not None:
            return tuple(tuple(a) for a in self.axes)
        from .analysis import default_ratio_axis
        axis = default_ratio_axis(self.points, self.lo, self.hi)
        return tuple(axis for _ in range(num_tasks))


@dataclass(frozen=True)
class ExperimentConfig:
    platform: PlatformConfig
    tasks: tuple
    dse: DseConfig = field(default_factory=DseConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: str = "out"

    def budget(self) -> ResourceVector:
        return self.platform.budget()

    def taskset(self) -> TaskSet:
        return TaskSet(tuple(
            TaskSpec(i, t.layers, t.period_cycles, t.release)
            for i, t in enumerate(self.tasks)))

    def to_dict(self) -> dict:
        out = {
            "platform": {
                "pe": self.platform.pe,
                "mem_words": self.platform.mem_words,
                "onchip_bw": self.platform.onchip_bw,
                "ddr_bw": self.platform.ddr_bw,
            },
            "taskset": [
                {
                    "layers": [[l.m_dim, l.k_dim, l.n_dim] for l in t.layers],
                    "period_cycles": t.period_cycles,
                    "release": t.release.value,
                }
                for t in self.tasks
            ],
            "dse": {
                "max_m": self.dse.max_m,
                "beam_width": self.dse.beam_width,
                "grid": self.dse.grid,
                "policy": _policy_name(self.dse.policy),
                "node_budget": self.dse.node_budget,
            },
            "sim": {
                "horizon_mult": self.sim.horizon_mult,
                "seeds": list(self.sim.seeds),
            },
            "sweep": {
                "points": self.sweep.points,
                "lo": self.sweep.lo,
                "hi": self.sweep.hi,
                "axes": (None if self.sweep.axes is None
                         else [list(a) for a in self.sweep.axes]),
                "methods": list(self.sweep.methods),
            },
            "output": self.output,
        }
        if self.platform.clock_mhz is not None:
            out["platform"]["clock_mhz"] = self.platform.clock_mhz
        return out

    def dumps(self) -> str:
        """Canonical YAML form; parsing it back yields an equal config."""
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _policy_name(policy: Policy) -> str:
    for name, p in POLICY_BY_NAME.items():
        if p is policy:
            return name
    return policy.value


# --------------------------------------------------------------------------
# Source-location bookkeeping


@dataclass(frozen=True)
class _Mark:
    line: int
    children: dict   # key (str|int) -> _Mark
    key_lines: dict  # key -> line of the key itself (mappings only)


def _marks(node) -> _Mark:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        children = {}
        key_lines = {}
        for k_node, v_node in node.value:
            children[k_node.value] = _marks(v_node)
            key_lines[k_node.value] = k_node.start_mark.line + 1
        return _Mark(line, children, key_lines)
    if isinstance(node, yaml.SequenceNode):
        return _Mark(line, {i: _marks(v) for i, v in enumerate(node.value)}, {})
    return _Mark(line, {}, {})


class _Src:
    """One config subtree: its value, source mark, dotted path, shared diags."""

    __slots__ = ("value", "mark", "path", "diags")

    def __init__(self, value, mark, path, diags):
        self.value = value
        self.mark = mark
        self.path = path
        self.diags = diags

    @property
    def line(self):
        return self.mark.line if self.mark else None

    def error(self, message, line=None):
        self.diags.append(Diagnostic(
            self.path, self.line if line is None else line, message))

    def child(self, key) -> "_Src":
        mark = self.mark.children.get(key) if self.mark else None
        if isinstance(key, int):
            path = f"{self.path}[{key}]"
        else:
            path = f"{self.path}.{key}" if self.path else key
        return _Src(self.value[key], mark, path, self.diags)

    # -- shape checks ------------------------------------------------------

    def check_keys(self, allowed) -> bool:
        if not isinstance(self.value, dict):
            self.error(f"expected a mapping, got {type(self.value).__name__}")
            return False
        for key in self.value:
            if key not in allowed:
                hint = get_close_matches(str(key), list(allowed), n=1)
                suffix = f" (did you mean {hint[0]!r}?)" if hint else ""
                line = self.mark.key_lines.get(key) if self.mark else None
                self.error(f"unknown key {key!r}{suffix}", line=line)
        return True

    def items(self):
        for i in range(len(self.value)):
            yield self.child(i)

    # -- typed getters -----------------------------------------------------

    def get_int(self, key, default=None, minimum=None, required=False):
        if key not in self.value:
            if required:
                self.error(f"missing required field {key!r}")
            return default
        sub = self.child(key)
        v = sub.value
        if isinstance(v, bool) or not isinstance(v, int):
            sub.error(f"expected an integer, got {v!r}")
            return default
        if minimum is not None and v < minimum:
            sub.error(f"must be >= {minimum}, got {v}")
            return default
        return v

    def get_number(self, key, default=None, positive=False):
        if key not in self.value:
            return default
        sub = self.child(key)
        v = sub.value
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            sub.error(f"expected a number, got {v!r}")
            return default
        if positive and v <= 0:
            sub.error(f"must be > 0, got {v}")
            return default
        return v

    def get_str(self, key, default=None, choices=None, required=False):
        if key not in self.value:
            if required:
                self.error(f"missing required field {key!r}")
            return default
        sub = self.child(key)
        v = sub.value
        if not isinstance(v, str):
            sub.error(f"expected a string, got {v!r}")
            return default
        if choices is not None and v not in choices:
            sub.error(f"must be one of {sorted(choices)}, got {v!r}")
            return default
        return v

    def get_list(self, key, required=False):
        if key not in self.value:
            if required:
                self.error(f"missing required field {key!r}")
            return None
        sub = self.child(key)
        if not isinstance(sub.value, list):
            sub.error(f"expected a list, got {type(sub.value).__name__}")
            return None
        return sub


# --------------------------------------------------------------------------
# Section parsers


_PLATFORM_KEYS = {"pe", "mem_words", "onchip_bw", "ddr_bw", "clock_mhz"}
_TASK_KEYS = {"layers", "period_cycles", "period_us", "release"}
_DSE_KEYS = {"max_m", "beam_width", "grid", "policy", "node_budget"}
_SIM_KEYS = {"horizon_mult", "seeds"}
_SWEEP_KEYS = {"points", "lo", "hi", "axes", "methods"}
_TOP_KEYS = {"platform", "taskset", "dse", "sim", "sweep", "output"}


def _parse_platform(src: _Src) -> PlatformConfig:
    if not src.check_keys(_PLATFORM_KEYS):
        return PlatformConfig(1, 6, 3, 1)
    # Budget components must be strictly positive: a zero component makes
    # every accelerator configuration unrepresentable.
    pe = src.get_int("pe", default=1, minimum=1, required=True)
    mem = src.get_int("mem_words", default=6, minimum=1, required=True)
    bw = src.get_int("onchip_bw", default=3, minimum=1, required=True)
    ddr = src.get_int("ddr_bw", default=1, minimum=1, required=True)
    clock = src.get_number("clock_mhz", positive=True)
    return PlatformConfig(pe, mem, bw, ddr, clock)


def _parse_layers(task_src: _Src) -> tuple:
    layers_src = task_src.get_list("layers", required=True)
    if layers_src is None:
        return ()
    layers = []
    for layer_src in layers_src.items():
        v = layer_src.value
        ok = (isinstance(v, list) and len(v) == 3
              and all(isinstance(d, int) and not isinstance(d, bool) for d in v))
        if not ok:
            layer_src.error(f"expected [M, K, N] integer triple, got {v!r}")
            continue
        if min(v) < 1:
            layer_src.error(f"layer dimensions must be >= 1, got {v}")
            continue
        layers.append(LayerShape(*v))
    if not layers:
        layers_src.error("task needs at least one layer")
    return tuple(layers)


def _parse_period(task_src: _Src, clock_mhz) -> int:
    has_cycles = "period_cycles" in task_src.value
    has_us = "period_us" in task_src.value
    if has_cycles and has_us:
        task_src.error("give exactly one of period_cycles / period_us, not both")
        return 1
    if not has_cycles and not has_us:
        task_src.error("missing required field: one of period_cycles / period_us")
        return 1
    if has_cycles:
        return task_src.get_int("period_cycles", default=1, minimum=1) or 1
    us = task_src.get_number("period_us", positive=True)
    if us is None:
        return 1
    sub = task_src.child("period_us")
    if clock_mhz is None:
        sub.error("period_us requires platform.clock_mhz")
        return 1
    # Exact decimal arithmetic: 2.5 us at 400 MHz is exactly 1000 cycles,
    # and anything fractional is rejected rather than silently rounded.
    cycles = Fraction(str(us)) * Fraction(str(clock_mhz))
    if cycles.denominator != 1:
        sub.error(f"{us} us at {clock_mhz} MHz is {float(cycles):g} cycles, "
                  f"not a whole number")
        return 1
    if cycles < 1:
        sub.error(f"{us} us at {clock_mhz} MHz is below one cycle")
        return 1
    return int(cycles)


def _parse_tasks(src: _Src, clock_mhz) -> tuple:
    tasks_src = src.get_list("taskset", required=True)
    if tasks_src is None:
        return ()
    tasks = []
    for task_src in tasks_src.items():
        if not task_src.check_keys(_TASK_KEYS):
            continue
        layers = _parse_layers(task_src)
        period = _parse_period(task_src, clock_mhz)
        release_name = task_src.get_str("release", default="periodic",
                                        choices=set(RELEASE_BY_NAME))
        release = RELEASE_BY_NAME.get(release_name, ReleaseModel.PERIODIC)
        if layers:
            tasks.append(TaskConfig(layers, period, release))
    if not tasks:
        tasks_src.error("taskset needs at least one task")
    return tuple(tasks)


def _parse_dse(src: _Src) -> DseConfig:
    if "dse" not in src.value:
        return DseConfig()
    sub = src.child("dse")
    if not sub.check_keys(_DSE_KEYS):
        return DseConfig()
    defaults = DseConfig()
    max_m = sub.get_int("max_m", default=defaults.max_m, minimum=2)
    if "beam_width" in sub.value and sub.value["beam_width"] is None:
        beam_width = None  # unbounded beam
    else:
        beam_width = sub.get_int("beam_width", default=defaults.beam_width,
                                 minimum=1)
    grid = sub.get_int("grid", default=defaults.grid, minimum=2)
    policy_name = sub.get_str("policy", default="fifo",
                              choices=set(POLICY_BY_NAME))
    node_budget = sub.get_int("node_budget", default=defaults.node_budget,
                              minimum=1)
    return DseConfig(max_m, beam_width, grid,
                     POLICY_BY_NAME.get(policy_name, Policy.FIFO_PIPELINED),
                     node_budget)


def _parse_sim(src: _Src) -> SimConfig:
    if "sim" not in src.value:
        return SimConfig()
    sub = src.child("sim")
    if not sub.check_keys(_SIM_KEYS):
        return SimConfig()
    defaults = SimConfig()
    horizon_mult = sub.get_int("horizon_mult", default=defaults.horizon_mult,
                               minimum=1)
    seeds = list(defaults.seeds)
    seeds_src = sub.get_list("seeds")
    if seeds_src is not None:
        seeds = []
        for seed_src in seeds_src.items():
            v = seed_src.value
            if isinstance(v, bool) or not isinstance(v, int):
                seed_src.error(f"expected an integer seed, got {v!r}")
                continue
            seeds.append(v)
        if not seeds:
            seeds_src.error("seeds must not be empty")
            seeds = list(defaults.seeds)
    return SimConfig(horizon_mult, tuple(seeds))


def _parse_sweep(src: _Src, num_tasks: int) -> SweepConfig:
    if "sweep" not in src.value:
        return SweepConfig()
    sub = src.child("sweep")
    if not sub.check_keys(_SWEEP_KEYS):
        return SweepConfig()
    defaults = SweepConfig()
    points = sub.get_int("points", default=defaults.points, minimum=1)
    lo = sub.get_number("lo", default=defaults.lo, positive=True)
    hi = sub.get_number("hi", default=defaults.hi, positive=True)
    if lo is not None and hi is not None and hi < lo:
        sub.error(f"sweep hi ({hi}) must be >= lo ({lo})")
        lo, hi = defaults.lo, defaults.hi
    axes = None
    if "axes" in sub.value and sub.value["axes"] is not None:
        axes_src = sub.get_list("axes")
        if axes_src is not None:
            parsed = []
            for axis_src in axes_src.items():
                v = axis_src.value
                ok = (isinstance(v, list) and v
                      and all(isinstance(r, (int, float))
                              and not isinstance(r, bool) and r > 0 for r in v))
                if not ok:
                    axis_src.error(f"expected a nonempty list of positive "
                                   f"ratios, got {v!r}")
                    continue
                parsed.append(tuple(float(r) for r in v))
            if parsed and len(parsed) != num_tasks:
                axes_src.error(f"need one ratio axis per task "
                               f"({num_tasks}), got {len(parsed)}")
            else:
                axes = tuple(parsed) if parsed else None
    methods = defaults.methods
    methods_src = sub.get_list("methods")
    if methods_src is not None:
        parsed = []
        for m_src in methods_src.items():
            v = m_src.value
            if v not in SWEEP_METHOD_NAMES:
                m_src.error(f"must be one of {list(SWEEP_METHOD_NAMES)}, "
                            f"got {v!r}")
            elif v in parsed:
                m_src.error(f"duplicate method {v!r}")
            else:
                parsed.append(v)
        if parsed:
            methods = tuple(parsed)
        else:
            methods_src.error("methods must not be empty")
    return SweepConfig(points, lo, hi, axes, methods)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate one config document.

    Raises ``ConfigError`` carrying every diagnostic found; each names the
    config path and the source line.
    """
    try:
        root_node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError([Diagnostic("", line, f"not valid YAML: {problem}")])
    if data is None:
        raise ConfigError([Diagnostic("", None, "config is empty")])
    diags = []
    src = _Src(data, _marks(root_node) if root_node else None, "", diags)
    if not src.check_keys(_TOP_KEYS):
        raise ConfigError(diags)

    if "platform" in data:
        platform = _parse_platform(src.child("platform"))
    else:
        src.error("missing required section 'platform'")
        platform = PlatformConfig(1, 6, 3, 1)
    tasks = _parse_tasks(src, platform.clock_mhz)
    dse = _parse_dse(src)
    sim = _parse_sim(src)
    sweep = _parse_sweep(src, len(tasks))
    output = src.get_str("output", default="out") or "out"

    if diags:
        raise ConfigError(diags)
    cfg = ExperimentConfig(platform, tasks, dse, sim, sweep, output)
    try:
        cfg.taskset()  # surfaces any model-level invariant the walk missed
    except ModelError as exc:
        raise ConfigError([Diagnostic("taskset", None, str(exc))])
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([Diagnostic("", None, f"cannot read config: {exc}")])
    return parse_config(text)


# --------------------------------------------------------------------------
# Design files (DesignPoint <-> structured text)


def write_design_yaml(design: DesignPoint, path) -> None:
    """Emit a design as YAML that ``load_design`` (and thus `simulate`) accepts."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(design.to_dict(), fh, sort_keys=False)


def design_from_dict(data: dict, ts: TaskSet) -> DesignPoint:
    """Rebuild a DesignPoint from its serialized form.

    Utilizations are recomputed against the given task set rather than
    trusted from the file, so a design written during a sweep can be
    re-simulated under different periods.
    """
    def fail(path, message):
        raise ConfigError([Diagnostic(path, None, message)])

    if not isinstance(data, dict):
        fail("", f"design must be a mapping, got {type(data).__name__}")
    for key in data:
        if key not in ("policy", "accelerators", "mapping", "utilizations"):
            fail(key, f"unknown design key {key!r}")
    policy_name = data.get("policy")
    if policy_name not in POLICY_BY_NAME:
        fail("policy", f"must be one of {sorted(POLICY_BY_NAME)}, "
                       f"got {policy_name!r}")
    accs_data = data.get("accelerators")
    if not isinstance(accs_data, list) or not accs_data:
        fail("accelerators", "need a nonempty list of accelerators")
    accs = []
    for i, entry in enumerate(accs_data):
        path = f"accelerators[{i}]"
        if not isinstance(entry, dict):
            fail(path, "each accelerator must be a mapping")
        pe = entry.get("pe")
        tile = entry.get("tile")
        alloc = entry.get("allocated")
        if (not isinstance(pe, list) or len(pe) != 3
                or not isinstance(tile, list) or len(tile) != 3):
            fail(path, "need pe: [A,B,C] and tile: [X,Y,Z]")
        if not isinstance(alloc, dict):
            fail(path, "need allocated: {pe, mem_words, onchip_bw, ddr_bw}")
        try:
            allocated = ResourceVector(
                alloc.get("pe", 0), alloc.get("mem_words", 0),
                alloc.get("onchip_bw", 0), alloc.get("ddr_bw", 0))
            accs.append(AcceleratorConfig(*pe, *tile, allocated=allocated))
        except (ModelError, TypeError) as exc:
            fail(path, str(exc))
    mapping_data = data.get("mapping")
    if (not isinstance(mapping_data, list)
            or not all(isinstance(row, list) for row in mapping_data)):
        fail("mapping", "mapping must be a list of per-task count rows")
    try:
        return make_design_point(accs, Mapping(tuple(tuple(r) for r in mapping_data)),
                                 POLICY_BY_NAME[policy_name], ts)
    except ModelError as exc:
        fail("mapping", str(exc))


def load_design(path, ts: TaskSet) -> DesignPoint:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError([Diagnostic("", None, f"cannot read design: {exc}")])
    except yaml.YAMLError as exc:
        raise ConfigError([Diagnostic("", None, f"design is not valid YAML: {exc}")])
    return design_from_dict(data, ts)
