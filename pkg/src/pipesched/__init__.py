"""Latency modeling, schedulability-guided DSE, and discrete-event
simulation for chains of tiled matrix-multiply accelerators."""

__version__ = "0.1.0"

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
    TileCosts,
    layer_latency,
    resource_cost,
    tile_costs,
    validate_mapping,
)
from .schedulability import (
    Confidence,
    SchedVerdict,
    SegmentWcet,
    UtilizationProfile,
    accelerator_utilization,
    make_design_point,
    max_utilization,
    schedulability_verdict,
    segment_wcet,
    srt_schedulable,
    utilization_profile,
)
from .dse import (
    DseResult,
    SearchBudgetExceeded,
    SearchCounters,
    WorkSlice,
    beam_search,
    brute_force_dse,
    children_bound,
    create_acc,
    parents_bound,
    single_accelerator_design,
    throughput_guided_dse,
)
from .sim import (
    DivergenceReport,
    LayerPlan,
    LegPlan,
    PreemptionRecord,
    SimTrace,
    SimulationError,
    TraceEvent,
    build_leg_plans,
    detect_divergence,
    isolated_response,
    periodic_release_sequence,
    preemption_overheads,
    simulate,
    simulate_plans,
    sporadic_release_sequence,
    verify_trace,
)
from .analysis import (
    BeamQualityRow,
    CellResult,
    FeasibilityGrid,
    PolicyRun,
    ResponseStats,
    beam_quality_study,
    compare_policies,
    default_ratio_axis,
    period_sweep,
    reference_periods,
    winners_by_max_response,
    write_beam_csv,
    write_response_csv,
    write_sweep_csv,
)
from .config import (
    ConfigError,
    Diagnostic,
    DseConfig,
    ExperimentConfig,
    PlatformConfig,
    SimConfig,
    SweepConfig,
    TaskConfig,
    design_from_dict,
    load_config,
    load_design,
    parse_config,
    write_design_yaml,
)

__all__ = [name for name in dir() if not name.startswith("_")]
