"""Clonal interference toolkit.

Event-driven simulation of a system of interacting fitness trajectories,
its finite-population Moran counterpart, linear birth-death oracles, and
renewal-based estimators of the speed of adaptation.
"""

from .analysis import (
    CouplingResult,
    FcltDiagnostic,
    FixationFlags,
    FixationReport,
    HighMutationResult,
    MispredictionFixture,
    RenewalRecord,
    SpeedEstimate,
    classify_fixation,
    coupled_run,
    detect_renewals,
    fclt_diagnostic,
    glh_speed,
    graph_distance,
    heuristic_speed,
    high_mutation_limit,
    high_mutation_probe,
    infinite_mean_probe,
    pointmass_speed,
    rgl_retention,
    rglh_misprediction_fixture,
    rglh_speed,
    sample_renewal_cycles,
    speed_estimate,
    sup_distance,
    write_cycles_csv,
)
from .branching import GwParams, GwRun, gamblers_ruin, gw_run, gw_survival_formula
from .inputs import (
    ContenderLaw,
    Exponential,
    IncrementDistribution,
    InputEvent,
    Mixture,
    Pareto,
    PointMass,
    Uniform,
    contender_params,
    parse_distribution,
    sample_contender_stream,
    sample_increment,
    sample_input_stream,
    survival_prob,
)
from .moran import (
    ContenderIndicator,
    LogFrequencyTrace,
    MoranResult,
    MoranState,
    mean_fitness,
    moran_init,
    moran_run,
    moran_step,
    write_trace_csv,
)
from .pit import (
    CHECK_TOL,
    SLOPE_EPS,
    TIME_EPS,
    ConfigurationError,
    GenealogyTree,
    ImmigrationEntry,
    InvariantViolation,
    PiecewisePath,
    PitEvent,
    PitPeek,
    PitState,
    StartEntry,
    StepPath,
    Trajectory,
    write_event_csv,
    write_trajectories_jsonl,
)
from .rng import UniformBuffer, as_generator, replicate_rng

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # input process
    "IncrementDistribution",
    "PointMass",
    "Uniform",
    "Exponential",
    "Pareto",
    "Mixture",
    "parse_distribution",
    "survival_prob",
    "InputEvent",
    "ContenderLaw",
    "contender_params",
    "sample_increment",
    "sample_input_stream",
    "sample_contender_stream",
    # trajectory system
    "TIME_EPS",
    "SLOPE_EPS",
    "CHECK_TOL",
    "ConfigurationError",
    "InvariantViolation",
    "StartEntry",
    "ImmigrationEntry",
    "Trajectory",
    "PitEvent",
    "PitPeek",
    "GenealogyTree",
    "StepPath",
    "PiecewisePath",
    "PitState",
    "write_event_csv",
    "write_trajectories_jsonl",
    # finite population
    "MoranState",
    "ContenderIndicator",
    "LogFrequencyTrace",
    "MoranResult",
    "moran_init",
    "moran_step",
    "moran_run",
    "mean_fitness",
    "write_trace_csv",
    # branching oracle
    "GwParams",
    "GwRun",
    "gw_survival_formula",
    "gamblers_ruin",
    "gw_run",
    # analysis
    "RenewalRecord",
    "SpeedEstimate",
    "FcltDiagnostic",
    "FixationFlags",
    "FixationReport",
    "MispredictionFixture",
    "HighMutationResult",
    "CouplingResult",
    "pointmass_speed",
    "detect_renewals",
    "speed_estimate",
    "sample_renewal_cycles",
    "fclt_diagnostic",
    "heuristic_speed",
    "glh_speed",
    "rglh_speed",
    "rgl_retention",
    "rglh_misprediction_fixture",
    "classify_fixation",
    "sup_distance",
    "coupled_run",
    "graph_distance",
    "infinite_mean_probe",
    "high_mutation_limit",
    "high_mutation_probe",
    "write_cycles_csv",
    # reproducibility
    "as_generator",
    "replicate_rng",
    "UniformBuffer",
]
