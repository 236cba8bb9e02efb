"""Coverage-validity-aware linear surrogates and robust recourse.

Fits linear surrogates of a black-box classifier's local decision
boundary that balance coverage of the favorable class against validity
for the unfavorable one, hardens them against covariance shift via
divergence ambiguity sets, and generates low-cost recourses evaluated
against current and retrained future models.
"""

from .blackbox import (
    MlpModel,
    TrainConfig,
    generate_synthetic,
    load_model,
    predict,
    save_model,
    simulate_future_models,
    train_mlp,
)
from .errors import (
    BadLabelValue,
    CvasError,
    DegenerateSample,
    DimensionMismatch,
    DomainError,
    EmptyInput,
    EmptySplit,
    IdenticalMeans,
    NegativeRadius,
    NoActionableRecourse,
    NonFiniteInput,
    NoOppositeClassPrototypes,
    NoValidRecourse,
    SchemaMismatch,
    SingleClassData,
    SingularCovariance,
    SolverDidNotConverge,
    TooFewSamples,
    ZeroSlope,
)
from .evalharness import (
    EvalConfig,
    EvalReport,
    EvalRow,
    local_fidelity,
    pareto_frontier,
    sensitivity,
    sweep,
    validity_metrics,
)
from .moments import (
    ClassMoments,
    condition_number,
    estimate_moments,
    halfspace_distance,
)
from .recourse import (
    ActionSpec,
    RecourseResult,
    actionable_recourse,
    default_action_grids,
    fit_surrogate,
    generate_recourse,
    l1_projection,
    wachter_recourse,
)
from .sampler import (
    BoundarySample,
    SamplerConfig,
    find_boundary_point,
    max_pairwise_distance,
    sample_ball,
    synthesize,
)
from .surrogate import (
    AsymptoticFamily,
    Divergence,
    DivergenceKind,
    Surrogate,
    asymptotic_surrogate,
    coverage_validity,
    fr_worst_case_covariance,
    lambert_w_minus1,
    load_surrogate,
    optimal_mean,
    save_surrogate,
    solve_cvas,
    tau,
    worst_case_misclassification,
)

__version__ = "0.1.0"

__all__ = [
    "ActionSpec",
    "AsymptoticFamily",
    "BadLabelValue",
    "BoundarySample",
    "ClassMoments",
    "CvasError",
    "DegenerateSample",
    "DimensionMismatch",
    "Divergence",
    "DivergenceKind",
    "DomainError",
    "EmptyInput",
    "EmptySplit",
    "EvalConfig",
    "EvalReport",
    "EvalRow",
    "IdenticalMeans",
    "MlpModel",
    "NegativeRadius",
    "NoActionableRecourse",
    "NoOppositeClassPrototypes",
    "NoValidRecourse",
    "NonFiniteInput",
    "RecourseResult",
    "SamplerConfig",
    "SchemaMismatch",
    "SingleClassData",
    "SingularCovariance",
    "SolverDidNotConverge",
    "Surrogate",
    "TooFewSamples",
    "TrainConfig",
    "ZeroSlope",
    "actionable_recourse",
    "asymptotic_surrogate",
    "condition_number",
    "coverage_validity",
    "default_action_grids",
    "estimate_moments",
    "find_boundary_point",
    "fit_surrogate",
    "fr_worst_case_covariance",
    "generate_recourse",
    "generate_synthetic",
    "halfspace_distance",
    "l1_projection",
    "lambert_w_minus1",
    "load_model",
    "load_surrogate",
    "local_fidelity",
    "max_pairwise_distance",
    "optimal_mean",
    "pareto_frontier",
    "predict",
    "sample_ball",
    "save_model",
    "save_surrogate",
    "sensitivity",
    "simulate_future_models",
    "solve_cvas",
    "sweep",
    "synthesize",
    "tau",
    "train_mlp",
    "validity_metrics",
    "wachter_recourse",
    "worst_case_misclassification",
]
